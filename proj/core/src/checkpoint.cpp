#include "usc/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "usc/errors.hpp"

namespace usc {

nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json acts = nlohmann::json::array();
  for (auto a : spec.activations) acts.push_back(std::string(to_string(a)));
  return {{"layer_sizes", spec.layer_sizes}, {"activations", acts}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec spec;
    spec.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    for (const auto& a : j.at("activations")) {
      spec.activations.push_back(activation_from_string(a.get<std::string>()));
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("malformed network spec: ") + e.what());
  }
}

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                           static_cast<Eigen::Index>(values.size()));
}

nlohmann::json to_json(const NetworkParameters& params) {
  return {{"spec", to_json(params.spec())}, {"flat", to_vector(params.flat())}};
}

NetworkParameters parameters_from_json(const nlohmann::json& j) {
  try {
    return NetworkParameters(spec_from_json(j.at("spec")), vector_from_json(j.at("flat")));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("malformed network parameters: ") + e.what());
  }
}

nlohmann::json to_json(const AdamState& state) {
  return {{"m", to_vector(state.m)},   {"v", to_vector(state.v)},
          {"step", state.step},        {"beta1", state.beta1},
          {"beta2", state.beta2},      {"eps", state.eps}};
}

AdamState adam_from_json(const nlohmann::json& j) {
  try {
    AdamState s;
    s.m = vector_from_json(j.at("m"));
    s.v = vector_from_json(j.at("v"));
    s.step = j.at("step").get<long>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.eps = j.at("eps").get<double>();
    if (s.m.size() != s.v.size()) throw InvalidInputError("adam moment lengths differ");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("malformed optimizer state: ") + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw StateError("cannot open " + path.string() + " for writing");
  out << doc.dump(1) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInputError(path.string() + ": " + e.what());
  }
}

}  // namespace usc
