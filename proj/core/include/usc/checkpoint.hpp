#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>

#include "usc/diffnet.hpp"

namespace usc {

/// Text checkpoint format version; bump on any incompatible layout change.
inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

/// Flat parameters are written as JSON numbers, which serialize doubles with
/// shortest round-trip precision, so reload is bit-exact.
nlohmann::json to_json(const NetworkParameters& params);
NetworkParameters parameters_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j);

std::vector<double> to_vector(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace usc
