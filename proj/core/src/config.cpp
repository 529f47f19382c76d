#include "usc/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>

#include "usc/errors.hpp"
#include "usc/rng.hpp"

namespace usc {

using nlohmann::json;

namespace {

// Reads fields of one JSON object, remembering which keys were used so the
// leftovers can be rejected by name.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    used_.insert(key);
    read(*it, out, field(key));
  }

  Section child(const char* key) {
    used_.insert(key);
    const auto it = j_.find(key);
    static const json empty = json::object();
    return Section(it == j_.end() ? empty : *it, field(key));
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown key '" + field(k.c_str()) + "'");
    }
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }

  static void read(const json& v, double& out, const std::string& name) {
    if (!v.is_number()) throw ConfigError("'" + name + "' must be a number");
    out = v.get<double>();
  }
  static void read(const json& v, int& out, const std::string& name) {
    if (!v.is_number_integer()) throw ConfigError("'" + name + "' must be an integer");
    const auto x = v.get<long long>();
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("'" + name + "' is out of range");
    out = static_cast<int>(x);
  }
  static void read(const json& v, long& out, const std::string& name) {
    if (!v.is_number_integer()) throw ConfigError("'" + name + "' must be an integer");
    out = v.get<long>();
  }
  static void read(const json& v, std::size_t& out, const std::string& name) {
    if (!v.is_number_unsigned()) throw ConfigError("'" + name + "' must be a nonnegative integer");
    out = v.get<std::size_t>();
  }
  static void read(const json& v, bool& out, const std::string& name) {
    if (!v.is_boolean()) throw ConfigError("'" + name + "' must be true or false");
    out = v.get<bool>();
  }
  static void read(const json& v, std::string& out, const std::string& name) {
    if (!v.is_string()) throw ConfigError("'" + name + "' must be a string");
    out = v.get<std::string>();
  }
  static void read(const json& v, std::vector<int>& out, const std::string& name) {
    if (!v.is_array()) throw ConfigError("'" + name + "' must be an array of integers");
    out.clear();
    for (const auto& e : v) {
      int x = 0;
      read(e, x, name);
      out.push_back(x);
    }
  }
  static void read(const json& v, std::vector<std::uint64_t>& out, const std::string& name) {
    if (!v.is_array()) throw ConfigError("'" + name + "' must be an array of seeds");
    out.clear();
    for (const auto& e : v) {
      std::uint64_t x = 0;
      if (!e.is_number_unsigned()) throw ConfigError("'" + name + "' entries must be u64");
      x = e.get<std::uint64_t>();
      out.push_back(x);
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

// Rethrows validation failures with the section prefix.
template <class F>
void validate_in(const std::string& section, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    throw ConfigError(section + "." + e.what());
  }
}

std::string scope_name(const std::optional<InfluenceScope>& s) {
  if (!s) return "auto";
  return *s == InfluenceScope::full_parameters ? "full" : "last_layer";
}

std::optional<InfluenceScope> scope_from_name(const std::string& s) {
  if (s == "auto") return std::nullopt;
  if (s == "full") return InfluenceScope::full_parameters;
  if (s == "last_layer") return InfluenceScope::last_layer;
  throw ConfigError("'agent.influence_scope' must be auto, full or last_layer");
}

}  // namespace

json to_json(const EnvConfig& env) {
  const auto& p = env.point_goal;
  const auto& v = env.velocity_limit;
  return {{"family", std::string(to_string(env.family))},
          {"gamma", env.gamma},
          {"horizon", env.horizon},
          {"budget", env.budget},
          {"point_goal",
           {{"half_width", p.half_width},
            {"hazards", p.hazards},
            {"hazard_radius", p.hazard_radius},
            {"goal_radius", p.goal_radius},
            {"contact_cost", p.contact_cost},
            {"shaping", p.shaping},
            {"goal_bonus", p.goal_bonus},
            {"max_speed", p.max_speed},
            {"clearance", p.clearance}}},
          {"velocity_limit",
           {{"velocity_threshold", v.velocity_threshold},
            {"violation_cost", v.violation_cost},
            {"damping", v.damping},
            {"acceleration", v.acceleration},
            {"dt", v.dt}}}};
}

namespace {

EnvConfig read_env(Section s) {
  EnvConfig env;
  std::string family(to_string(env.family));
  s.get("family", family);
  try {
    env.family = env_family_from_string(family);
  } catch (const Error& e) {
    throw ConfigError(std::string("environment.family: ") + e.what());
  }
  s.get("gamma", env.gamma);
  s.get("horizon", env.horizon);
  s.get("budget", env.budget);
  {
    Section p = s.child("point_goal");
    auto& c = env.point_goal;
    p.get("half_width", c.half_width);
    p.get("hazards", c.hazards);
    p.get("hazard_radius", c.hazard_radius);
    p.get("goal_radius", c.goal_radius);
    p.get("contact_cost", c.contact_cost);
    p.get("shaping", c.shaping);
    p.get("goal_bonus", c.goal_bonus);
    p.get("max_speed", c.max_speed);
    p.get("clearance", c.clearance);
    p.finish();
  }
  {
    Section v = s.child("velocity_limit");
    auto& c = env.velocity_limit;
    v.get("velocity_threshold", c.velocity_threshold);
    v.get("violation_cost", c.violation_cost);
    v.get("damping", c.damping);
    v.get("acceleration", c.acceleration);
    v.get("dt", c.dt);
    v.finish();
  }
  s.finish();
  validate_in("environment", [&] { env.validate(); });
  return env;
}

}  // namespace

EnvConfig env_config_from_json(const json& j) { return read_env(Section(j, "environment")); }

json to_json(const AgentConfig& a) {
  return {{"kind", std::string(to_string(a.method))},
          {"hidden", a.hidden},
          {"safety_output", std::string(to_string(a.safety_output))},
          {"actor_lr", a.actor_lr},
          {"critic_lr", a.critic_lr},
          {"safety_lr", a.safety_lr},
          {"dual_lr", a.dual_lr},
          {"lambda_init", a.lambda_init},
          {"batch_size", a.batch_size},
          {"buffer_capacity", a.buffer_capacity},
          {"tau", a.tau},
          {"ou_sigma", a.ou_sigma},
          {"ou_theta", a.ou_theta},
          {"safe_tolerance", a.safe_tolerance},
          {"screen_samples", a.screen_samples},
          {"gn_damping", a.gn_damping},
          {"influence_scope", scope_name(a.influence_scope)},
          {"kl_coef", a.kl_coef},
          {"policy_sigma", a.policy_sigma},
          {"alt_actions", a.alt_actions},
          {"lse_eps", a.lse_eps},
          {"top_n", a.top_n},
          {"neighbours", a.neighbours},
          {"trust_beta", a.trust_beta},
          {"trust_eps", a.trust_eps},
          {"warmup_batches", a.warmup_batches},
          {"refine_target", a.refine_target == RefineTarget::bellman ? "bellman" : "immediate"}};
}

namespace {

void read_agent_fields(Section& s, AgentConfig& a) {
  std::string kind(to_string(a.method));
  s.get("kind", kind);
  try {
    a.method = method_from_string(kind);
  } catch (const Error& e) {
    throw ConfigError(std::string("agent.kind: ") + e.what());
  }
  s.get("hidden", a.hidden);
  std::string out(to_string(a.safety_output));
  s.get("safety_output", out);
  try {
    a.safety_output = activation_from_string(out);
  } catch (const Error& e) {
    throw ConfigError(std::string("agent.safety_output: ") + e.what());
  }
  s.get("actor_lr", a.actor_lr);
  s.get("critic_lr", a.critic_lr);
  s.get("safety_lr", a.safety_lr);
  s.get("dual_lr", a.dual_lr);
  s.get("lambda_init", a.lambda_init);
  s.get("batch_size", a.batch_size);
  s.get("buffer_capacity", a.buffer_capacity);
  s.get("tau", a.tau);
  s.get("ou_sigma", a.ou_sigma);
  s.get("ou_theta", a.ou_theta);
  s.get("safe_tolerance", a.safe_tolerance);
  s.get("screen_samples", a.screen_samples);
  s.get("gn_damping", a.gn_damping);
  std::string scope = scope_name(a.influence_scope);
  s.get("influence_scope", scope);
  a.influence_scope = scope_from_name(scope);
  s.get("kl_coef", a.kl_coef);
  s.get("policy_sigma", a.policy_sigma);
  s.get("alt_actions", a.alt_actions);
  s.get("lse_eps", a.lse_eps);
  s.get("top_n", a.top_n);
  s.get("neighbours", a.neighbours);
  s.get("trust_beta", a.trust_beta);
  s.get("trust_eps", a.trust_eps);
  s.get("warmup_batches", a.warmup_batches);
  std::string target = a.refine_target == RefineTarget::bellman ? "bellman" : "immediate";
  s.get("refine_target", target);
  if (target == "bellman") {
    a.refine_target = RefineTarget::bellman;
  } else if (target == "immediate") {
    a.refine_target = RefineTarget::immediate;
  } else {
    throw ConfigError("'agent.refine_target' must be bellman or immediate");
  }
}

}  // namespace

AgentConfig agent_config_from_json(const json& j) {
  Section s(j, "agent");
  AgentConfig a;
  read_agent_fields(s, a);
  s.finish();
  a.validate();
  return a;
}

void EvaluationConfig::validate() const {
  if (deploy_episodes < 0) throw ConfigError("evaluation.deploy_episodes must be >= 0");
  if (calibration_episodes < 0) throw ConfigError("evaluation.calibration_episodes must be >= 0");
  if (calibration_reference < 1) throw ConfigError("evaluation.calibration_reference must be >= 1");
  if (reliability_bins < 1) throw ConfigError("evaluation.reliability_bins must be >= 1");
  if (map_resolution < 3) throw ConfigError("evaluation.map_resolution must be >= 3");
  validate_in("evaluation.theorem1", [&] { theorem.validate(); });
}

void RunConfig::validate() const {
  validate_in("environment", [&] { environment.validate(); });
  agent.validate();
  if (max_episodes < 0) throw ConfigError("agent.max_episodes must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("agent.checkpoint_every must be >= 0");
  evaluation.validate();
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

json to_json(const RunConfig& cfg) {
  json agent = to_json(cfg.agent);
  agent["max_episodes"] = cfg.max_episodes;
  agent["checkpoint_every"] = cfg.checkpoint_every;
  agent["step_log"] = cfg.step_log;
  const auto& e = cfg.evaluation;
  const auto& t = e.theorem;
  return {{"environment", to_json(cfg.environment)},
          {"agent", agent},
          {"evaluation",
           {{"deploy_episodes", e.deploy_episodes},
            {"calibration_episodes", e.calibration_episodes},
            {"calibration_reference", e.calibration_reference},
            {"reliability_bins", e.reliability_bins},
            {"map_resolution", e.map_resolution},
            {"map_action", e.map_action == MapAction::policy ? "policy" : "probe_min"},
            {"map_layout_seed", e.map_layout_seed},
            {"theorem1",
             {{"p_pi", t.p_pi},
              {"p_unif", t.p_unif},
              {"m", t.m},
              {"tau", t.tau},
              {"lower", t.lower},
              {"upper", t.upper},
              {"temperature", t.temperature},
              {"draws", t.draws}}}}},
          {"seeds", cfg.seeds},
          {"output_dir", cfg.output_dir}};
}

RunConfig config_from_json(const json& doc) {
  Section root(doc, "");
  RunConfig cfg;
  cfg.environment = read_env(root.child("environment"));
  {
    Section a = root.child("agent");
    read_agent_fields(a, cfg.agent);
    a.get("max_episodes", cfg.max_episodes);
    a.get("checkpoint_every", cfg.checkpoint_every);
    a.get("step_log", cfg.step_log);
    a.finish();
  }
  {
    Section e = root.child("evaluation");
    auto& ev = cfg.evaluation;
    e.get("deploy_episodes", ev.deploy_episodes);
    e.get("calibration_episodes", ev.calibration_episodes);
    e.get("calibration_reference", ev.calibration_reference);
    e.get("reliability_bins", ev.reliability_bins);
    e.get("map_resolution", ev.map_resolution);
    std::string action = ev.map_action == MapAction::policy ? "policy" : "probe_min";
    e.get("map_action", action);
    if (action == "policy") {
      ev.map_action = MapAction::policy;
    } else if (action == "probe_min") {
      ev.map_action = MapAction::probe_min;
    } else {
      throw ConfigError("'evaluation.map_action' must be policy or probe_min");
    }
    e.get("map_layout_seed", ev.map_layout_seed);
    Section t = e.child("theorem1");
    t.get("p_pi", ev.theorem.p_pi);
    t.get("p_unif", ev.theorem.p_unif);
    t.get("m", ev.theorem.m);
    t.get("tau", ev.theorem.tau);
    t.get("lower", ev.theorem.lower);
    t.get("upper", ev.theorem.upper);
    t.get("temperature", ev.theorem.temperature);
    t.get("draws", ev.theorem.draws);
    t.finish();
    e.finish();
  }
  root.get("seeds", cfg.seeds);
  root.get("output_dir", cfg.output_dir);
  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig parse_config(std::string_view text) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a 1-based line and column.
    const std::size_t pos = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < pos; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("parse error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  return config_from_json(doc);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read configuration file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const RunConfig& cfg) {
  json doc = to_json(cfg);
  doc.erase("seeds");
  doc.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return buf;
}

std::string run_directory_name(const RunConfig& cfg, std::uint64_t seed) {
  return std::string(to_string(cfg.agent.method)) + "-" + config_hash(cfg).substr(0, 8) +
         "-seed" + std::to_string(seed);
}

}  // namespace usc
