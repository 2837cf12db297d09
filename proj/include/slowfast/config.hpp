#pragma once

// Run configuration: INI-style "key = value" text with optional sections
// [model], [run], [averaging]. Keys may also appear before any section.
//
//   model = heat_example
//   r1 = 0.1
//   r2 = 0.1
//   n_modes = 32

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"

#include "slowfast/averaging.hpp"
#include "slowfast/errors.hpp"
#include "slowfast/expression.hpp"
#include "slowfast/model.hpp"
#include "slowfast/simulator.hpp"

namespace slowfast {

struct RunConfig {
  std::string model_name = "heat_example";
  double r1 = 0.1;
  double r2 = 0.1;
  ModelConfig model;
  double theta = 0.55;
  std::uint64_t seed = 1;
  double eps = 0.01;
  double horizon = 1.0;
  StepScheme scheme{1e-3, 0.1};
  AveragingParams averaging;
  std::size_t n_mc = 0;  // 0: the experiment's own default
  unsigned threads = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    auto& m = j["model"];
    m["model"] = model_name;
    m["r1"] = r1;
    m["r2"] = r2;
    m["n_modes"] = model.n_modes;
    m["m_points"] = model.m_points;
    m["theta"] = theta;
    m["lambda_scale"] = model.eigs.scale();
    m["lambda_growth"] = model.eigs.growth();
    m["q1_amplitude"] = model.q1.amplitude;
    m["q2_amplitude"] = model.q2.amplitude;
    m["drift_b"] = model.drift_b_expr;
    m["drift_f"] = model.drift_f_expr;
    m["alpha"] = model.alpha;
    m["beta"] = model.beta;
    m["gamma"] = model.gamma;
    m["l_f"] = model.l_f;
    m["bound_b"] = model.bound_b;
    m["bound_f"] = model.bound_f;
    m["constants"] = model.constants_note;
    auto& r = j["run"];
    r["seed"] = seed;
    r["eps"] = eps;
    r["T"] = horizon;
    r["dt"] = scheme.dt_macro;
    r["fast_substep_factor"] = scheme.fast_substep_factor;
    r["n_mc"] = n_mc;
    r["threads"] = threads;
    auto& a = j["averaging"];
    a["Tb"] = averaging.burn_in;
    a["Ta"] = averaging.avg_time;
    a["avg_dt"] = averaging.dt;
    a["replicas"] = averaging.replicas;
    a["strategy"] = averaging.strategy == AveragingStrategy::time_average ? "time_average"
                                                                          : "ensemble";
    return j;
  }
};

namespace detail {

// key -> section
inline const std::map<std::string, std::string>& config_schema() {
  static const std::map<std::string, std::string> schema = {
      {"model", "model"},       {"r1", "model"},           {"r2", "model"},
      {"n_modes", "model"},     {"m_points", "model"},     {"theta", "model"},
      {"drift_b", "model"},     {"drift_f", "model"},      {"alpha", "model"},
      {"beta", "model"},        {"gamma", "model"},        {"l_f", "model"},
      {"bound_b", "model"},     {"bound_f", "model"},      {"lambda_scale", "model"},
      {"lambda_growth", "model"}, {"q1_amplitude", "model"}, {"q2_amplitude", "model"},
      {"seed", "run"},          {"eps", "run"},            {"T", "run"},
      {"dt", "run"},            {"fast_substep_factor", "run"}, {"n_mc", "run"},
      {"threads", "run"},       {"Tb", "averaging"},       {"Ta", "averaging"},
      {"avg_dt", "averaging"},  {"replicas", "averaging"}, {"strategy", "averaging"},
  };
  return schema;
}

class KeyValues {
 public:
  void set(const std::string& key, const std::string& value) {
    if (values_.count(key)) throw ConfigError("config key '" + key + "' given twice");
    values_[key] = value;
  }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& raw(const std::string& key) const { return values_.at(key); }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = raw(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + s + "' is not a finite number");
    }
  }
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = raw(key);
    try {
      std::size_t used = 0;
      if (s.empty() || s[0] == '-') throw std::invalid_argument(s);
      const unsigned long long v = std::stoull(s, &used, 10);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': '" + s + "' is not a nonnegative integer");
    }
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
  }

 private:
  std::map<std::string, std::string> values_;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string t = s.substr(b, e - b + 1);
  if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
  return t;
}

inline void require_range(const std::string& key, double v, bool ok, const std::string& range) {
  if (!ok) {
    std::ostringstream msg;
    msg << "config key '" << key << "' = " << v << " is outside " << range;
    throw ConfigError(msg.str());
  }
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " at line " +
                      std::to_string(e.line()));
  }
  const auto& schema = detail::config_schema();
  detail::KeyValues kv;
  auto take = [&](const std::string& key, const std::string& value, const std::string& section) {
    const auto it = schema.find(key);
    if (it == schema.end()) throw ConfigError("unknown config key '" + key + "'");
    if (!section.empty() && it->second != section)
      throw ConfigError("config key '" + key + "' belongs in section [" + it->second + "], not [" +
                        section + "]");
    kv.set(key, detail::trim(value));
  };
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      take(name, node.data(), "");
      continue;
    }
    if (name != "model" && name != "run" && name != "averaging")
      throw ConfigError("unknown config section [" + name + "]");
    for (const auto& [key, leaf] : node) take(key, leaf.data(), name);
  }

  RunConfig rc;
  rc.model_name = kv.text("model", "heat_example");
  rc.r1 = kv.number("r1", 0.1);
  rc.r2 = kv.number("r2", 0.1);
  const auto n_modes = static_cast<std::size_t>(kv.integer("n_modes", 32));
  if (n_modes == 0) throw ConfigError("config key 'n_modes' must be >= 1");
  if (rc.model_name == "heat_example") {
    for (const char* k : {"drift_b", "drift_f", "alpha", "beta", "gamma", "l_f", "bound_b",
                          "bound_f", "lambda_scale", "lambda_growth", "q1_amplitude", "q2_amplitude"})
      if (kv.has(k))
        throw ConfigError(std::string("config key '") + k + "' only applies to model = custom");
    try {
      rc.model = heat_example(rc.r1, rc.r2, n_modes);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config key ") + e.what());
    }
  } else if (rc.model_name == "custom") {
    for (const char* k : {"drift_b", "drift_f", "l_f", "bound_b", "bound_f"})
      if (!kv.has(k)) throw ConfigError(std::string("model = custom requires key '") + k + "'");
    ModelConfig& m = rc.model;
    m.name = "custom";
    const double scale = kv.number("lambda_scale", 1.0), growth = kv.number("lambda_growth", 2.0);
    detail::require_range("lambda_scale", scale, scale > 0.0, "(0, inf)");
    detail::require_range("lambda_growth", growth, growth >= 0.0, "[0, inf)");
    m.eigs = OperatorSpectrum(scale, growth);
    m.q1 = {kv.number("q1_amplitude", 1.0), rc.r1};
    m.q2 = {kv.number("q2_amplitude", 1.0), rc.r2};
    detail::require_range("q1_amplitude", m.q1.amplitude, m.q1.amplitude >= 0.0, "[0, inf)");
    detail::require_range("q2_amplitude", m.q2.amplitude, m.q2.amplitude >= 0.0, "[0, inf)");
    m.drift_b_expr = kv.raw("drift_b");
    m.drift_f_expr = kv.raw("drift_f");
    m.drift_b = parse_expression(m.drift_b_expr);
    m.drift_f = parse_expression(m.drift_f_expr);
    m.alpha = kv.number("alpha", 1.0);
    m.beta = kv.number("beta", 1.0);
    m.gamma = kv.number("gamma", 1.0);
    m.l_f = kv.number("l_f", 0.0);
    m.bound_b = kv.number("bound_b", 1.0);
    m.bound_f = kv.number("bound_f", 1.0);
    m.n_modes = n_modes;
    m.m_points = 2 * n_modes;
  } else {
    throw ConfigError("config key 'model' = '" + rc.model_name +
                      "' is not one of heat_example, custom");
  }
  if (kv.has("m_points")) rc.model.m_points = static_cast<std::size_t>(kv.integer("m_points", 0));
  if (rc.model.m_points < rc.model.n_modes)
    throw ConfigError("config key 'm_points' must be >= n_modes");
  rc.model.validate();

  rc.theta = kv.number("theta", 0.55);
  detail::require_range("theta", rc.theta, rc.theta > 0.0 && rc.theta < 1.0, "(0, 1)");
  rc.seed = kv.integer("seed", 1);
  rc.eps = kv.number("eps", 0.01);
  detail::require_range("eps", rc.eps, rc.eps > 0.0 && rc.eps < 1.0,
                        "(0, 1); eps is the time-scale ratio of a slow-fast system");
  rc.horizon = kv.number("T", 1.0);
  detail::require_range("T", rc.horizon, rc.horizon > 0.0, "(0, inf)");
  rc.scheme.dt_macro = kv.number("dt", 1e-3);
  detail::require_range("dt", rc.scheme.dt_macro, rc.scheme.dt_macro > 0.0, "(0, inf)");
  rc.scheme.fast_substep_factor = kv.number("fast_substep_factor", 0.1);
  detail::require_range("fast_substep_factor", rc.scheme.fast_substep_factor,
                        rc.scheme.fast_substep_factor > 0.0 && rc.scheme.fast_substep_factor <= 1.0,
                        "(0, 1]");
  rc.n_mc = static_cast<std::size_t>(kv.integer("n_mc", 0));
  rc.threads = static_cast<unsigned>(kv.integer("threads", 0));

  if (rc.model.spectral_gap() > 0.0) {
    rc.averaging = AveragingParams::defaults(rc.model);
  }
  rc.averaging.burn_in = kv.number("Tb", rc.averaging.burn_in);
  rc.averaging.avg_time = kv.number("Ta", rc.averaging.avg_time);
  rc.averaging.replicas = static_cast<std::size_t>(kv.integer("replicas", rc.averaging.replicas));
  const std::string strategy = kv.text("strategy", "time_average");
  if (strategy == "time_average") {
    rc.averaging.strategy = AveragingStrategy::time_average;
  } else if (strategy == "ensemble") {
    rc.averaging.strategy = AveragingStrategy::ensemble_at_horizon;
  } else {
    throw ConfigError("config key 'strategy' = '" + strategy +
                      "' is not one of time_average, ensemble");
  }
  const double avg_dt = kv.number("avg_dt", rc.averaging.dt);
  detail::require_range("avg_dt", avg_dt, avg_dt > 0.0, "(0, inf)");
  rc.averaging.align_to(avg_dt);
  rc.averaging.validate();
  return rc;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace slowfast
