#pragma once
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "harcl/cnn.hpp"
#include "harcl/engine.hpp"
#include "harcl/metrics.hpp"
#include "harcl/objective.hpp"
#include "harcl/scenario.hpp"

namespace harcl {

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline Eq6Mode parse_eq6_mode(const std::string& s) {
  if (s == "single-count") return Eq6Mode::single_count;
  if (s == "literal") return Eq6Mode::literal;
  throw ConfigError("eq6_mode must be single-count|literal, got '" + s + "'");
}

inline Eq9Mode parse_eq9_mode(const std::string& s) {
  if (s == "round-mean") return Eq9Mode::round_mean;
  if (s == "final-round") return Eq9Mode::final_round;
  throw ConfigError("eq9_mode must be round-mean|final-round, got '" + s + "'");
}

inline ConsolidationMode parse_consolidation_mode(const std::string& s) {
  if (s == "task-boundary") return ConsolidationMode::task_boundary;
  if (s == "every-round") return ConsolidationMode::every_round;
  throw ConfigError("consolidation must be task-boundary|every-round, got '" + s + "'");
}

inline Precision parse_precision(const std::string& s) {
  if (s == "f64") return Precision::f64;
  if (s == "f32") return Precision::f32;
  throw ConfigError("precision must be f64|f32, got '" + s + "'");
}

// Everything a run grid needs. Defaults mirror the benchmark protocol; the
// learning rate is the only per-method default (unset = lwf/plain 0.01,
// ewc/ewclwf 5e-3, the upper ends of the published ranges).
struct RunConfig {
  std::string data_dir;
  int scenario = 2;
  int case_id = 0;  // 0 = scenario without a case split
  std::vector<Method> methods = {Method::ewc, Method::lwf, Method::ewclwf};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string out_dir = "out";
  std::optional<double> lr;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double dropout = 0.5;
  double alpha = 0.1;
  double temperature = 3.0;
  double lambda = 5.0;
  std::size_t per_class = 120;
  std::size_t pretrain_per_class = 10;
  std::size_t pretrain_epochs = 20;
  double pretrain_lr = 0.01;
  std::size_t fisher_n_max = 0;
  Eq6Mode eq6 = Eq6Mode::single_count;
  Eq9Mode eq9 = Eq9Mode::round_mean;
  ConsolidationMode consolidation = ConsolidationMode::task_boundary;
  bool six_channels = false;
  Precision precision = Precision::f64;

  double method_lr(Method m) const {
    if (lr) return *lr;
    return (m == Method::ewc || m == Method::ewclwf) ? 5e-3 : 0.01;
  }

  Hyper hyper_for(Method m, std::uint64_t seed) const {
    Hyper h;
    h.learning_rate = method_lr(m);
    h.batch_size = batch;
    h.dropout_rate = dropout;
    h.epochs_per_round = epochs;
    h.temperature = temperature;
    h.alpha = alpha;
    h.lambda = lambda;
    h.seed = seed;
    h.precision = precision;
    h.pretrain_per_class = pretrain_per_class;
    h.pretrain_epochs = pretrain_epochs;
    h.pretrain_lr = pretrain_lr;
    h.fisher_n_max = fisher_n_max;
    return h;
  }

  void validate() const {
    build_scenario(scenario, case_id, per_class == 0 ? 120 : per_class);  // throws on bad pair
    if (methods.empty()) throw ConfigError("at least one method is required");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size())
      throw ConfigError("method list repeats an entry");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
      throw ConfigError("seed list repeats an entry");
    if (per_class < 1) throw ConfigError("per_class must be >= 1");
    hyper_for(methods.front(), seeds.front()).validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': invalid numeric value '" + v + "'");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': invalid integer value '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true|false, got '" + v + "'");
}

}  // namespace detail

// Applies one key = value pair; both the config file and the command line
// funnel through here, so precedence is purely application order.
inline void apply_kv(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::to_bool;
  using detail::to_real;
  using detail::to_u64;
  if (key == "data_dir") c.data_dir = value;
  else if (key == "scenario") c.scenario = static_cast<int>(to_u64(key, value));
  else if (key == "case") c.case_id = static_cast<int>(to_u64(key, value));
  else if (key == "method") {
    c.methods.clear();
    for (const auto& m : detail::split_list(value)) c.methods.push_back(parse_method(m));
    if (c.methods.empty()) throw ConfigError("key 'method': empty method list");
  } else if (key == "seeds") {
    c.seeds.clear();
    for (const auto& s : detail::split_list(value)) c.seeds.push_back(to_u64(key, s));
    if (c.seeds.empty()) throw ConfigError("key 'seeds': empty seed list");
  } else if (key == "out") c.out_dir = value;
  else if (key == "lr") c.lr = to_real(key, value);
  else if (key == "epochs") c.epochs = to_u64(key, value);
  else if (key == "batch") c.batch = to_u64(key, value);
  else if (key == "dropout") c.dropout = to_real(key, value);
  else if (key == "alpha") c.alpha = to_real(key, value);
  else if (key == "temperature") c.temperature = to_real(key, value);
  else if (key == "lambda") c.lambda = to_real(key, value);
  else if (key == "per_class") c.per_class = to_u64(key, value);
  else if (key == "pretrain_per_class") c.pretrain_per_class = to_u64(key, value);
  else if (key == "pretrain_epochs") c.pretrain_epochs = to_u64(key, value);
  else if (key == "pretrain_lr") c.pretrain_lr = to_real(key, value);
  else if (key == "fisher_n_max") c.fisher_n_max = to_u64(key, value);
  else if (key == "eq6_mode") c.eq6 = parse_eq6_mode(value);
  else if (key == "eq9_mode") c.eq9 = parse_eq9_mode(value);
  else if (key == "consolidation") c.consolidation = parse_consolidation_mode(value);
  else if (key == "six_channels") c.six_channels = to_bool(key, value);
  else if (key == "precision") c.precision = parse_precision(value);
  else throw ConfigError("unknown config key '" + key + "'");
}

// Flat `key = value` file; # starts a comment.
inline void load_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ": line " + std::to_string(lineno) + ": expected key = value");
    try {
      apply_kv(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

// The fully resolved snapshot written next to a method's results. Every key
// is present with its effective value, sorted, so the file alone pins the
// run.
inline std::map<std::string, std::string> resolved_config_kv(const RunConfig& c, Method m) {
  std::map<std::string, std::string> kv;
  kv["alpha"] = fmt_g(c.alpha);
  kv["batch"] = std::to_string(c.batch);
  kv["case"] = std::to_string(c.case_id);
  kv["consolidation"] = consolidation_mode_name(c.consolidation);
  kv["data_dir"] = c.data_dir;
  kv["dropout"] = fmt_g(c.dropout);
  kv["epochs"] = std::to_string(c.epochs);
  kv["eq6_mode"] = eq6_mode_name(c.eq6);
  kv["eq9_mode"] = eq9_mode_name(c.eq9);
  kv["fisher_n_max"] = std::to_string(c.fisher_n_max);
  kv["lambda"] = fmt_g(c.lambda);
  kv["lr"] = fmt_g(c.method_lr(m));
  kv["method"] = method_name(m);
  kv["out"] = c.out_dir;
  kv["per_class"] = std::to_string(c.per_class);
  kv["precision"] = precision_name(c.precision);
  kv["pretrain_epochs"] = std::to_string(c.pretrain_epochs);
  kv["pretrain_lr"] = fmt_g(c.pretrain_lr);
  kv["pretrain_per_class"] = std::to_string(c.pretrain_per_class);
  kv["scenario"] = std::to_string(c.scenario);
  std::string seeds;
  for (std::size_t i = 0; i < c.seeds.size(); ++i)
    seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
  kv["seeds"] = seeds;
  kv["six_channels"] = c.six_channels ? "true" : "false";
  kv["temperature"] = fmt_g(c.temperature);
  return kv;
}

inline std::string resolved_config_text(const RunConfig& c, Method m) {
  std::string out;
  for (const auto& [k, v] : resolved_config_kv(c, m)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace harcl
