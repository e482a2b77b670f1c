#pragma once
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "harcl/config.hpp"
#include "harcl/engine.hpp"

namespace harcl {

// write-temp + rename, so readers never see a half-written file
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string join_classes(const std::set<int>& classes, char sep = ';') {
  std::string s;
  for (int c : classes) {
    if (!s.empty()) s += sep;
    s += std::to_string(c);
  }
  return s;
}

// One row per (round, seen class); round-level values repeat on each row so
// the file stays flat and plottable.
inline std::string rounds_csv(const RunResult& res) {
  std::string s =
      "# harcl rounds v1\n"
      "round,task,trained,class,correct,total,accuracy,a_r,final_loss,epochs,objective\n";
  for (const auto& lg : res.logs) {
    const std::string trained = join_classes(lg.trained);
    for (std::size_t c = 0; c < lg.tally.size(); ++c) {
      const auto& t = lg.tally[c];
      if (t.total == 0) continue;  // class not seen yet
      s += std::to_string(lg.round) + "," + std::to_string(lg.task) + "," + trained + "," +
           std::to_string(c) + "," + std::to_string(t.correct) + "," + std::to_string(t.total) +
           "," + fmt_g(static_cast<double>(t.correct) / static_cast<double>(t.total)) + "," +
           fmt_g(lg.a_r) + "," + fmt_g(lg.final_loss) + "," + std::to_string(lg.epochs) + "," +
           lg.objective + "\n";
    }
  }
  return s;
}

inline std::string metrics_csv(const MetricsReport& rep) {
  std::string s = "# harcl metrics v1\nmetric,t,d,value\n";
  s += "A,,," + fmt_g(rep.A) + "\n";
  for (std::size_t r = 0; r < rep.a_r.size(); ++r)
    s += "a_r," + std::to_string(r + 1) + ",," + fmt_g(rep.a_r[r]) + "\n";
  for (std::size_t t = 0; t < rep.a.size(); ++t)
    for (std::size_t d = 0; d < rep.a[t].size(); ++d)
      s += "a_td," + std::to_string(t + 1) + "," + std::to_string(d + 1) + "," +
           fmt_g(rep.a[t][d]) + "\n";
  for (std::size_t t = 0; t < rep.A_t.size(); ++t)
    s += "A_t," + std::to_string(t + 1) + ",," + fmt_g(rep.A_t[t]) + "\n";
  for (std::size_t t = 0; t < rep.f.size(); ++t)
    for (std::size_t d = 0; d < rep.f[t].size(); ++d)
      s += "f_td," + std::to_string(t + 2) + "," + std::to_string(d + 1) + "," +
           fmt_g(rep.f[t][d]) + "\n";
  for (std::size_t t = 0; t < rep.F_t.size(); ++t)
    s += "F_t," + std::to_string(t + 2) + ",," + fmt_g(rep.F_t[t]) + "\n";
  return s;
}

inline nlohmann::json metrics_json(const MetricsReport& rep) {
  nlohmann::json j;
  j["A"] = rep.A;
  j["a_r"] = rep.a_r;
  j["a"] = rep.a;
  j["A_t"] = rep.A_t;
  j["f"] = rep.f;
  j["F_t"] = rep.F_t;
  j["round_to_task"] = rep.round_to_task;
  j["eq9_mode"] = eq9_mode_name(rep.eq9);
  return j;
}

inline std::string summary_json(const RunConfig& cfg, Method m, std::uint64_t seed,
                                const std::string& scenario_label, const RunResult& res) {
  nlohmann::json j;
  j["schema"] = "harcl summary v1";
  j["scenario"] = scenario_label;
  j["method"] = method_name(m);
  j["seed"] = seed;
  j["config"] = resolved_config_kv(cfg, m);
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& lg : res.logs) {
    nlohmann::json r;
    r["round"] = lg.round;
    r["task"] = lg.task;
    r["trained"] = std::vector<int>(lg.trained.begin(), lg.trained.end());
    r["objective"] = lg.objective;
    r["degraded"] = lg.degraded;
    if (!lg.note.empty()) r["note"] = lg.note;
    r["a_r"] = lg.a_r;
    r["final_loss"] = lg.final_loss;
    r["epochs"] = lg.epochs;
    nlohmann::json pc;
    for (std::size_t c = 0; c < lg.tally.size(); ++c) {
      if (lg.tally[c].total == 0) continue;
      pc[std::to_string(c)] = {{"correct", lg.tally[c].correct}, {"total", lg.tally[c].total}};
    }
    r["per_class"] = pc;
    rounds.push_back(std::move(r));
  }
  j["rounds"] = std::move(rounds);
  j["metrics"] = metrics_json(res.report);
  j["consolidation_rounds"] = res.consolidation_rounds;
  j["degradations"] = res.degradations;
  char hex[24];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(res.final_checksum));
  j["final_checksum"] = hex;
  return j.dump(2) + "\n";
}

struct BundleSummary {
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  MetricsReport report;
};

inline BundleSummary load_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(path.string() + ": " + e.what());
  }
  try {
    BundleSummary b;
    b.scenario = j.at("scenario").get<std::string>();
    b.method = j.at("method").get<std::string>();
    b.seed = j.at("seed").get<std::uint64_t>();
    const auto& m = j.at("metrics");
    b.report.A = m.at("A").get<double>();
    b.report.a_r = m.at("a_r").get<std::vector<double>>();
    b.report.a = m.at("a").get<AccuracyMatrix>();
    b.report.A_t = m.at("A_t").get<std::vector<double>>();
    b.report.f = m.at("f").get<std::vector<std::vector<double>>>();
    b.report.F_t = m.at("F_t").get<std::vector<double>>();
    b.report.round_to_task = m.at("round_to_task").get<std::vector<int>>();
    b.report.eq9 = parse_eq9_mode(m.at("eq9_mode").get<std::string>());
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(path.string() + ": summary schema mismatch: " + e.what());
  }
}

struct Aggregate {
  double mean = 0, min = 0, max = 0;
};

inline Aggregate aggregate_values(const std::vector<double>& vals) {
  Aggregate a;
  a.mean = 0;
  a.min = vals.front();
  a.max = vals.front();
  for (double v : vals) {
    a.mean += v;
    a.min = std::min(a.min, v);
    a.max = std::max(a.max, v);
  }
  a.mean /= static_cast<double>(vals.size());
  return a;
}

// Metric rows shared by the aggregate and report layouts: A, per-round a_r,
// A_t, F_t. Values are pulled per seed in the given order.
inline std::vector<std::pair<std::string, std::vector<double>>> metric_rows(
    const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw StructuralError("no reports to aggregate");
  const auto& first = reports.front();
  for (const auto& r : reports)
    if (r.a_r.size() != first.a_r.size() || r.A_t.size() != first.A_t.size() ||
        r.F_t.size() != first.F_t.size())
      throw StructuralError("reports disagree on round/task structure");
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  auto collect = [&](const std::string& name, auto getter) {
    std::vector<double> vals;
    for (const auto& r : reports) vals.push_back(getter(r));
    rows.emplace_back(name, std::move(vals));
  };
  collect("A,,", [](const MetricsReport& r) { return r.A; });
  for (std::size_t i = 0; i < first.a_r.size(); ++i)
    collect("a_r," + std::to_string(i + 1) + ",",
            [i](const MetricsReport& r) { return r.a_r[i]; });
  for (std::size_t t = 0; t < first.A_t.size(); ++t)
    collect("A_t," + std::to_string(t + 1) + ",",
            [t](const MetricsReport& r) { return r.A_t[t]; });
  for (std::size_t t = 0; t < first.F_t.size(); ++t)
    collect("F_t," + std::to_string(t + 2) + ",",
            [t](const MetricsReport& r) { return r.F_t[t]; });
  return rows;
}

inline std::string aggregate_csv(const std::vector<MetricsReport>& reports) {
  std::string s = "# harcl aggregate v1\nmetric,t,d,mean,min,max\n";
  for (const auto& [name, vals] : metric_rows(reports)) {
    const Aggregate a = aggregate_values(vals);
    s += name + "," + fmt_g(a.mean) + "," + fmt_g(a.min) + "," + fmt_g(a.max) + "\n";
  }
  return s;
}

// Method-by-metric comparison across bundles of one scenario, seed-aggregated.
inline std::string report_csv(const std::vector<BundleSummary>& bundles) {
  if (bundles.empty()) throw StructuralError("report needs at least one bundle");
  const std::string scenario = bundles.front().scenario;
  for (const auto& b : bundles)
    if (b.scenario != scenario)
      throw StructuralError("bundles mix scenarios " + scenario + " and " + b.scenario);

  const std::vector<std::string> method_order = {"ewc", "lwf", "ewclwf", "plain"};
  std::vector<std::string> methods;
  for (const auto& m : method_order)
    for (const auto& b : bundles)
      if (b.method == m && std::find(methods.begin(), methods.end(), m) == methods.end())
        methods.push_back(m);

  std::map<std::string, std::vector<MetricsReport>> by_method;
  for (const auto& m : methods)
    for (const auto& b : bundles)
      if (b.method == m) by_method[m].push_back(b.report);

  std::vector<std::vector<std::pair<std::string, std::vector<double>>>> rows_per_method;
  for (const auto& m : methods) rows_per_method.push_back(metric_rows(by_method[m]));
  for (const auto& rows : rows_per_method)
    if (rows.size() != rows_per_method.front().size() ||
        !std::equal(rows.begin(), rows.end(), rows_per_method.front().begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; }))
      throw StructuralError("methods disagree on metric structure");

  std::string s = "# harcl report v1\nscenario,metric,t,d";
  for (const auto& m : methods) s += "," + m + "_mean," + m + "_min," + m + "_max";
  s += "\n";
  for (std::size_t i = 0; i < rows_per_method.front().size(); ++i) {
    s += scenario + "," + rows_per_method.front()[i].first;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const Aggregate a = aggregate_values(rows_per_method[mi][i].second);
      s += "," + fmt_g(a.mean) + "," + fmt_g(a.min) + "," + fmt_g(a.max);
    }
    s += "\n";
  }
  return s;
}

// Plain-text rendering of the same comparison for the terminal.
inline std::string report_table(const std::vector<BundleSummary>& bundles) {
  const std::string csv = report_csv(bundles);  // validates
  const std::vector<std::string> method_order = {"ewc", "lwf", "ewclwf", "plain"};
  std::vector<std::string> methods;
  for (const auto& m : method_order)
    for (const auto& b : bundles)
      if (b.method == m && std::find(methods.begin(), methods.end(), m) == methods.end())
        methods.push_back(m);
  std::map<std::string, std::vector<MetricsReport>> by_method;
  for (const auto& b : bundles) by_method[b.method].push_back(b.report);

  std::string s = "scenario " + bundles.front().scenario + " (mean over " +
                  std::to_string(by_method[methods.front()].size()) + " seed(s))\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-8s", "");
  s += line;
  for (const auto& m : methods) {
    std::snprintf(line, sizeof line, " %12s", m.c_str());
    s += line;
  }
  s += "\n";
  const auto rows0 = metric_rows(by_method[methods.front()]);
  for (std::size_t i = 0; i < rows0.size(); ++i) {
    std::string name = rows0[i].first;  // e.g. "A_t,2,"
    if (name.substr(0, 4) == "a_r,") continue;  // keep the table to A / A_t / F_t
    std::string pretty = name.substr(0, name.find(','));
    const auto comma = name.find(',');
    const std::string t = name.substr(comma + 1, name.rfind(',') - comma - 1);
    if (!t.empty()) {
      pretty.pop_back();  // A_t -> A_2 style
      pretty += t;
    }
    std::snprintf(line, sizeof line, "%-8s", pretty.c_str());
    s += line;
    for (const auto& m : methods) {
      const Aggregate a = aggregate_values(metric_rows(by_method[m])[i].second);
      std::snprintf(line, sizeof line, " %12.4f", a.mean);
      s += line;
    }
    s += "\n";
  }
  return s;
}

// n_per_class penultimate-layer activations per class, drawn seeded and
// evaluated without dropout. Columns: sample id, label, e0..e{dense-1}.
template <class S>
std::string embeddings_text(const CnnParams<S>& params, const HarDataset<S>& ds,
                            std::size_t n_per_class, Rng& rng) {
  const auto& sh = params.shape;
  if (ds.channels() != sh.channels || ds.length() != sh.length)
    throw StructuralError("dataset windows do not match the network input shape");
  std::vector<std::vector<std::size_t>> by_class(sh.classes);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) by_class[ds.labels[i]].push_back(i);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < sh.classes; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < n_per_class)
      throw ExhaustionError("class " + std::to_string(c) + " has " +
                            std::to_string(pool.size()) + " samples, need " +
                            std::to_string(n_per_class));
    for (std::size_t j = 0; j < n_per_class; ++j) {
      const std::size_t pick = rng.below(pool.size());
      chosen.push_back(pool[pick]);
      pool[pick] = pool.back();
      pool.pop_back();
    }
  }

  std::string s = "# harcl embeddings v1\nsample_id,label";
  for (std::size_t u = 0; u < sh.dense; ++u) s += ",e" + std::to_string(u);
  s += "\n";

  ForwardTrace<S> trace;
  Batch<S> batch;
  const std::size_t CL = sh.channels * sh.length;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < chosen.size(); start += chunk) {
    const std::size_t n = std::min(chunk, chosen.size() - start);
    batch.inputs = Tensor<S>({n, sh.channels, sh.length});
    batch.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::memcpy(batch.inputs.data() + i * CL, ds.windows.data() + chosen[start + i] * CL,
                  CL * sizeof(S));
      batch.labels[i] = ds.labels[chosen[start + i]];
    }
    forward_impl(params, batch, nullptr, trace);
    for (std::size_t i = 0; i < n; ++i) {
      s += std::to_string(chosen[start + i]) + "," + std::to_string(batch.labels[i]);
      const S* h = trace.head_in.data() + i * sh.dense;
      for (std::size_t u = 0; u < sh.dense; ++u)
        s += "," + fmt_g(static_cast<double>(h[u]));
      s += "\n";
    }
  }
  return s;
}

}  // namespace harcl
