// Benchmark front end: run scenario grids, merge reports, export embeddings,
// sanity-check a dataset directory.
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <harcl.hpp>

namespace fs = std::filesystem;
using namespace harcl;

namespace {

constexpr int kExitUsage = 2;      // bad flags / bad config
constexpr int kExitIngest = 3;     // dataset unreadable or malformed
constexpr int kExitNumeric = 4;    // training diverged
constexpr int kExitExhausted = 5;  // sample pool ran dry

// Flags that mirror config-file keys. Values land in the config through the
// same apply path as the file, so precedence is just application order:
// defaults, then HARCL_DATA_DIR, then --config, then explicit flags.
struct ConfigFlags {
  std::map<std::string, std::string> vals;
  std::vector<std::pair<std::string, std::string>> flag_keys;  // (--flag, key)
  std::string config_file;

  void attach(CLI::App* cmd) {
    auto add = [&](const std::string& flag, const std::string& key, const std::string& help) {
      flag_keys.emplace_back(flag, key);
      cmd->add_option(flag, vals[key], help);
    };
    add("--data-dir", "data_dir", "UCI HAR dataset root (default: $HARCL_DATA_DIR)");
    add("--scenario", "scenario", "scenario id: 0, 1, or 2");
    add("--case", "case", "case id within the scenario (scenarios 0 and 1 only)");
    add("--method", "method", "comma-separated: ewc,lwf,ewclwf,plain");
    add("--seeds", "seeds", "comma-separated seed list");
    add("--epochs", "epochs", "epochs per round");
    add("--lr", "lr", "learning rate (default 5e-3 for ewc/ewclwf, 0.01 otherwise)");
    add("--alpha", "alpha", "distillation mixing weight");
    add("--temperature", "temperature", "distillation temperature");
    add("--lambda", "lambda", "EWC penalty strength");
    add("--eq6-mode", "eq6_mode", "ewclwf composition: single-count|literal");
    add("--eq9-mode", "eq9_mode", "task accuracy: round-mean|final-round");
    add("--consolidation", "consolidation", "task-boundary|every-round");
    add("--out", "out", "output directory");
    cmd->add_option("--config", config_file, "key = value config file");
  }

  RunConfig resolve(const CLI::App* cmd) const {
    RunConfig cfg;
    if (const char* env = std::getenv("HARCL_DATA_DIR"))
      if (*env) cfg.data_dir = env;
    if (!config_file.empty()) load_config_file(cfg, config_file);
    for (const auto& [flag, key] : flag_keys)
      if (cmd->count(flag) > 0) apply_kv(cfg, key, vals.at(key));
    return cfg;
  }
};

void require_data_dir(const RunConfig& cfg) {
  if (cfg.data_dir.empty())
    throw ConfigError(
        "no dataset directory: pass --data-dir, set HARCL_DATA_DIR, or put data_dir in the "
        "config file");
}

template <class S>
int run_grid(const RunConfig& cfg, const ScenarioSpec& scenario, std::size_t n_jobs) {
  const HarData<S> data = load_har<S>(cfg.data_dir, cfg.six_channels);
  const fs::path base = fs::path(cfg.out_dir) / scenario.label();

  // fixed parts first, serially: directories and the resolved-config snapshots
  for (Method m : cfg.methods) {
    const fs::path mdir = base / method_name(m);
    for (std::uint64_t seed : cfg.seeds)
      fs::create_directories(mdir / ("seed-" + std::to_string(seed)));
    atomic_write(mdir / "config_resolved.txt", resolved_config_text(cfg, m));
  }

  struct Job {
    std::size_t mi, si;
  };
  std::vector<Job> todo;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) todo.push_back({mi, si});

  std::vector<std::vector<MetricsReport>> reports(cfg.methods.size());
  for (auto& r : reports) r.resize(cfg.seeds.size());

  std::atomic<std::size_t> next{0};
  std::mutex io_mu;
  const std::size_t workers = std::max<std::size_t>(1, std::min(n_jobs, todo.size()));
  std::vector<std::exception_ptr> errors(workers);

  auto run_one = [&](const Job& job) {
    const Method m = cfg.methods[job.mi];
    const std::uint64_t seed = cfg.seeds[job.si];
    const Hyper hyper = cfg.hyper_for(m, seed);
    const RunResult res =
        run_scenario<S>(scenario, m, hyper, data, CnnShape{}, cfg.eq6, cfg.eq9, cfg.consolidation);
    const fs::path sdir = base / method_name(m) / ("seed-" + std::to_string(seed));
    atomic_write(sdir / "rounds.csv", rounds_csv(res));
    atomic_write(sdir / "metrics.csv", metrics_csv(res.report));
    atomic_write(sdir / "summary.json", summary_json(cfg, m, seed, scenario.label(), res));
    reports[job.mi][job.si] = res.report;
    std::lock_guard<std::mutex> lk(io_mu);
    std::cout << scenario.label() << " " << method_name(m) << " seed " << seed
              << ": A " << fmt_g(res.report.A);
    if (!res.report.F_t.empty()) std::cout << ", F_T " << fmt_g(res.report.F_t.back());
    for (const auto& d : res.degradations) std::cout << "\n  note: " << d;
    std::cout << "\n";
  };

  auto worker = [&](std::size_t wi) {
    try {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= todo.size()) break;
        run_one(todo[i]);
      }
    } catch (...) {
      errors[wi] = std::current_exception();
    }
  };

  if (workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t wi = 0; wi < workers; ++wi) pool.emplace_back(worker, wi);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
    atomic_write(base / method_name(cfg.methods[mi]) / "aggregate.csv",
                 aggregate_csv(reports[mi]));

  std::cout << "wrote " << base.string() << "\n";
  return 0;
}

int do_run(const RunConfig& cfg, std::size_t n_jobs) {
  cfg.validate();
  require_data_dir(cfg);
  const ScenarioSpec scenario = build_scenario(cfg.scenario, cfg.case_id, cfg.per_class);
  if (cfg.precision == Precision::f64) return run_grid<double>(cfg, scenario, n_jobs);
  return run_grid<float>(cfg, scenario, n_jobs);
}

int do_report(const RunConfig& cfg) {
  const ScenarioSpec scenario = build_scenario(cfg.scenario, cfg.case_id, cfg.per_class);
  const fs::path base = fs::path(cfg.out_dir) / scenario.label();
  if (!fs::is_directory(base)) throw IngestError("no results under " + base.string());

  std::vector<fs::path> files;
  for (const auto& mdir : fs::directory_iterator(base)) {
    if (!mdir.is_directory()) continue;
    for (const auto& sdir : fs::directory_iterator(mdir.path())) {
      const fs::path f = sdir.path() / "summary.json";
      if (sdir.is_directory() && fs::exists(f)) files.push_back(f);
    }
  }
  if (files.empty()) throw IngestError("no summary.json files under " + base.string());

  std::vector<BundleSummary> bundles;
  for (const auto& f : files) bundles.push_back(load_summary(f));
  std::sort(bundles.begin(), bundles.end(), [](const BundleSummary& a, const BundleSummary& b) {
    return a.method != b.method ? a.method < b.method : a.seed < b.seed;
  });
  atomic_write(base / "report.csv", report_csv(bundles));
  std::cout << report_table(bundles);
  std::cout << "wrote " << (base / "report.csv").string() << "\n";
  return 0;
}

template <class S>
int export_grid(const RunConfig& cfg, std::size_t n_per_class) {
  const HarData<S> data = load_har<S>(cfg.data_dir, cfg.six_channels);
  const Method m = cfg.methods.front();
  for (std::uint64_t seed : cfg.seeds) {
    const Hyper hyper = cfg.hyper_for(m, seed);
    const CnnParams<S> params = pretrain_snapshot<S>(hyper, data.train);
    Rng embed_rng = Rng::stream(seed, streams::embed);
    const std::string text = embeddings_text(params, data.train, n_per_class, embed_rng);
    const fs::path out = fs::path(cfg.out_dir) / "embeddings" / ("seed-" + std::to_string(seed) + ".csv");
    atomic_write(out, text);
    std::cout << "wrote " << out.string() << " (" << n_per_class << " per class)\n";
  }
  return 0;
}

int do_export(const RunConfig& cfg, std::size_t n_per_class) {
  cfg.validate();
  require_data_dir(cfg);
  if (n_per_class < 1) throw ConfigError("--n-per-class must be >= 1");
  if (cfg.precision == Precision::f64) return export_grid<double>(cfg, n_per_class);
  return export_grid<float>(cfg, n_per_class);
}

int do_check(const RunConfig& cfg) {
  require_data_dir(cfg);
  const IntegrityReport rep = check_har_layout(cfg.data_dir, cfg.six_channels);
  std::cout << "train windows: " << rep.train_rows << "\n"
            << "test windows:  " << rep.test_rows << "\n"
            << "channels:      " << rep.channels << "\n";
  for (std::size_t c = 0; c < rep.class_counts.size(); ++c)
    std::cout << "class " << c << ":       " << rep.class_counts[c] << "\n";
  std::cout << "official total (10299): " << (rep.standard_total ? "yes" : "no") << "\n";
  for (const auto& n : rep.notes) std::cout << "note: " << n << "\n";
  std::cout << "layout ok\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"class-incremental learning benchmark on UCI HAR"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "train a scenario x method x seed grid");
  ConfigFlags run_flags;
  run_flags.attach(run_cmd);
  std::size_t n_jobs = 1;
  run_cmd->add_option("--jobs", n_jobs, "parallel (method, seed) runs (default 1)");

  auto* report_cmd = app.add_subcommand("report", "merge per-seed summaries into one table");
  ConfigFlags report_flags;
  report_flags.attach(report_cmd);

  auto* export_cmd =
      app.add_subcommand("export-embeddings", "write penultimate-layer activations");
  ConfigFlags export_flags;
  export_flags.attach(export_cmd);
  std::size_t n_per_class = 160;
  export_cmd->add_option("--n-per-class", n_per_class, "samples per class (default 160)");

  auto* check_cmd = app.add_subcommand("check-data", "verify a dataset directory's layout");
  ConfigFlags check_flags;
  check_flags.attach(check_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (app.got_subcommand(run_cmd)) return do_run(run_flags.resolve(run_cmd), n_jobs);
    if (app.got_subcommand(report_cmd)) return do_report(report_flags.resolve(report_cmd));
    if (app.got_subcommand(export_cmd))
      return do_export(export_flags.resolve(export_cmd), n_per_class);
    if (app.got_subcommand(check_cmd)) return do_check(check_flags.resolve(check_cmd));
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IngestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIngest;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ExhaustionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitExhausted;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
