#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <json.hpp>

#include <harcl/result_io.hpp>

using namespace harcl;
using Catch::Matchers::ContainsSubstring;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("harcl-" + tag + "-" + std::to_string(getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// two rounds, three classes, dyadic values so the rendered decimals are exact
RunResult tiny_result() {
  RunResult res;
  RoundLog l1;
  l1.round = 1;
  l1.task = 1;
  l1.trained = {0, 1};
  l1.tally.resize(3);
  l1.tally[0] = {3, 4};
  l1.tally[1] = {1, 2};
  l1.a_r = 4.0 / 6.0;
  l1.final_loss = 0.5;
  l1.epochs = 2;
  l1.objective = "plain";
  l1.degraded = true;
  l1.note = "ewclwf lacks its teacher snapshot and fisher anchor; training with plain CE";

  RoundLog l2;
  l2.round = 2;
  l2.task = 2;
  l2.trained = {2};
  l2.tally.resize(3);
  l2.tally[0] = {2, 4};
  l2.tally[1] = {1, 2};
  l2.tally[2] = {3, 3};
  l2.a_r = 6.0 / 9.0;
  l2.final_loss = 0.25;
  l2.epochs = 2;
  l2.objective = "ewclwf";

  res.logs = {l1, l2};
  res.records = {{1, 1, 0.5}, {2, 1, 0.25}, {2, 2, 0.75}};
  res.a_r = {0.5, 0.75};
  res.report = build_metrics_report(res.records, res.a_r, {1, 2});
  res.consolidation_rounds = {1};
  res.degradations = {"round 1: " + l1.note};
  res.final_checksum = 0xdeadbeef12345678ull;
  return res;
}

MetricsReport mono_report(double A) {
  MetricsReport r;
  r.A = A;
  r.a_r = {A};
  r.a = {{A}};
  r.A_t = {A};
  r.round_to_task = {1};
  return r;
}

BundleSummary mk_bundle(const std::string& scenario, const std::string& method,
                        std::uint64_t seed, double A) {
  BundleSummary b;
  b.scenario = scenario;
  b.method = method;
  b.seed = seed;
  b.report = mono_report(A);
  return b;
}

}  // namespace

TEST_CASE("atomic_write creates parents, overwrites, and leaves no droppings", "[io]") {
  TempDir dir("aw");
  const fs::path target = dir.path / "a" / "b" / "file.txt";

  atomic_write(target, "first\n");
  REQUIRE(slurp(target) == "first\n");

  atomic_write(target, "second\n");
  REQUIRE(slurp(target) == "second\n");

  REQUIRE_FALSE(fs::exists(target.string() + ".tmp"));
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(target.parent_path())) ++entries;
  REQUIRE(entries == 1);
}

TEST_CASE("class sets join with semicolons", "[io]") {
  REQUIRE(join_classes({0, 1, 5}) == "0;1;5");
  REQUIRE(join_classes({4}) == "4");
  REQUIRE(join_classes({}) == "");
  REQUIRE(join_classes({2, 3}, '|') == "2|3");
}

TEST_CASE("rounds csv is flat, versioned, and skips unseen classes", "[io]") {
  const std::string expected =
      "# harcl rounds v1\n"
      "round,task,trained,class,correct,total,accuracy,a_r,final_loss,epochs,objective\n"
      "1,1,0;1,0,3,4,0.75,0.6666666667,0.5,2,plain\n"
      "1,1,0;1,1,1,2,0.5,0.6666666667,0.5,2,plain\n"
      "2,2,2,0,2,4,0.5,0.6666666667,0.25,2,ewclwf\n"
      "2,2,2,1,1,2,0.5,0.6666666667,0.25,2,ewclwf\n"
      "2,2,2,2,3,3,1,0.6666666667,0.25,2,ewclwf\n";
  REQUIRE(rounds_csv(tiny_result()) == expected);
}

TEST_CASE("metrics csv renders every metric family in order", "[io]") {
  MetricsReport rep;
  rep.A = 0.625;
  rep.a_r = {0.5, 0.75};
  rep.a = {{0.5}, {0.25, 0.75}};
  rep.A_t = {0.5, 0.5};
  rep.f = {{0.25}};
  rep.F_t = {0.25};
  rep.round_to_task = {1, 2};

  const std::string expected =
      "# harcl metrics v1\n"
      "metric,t,d,value\n"
      "A,,,0.625\n"
      "a_r,1,,0.5\n"
      "a_r,2,,0.75\n"
      "a_td,1,1,0.5\n"
      "a_td,2,1,0.25\n"
      "a_td,2,2,0.75\n"
      "A_t,1,,0.5\n"
      "A_t,2,,0.5\n"
      "f_td,2,1,0.25\n"
      "F_t,2,,0.25\n";
  REQUIRE(metrics_csv(rep) == expected);
}

TEST_CASE("summaries round-trip through json", "[io]") {
  TempDir dir("sum");
  RunConfig cfg;
  cfg.data_dir = "/data/har";
  const RunResult res = tiny_result();
  const std::string text = summary_json(cfg, Method::ewclwf, 3, "s2", res);
  const fs::path p = dir.path / "summary.json";
  atomic_write(p, text);

  SECTION("the file carries the full run context") {
    const nlohmann::json j = nlohmann::json::parse(slurp(p));
    REQUIRE(j.at("schema") == "harcl summary v1");
    REQUIRE(j.at("scenario") == "s2");
    REQUIRE(j.at("method") == "ewclwf");
    REQUIRE(j.at("seed") == 3);
    REQUIRE(j.at("config").at("method") == "ewclwf");
    REQUIRE(j.at("config").at("lr") == "0.005");
    REQUIRE(j.at("config").at("data_dir") == "/data/har");
    REQUIRE(j.at("rounds").size() == 2);
    REQUIRE(j.at("rounds")[0].at("trained") == nlohmann::json({0, 1}));
    REQUIRE(j.at("rounds")[0].at("degraded") == true);
    REQUIRE_THAT(j.at("rounds")[0].at("note").get<std::string>(),
                 ContainsSubstring("lacks its teacher"));
    REQUIRE_FALSE(j.at("rounds")[1].contains("note"));
    REQUIRE(j.at("rounds")[1].at("per_class").at("2").at("correct") == 3);
    REQUIRE_FALSE(j.at("rounds")[0].at("per_class").contains("2"));
    REQUIRE(j.at("consolidation_rounds") == nlohmann::json({1}));
    REQUIRE(j.at("degradations").size() == 1);
    REQUIRE(j.at("final_checksum") == "deadbeef12345678");
  }
  SECTION("load_summary restores the metrics bit for bit") {
    const BundleSummary b = load_summary(p);
    REQUIRE(b.scenario == "s2");
    REQUIRE(b.method == "ewclwf");
    REQUIRE(b.seed == 3);
    REQUIRE(b.report.A == res.report.A);
    REQUIRE(b.report.a_r == res.report.a_r);
    REQUIRE(b.report.a == res.report.a);
    REQUIRE(b.report.A_t == res.report.A_t);
    REQUIRE(b.report.f == res.report.f);
    REQUIRE(b.report.F_t == res.report.F_t);
    REQUIRE(b.report.round_to_task == res.report.round_to_task);
    REQUIRE(b.report.eq9 == res.report.eq9);
  }
  SECTION("unreadable, unparseable, and schema-poor files are distinct errors") {
    REQUIRE_THROWS_WITH(load_summary(dir.path / "nope.json"),
                        ContainsSubstring("cannot read"));
    atomic_write(dir.path / "garbage.json", "{not json");
    REQUIRE_THROWS_AS(load_summary(dir.path / "garbage.json"), IngestError);
    atomic_write(dir.path / "thin.json", "{\"scenario\": \"s2\"}");
    REQUIRE_THROWS_WITH(load_summary(dir.path / "thin.json"),
                        ContainsSubstring("summary schema mismatch"));
  }
}

TEST_CASE("aggregates report mean, min, and max per metric", "[io]") {
  const Aggregate a = aggregate_values({0.5, 0.25, 0.75});
  REQUIRE(a.mean == 0.5);
  REQUIRE(a.min == 0.25);
  REQUIRE(a.max == 0.75);

  const std::vector<MetricsReport> reports = {mono_report(0.5), mono_report(0.75)};
  const std::string expected =
      "# harcl aggregate v1\n"
      "metric,t,d,mean,min,max\n"
      "A,,,0.625,0.5,0.75\n"
      "a_r,1,,0.625,0.5,0.75\n"
      "A_t,1,,0.625,0.5,0.75\n";
  REQUIRE(aggregate_csv(reports) == expected);

  SECTION("rows carry per-seed values in input order") {
    const auto rows = metric_rows(reports);
    REQUIRE(rows.size() == 3);
    REQUIRE(rows[0].first == "A,,");
    REQUIRE(rows[0].second == std::vector<double>{0.5, 0.75});
    REQUIRE(rows[1].first == "a_r,1,");
    REQUIRE(rows[2].first == "A_t,1,");
  }
  SECTION("structural disagreement is refused") {
    MetricsReport longer = mono_report(0.5);
    longer.a_r = {0.5, 0.5};
    REQUIRE_THROWS_WITH(metric_rows({mono_report(0.5), longer}),
                        ContainsSubstring("reports disagree on round/task structure"));
    REQUIRE_THROWS_WITH(metric_rows({}), ContainsSubstring("no reports"));
  }
}

TEST_CASE("the cross-method report fixes the column order", "[io]") {
  // deliberately fed out of order: plain, then ewc seeds
  const std::vector<BundleSummary> bundles = {
      mk_bundle("s2", "plain", 0, 0.25),
      mk_bundle("s2", "ewc", 0, 0.5),
      mk_bundle("s2", "ewc", 1, 0.75),
  };
  const std::string expected =
      "# harcl report v1\n"
      "scenario,metric,t,d,ewc_mean,ewc_min,ewc_max,plain_mean,plain_min,plain_max\n"
      "s2,A,,,0.625,0.5,0.75,0.25,0.25,0.25\n"
      "s2,a_r,1,,0.625,0.5,0.75,0.25,0.25,0.25\n"
      "s2,A_t,1,,0.625,0.5,0.75,0.25,0.25,0.25\n";
  REQUIRE(report_csv(bundles) == expected);

  SECTION("a single bundle still reports") {
    const std::string one = report_csv({mk_bundle("s1c2", "lwf", 4, 0.5)});
    REQUIRE_THAT(one, ContainsSubstring("scenario,metric,t,d,lwf_mean,lwf_min,lwf_max"));
    REQUIRE_THAT(one, ContainsSubstring("s1c2,A,,,0.5,0.5,0.5"));
  }
  SECTION("mixed scenarios are refused") {
    auto mixed = bundles;
    mixed.push_back(mk_bundle("s0c1", "ewc", 2, 0.5));
    REQUIRE_THROWS_WITH(report_csv(mixed),
                        ContainsSubstring("bundles mix scenarios s2 and s0c1"));
  }
  SECTION("methods with different metric structure are refused") {
    auto odd = bundles;
    odd[0].report.F_t = {0.1};  // plain suddenly has a forgetting row
    odd[0].report.f = {{0.1}};
    REQUIRE_THROWS_WITH(report_csv(odd),
                        ContainsSubstring("methods disagree on metric structure"));
  }
  SECTION("the text table keeps the headline metrics only") {
    const std::string table = report_table(bundles);
    REQUIRE_THAT(table, ContainsSubstring("scenario s2 (mean over 2 seed(s))"));
    REQUIRE_THAT(table, ContainsSubstring("ewc"));
    REQUIRE_THAT(table, ContainsSubstring("plain"));
    REQUIRE_THAT(table, ContainsSubstring("A_1"));
    REQUIRE_THAT(table, !ContainsSubstring("a_r"));
    REQUIRE_THAT(table, ContainsSubstring("0.6250"));
    REQUIRE_THAT(table, ContainsSubstring("0.2500"));
  }
}

TEST_CASE("embedding export walks classes in order with seeded draws", "[io]") {
  CnnShape sh;
  sh.channels = 1;
  sh.length = 6;
  sh.filters = 2;
  sh.kernel = 3;
  sh.pool = 2;
  sh.dense = 3;
  sh.classes = 3;

  Rng prng(77);
  const CnnParams<double> params = he_init<double>(sh, prng);

  HarDataset<double> ds;
  ds.split = "train";
  const std::size_t n = 15;  // 5 per class, labels interleaved
  ds.windows = Tensor<double>({n, 1, 6});
  Rng drng(78);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(static_cast<int>(i % 3));
    for (std::size_t t = 0; t < 6; ++t) ds.windows.at(i, 0, t) = drng.uniform(-1, 1);
  }
  ds.subjects.assign(n, 1);

  SECTION("layout and determinism") {
    Rng r1(42), r2(42), r3(43);
    const std::string a = embeddings_text(params, ds, 2, r1);
    REQUIRE(a == embeddings_text(params, ds, 2, r2));
    REQUIRE(a != embeddings_text(params, ds, 2, r3));

    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < a.size()) {
      const auto nl = a.find('\n', pos);
      lines.push_back(a.substr(pos, nl - pos));
      pos = nl + 1;
    }
    REQUIRE(lines.size() == 2 + 6);  // header rows + 3 classes x 2
    REQUIRE(lines[0] == "# harcl embeddings v1");
    REQUIRE(lines[1] == "sample_id,label,e0,e1,e2");
    for (std::size_t i = 2; i < lines.size(); ++i) {
      const int expect_label = int((i - 2) / 2);  // class-ascending blocks
      std::vector<std::string> fields;
      std::size_t p = 0;
      while (p <= lines[i].size()) {
        const auto c = lines[i].find(',', p);
        fields.push_back(lines[i].substr(p, c - p));
        if (c == std::string::npos) break;
        p = c + 1;
      }
      REQUIRE(fields.size() == 5);  // sample_id, label, dense columns
      REQUIRE(std::stoi(fields[1]) == expect_label);
      const std::size_t id = std::stoul(fields[0]);
      REQUIRE(ds.labels[id] == expect_label);

      // the row is the eval-mode penultimate activation of that very sample
      Batch<double> one;
      one.inputs = Tensor<double>({1, 1, 6});
      for (std::size_t t = 0; t < 6; ++t) one.inputs.at(0, 0, t) = ds.windows.at(id, 0, t);
      one.labels = {ds.labels[id]};
      ForwardTrace<double> trace;
      forward_impl(params, one, nullptr, trace);
      for (std::size_t u = 0; u < 3; ++u)
        REQUIRE(fields[2 + u] == fmt_g(trace.head_in.at(0, u)));
    }
  }
  SECTION("asking for more than a class holds is an exhaustion error") {
    Rng r(42);
    REQUIRE_THROWS_WITH(embeddings_text(params, ds, 6, r),
                        ContainsSubstring("class 0 has 5 samples, need 6"));
  }
  SECTION("shape mismatch is structural") {
    CnnShape other = sh;
    other.length = 8;
    Rng orng(79);
    const CnnParams<double> wrong = he_init<double>(other, orng);
    Rng r(42);
    REQUIRE_THROWS_AS(embeddings_text(wrong, ds, 2, r), StructuralError);
  }
}
