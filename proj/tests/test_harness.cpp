#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "evcomp/csv.hpp"
#include "evcomp/suites.hpp"

using namespace evc;
namespace fs = std::filesystem;

namespace {

Condition tiny_condition(ModelKind kind = ModelKind::hierarchy) {
  Condition c;
  c.name = "probe";
  c.model = kind;
  c.ci_mode = CiMode::early_switch;
  c.gate_mode = GateMode::open_at_switch;
  c.update = parse_update_policy("fixed(20)");
  return c;
}

TrainConfig tiny_config(int epochs = 2, int steps = 60) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.steps_per_epoch = steps;
  cfg.test_iterations = 3;
  cfg.test_seq_len = 50;
  cfg.trace_export_steps = 30;
  return cfg;
}

// reads CI instead of learning: the in-tune one-hot names the generating
// function, so this predictor is exact by construction
struct OracleModel : ModelBase {
  void reset_state() override {}
  void ensure_capacity(int) override {}
  double forward(const StepInput& in, int, StepTrace* trace) override {
    int e = 0;
    for (int k = 0; k < 4; ++k)
      if (in.ci[std::size_t(k)] == 1.0) e = k;
    const double pred = eval_event_fn(EventType(e), in.x, in.y);
    if (trace) {
      trace->prediction = pred;
      trace->surprise = in.surprise;
      trace->gate_h.resize(0);
      trace->compression.resize(0);
    }
    return pred;
  }
  void backward_window(int, const std::vector<double>&) override {}
  void collect_params(ParamViews&) override {}
  void collect_grads(ParamViews&) override {}
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(bool(in), "cannot open ", p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("evcomp_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("update policy parsing") {
  UpdatePolicy p = parse_update_policy("fixed(20)");
  CHECK(p.kind == UpdatePolicy::Kind::fixed);
  CHECK(p.n == 20);
  CHECK(p.max_len() == 20);
  CHECK(p.name() == "fixed(20)");

  UpdatePolicy r = parse_update_policy("random(10,30)");
  CHECK(r.kind == UpdatePolicy::Kind::random);
  CHECK(r.lo == 10);
  CHECK(r.hi == 30);
  CHECK(r.max_len() == 30);
  CHECK(r.name() == "random(10,30)");

  for (const char* bad : {"fixed", "fixed()", "fixed(0)", "fixed(-3)",
                          "random(30,10)", "random(5)", "random(0,5)",
                          "weekly(2)", "fixed(2)x"})
    CHECK_THROWS_AS(parse_update_policy(bad), std::invalid_argument);
}

TEST_CASE("update policy draws") {
  Rng rng(80);
  UpdatePolicy f = parse_update_policy("fixed(7)");
  for (int i = 0; i < 10; ++i) CHECK(f.draw(rng) == 7);

  UpdatePolicy r = parse_update_policy("random(3,6)");
  std::map<int, int> seen;
  for (int i = 0; i < 400; ++i) ++seen[r.draw(rng)];
  CHECK(seen.size() == 4);
  CHECK(seen.begin()->first == 3);
  CHECK(seen.rbegin()->first == 6);
}

TEST_CASE("updates fire exactly on window boundaries") {
  // divisible case: every boundary including the last step
  {
    Condition cond = tiny_condition();
    TrainConfig cfg = tiny_config(1, 100);
    Rng master(1);
    Rng wrng = master.stream(kStreamWeights);
    Hierarchy::Config hc;
    Hierarchy model(hc, wrng);
    Optimizer opt{cfg.opt};
    TrainResult res = train_one(model, opt, cond, cfg, master);
    CHECK(res.update_steps_first_epoch == std::vector<int>{20, 40, 60, 80, 100});
  }
  // non-divisible: the partial window at the epoch end produces no update
  {
    Condition cond = tiny_condition();
    cond.update = parse_update_policy("fixed(35)");
    TrainConfig cfg = tiny_config(1, 100);
    Rng master(1);
    Rng wrng = master.stream(kStreamWeights);
    Hierarchy::Config hc;
    Hierarchy model(hc, wrng);
    Optimizer opt{cfg.opt};
    TrainResult res = train_one(model, opt, cond, cfg, master);
    CHECK(res.update_steps_first_epoch == std::vector<int>{35, 70});
  }
  // random windows: gaps stay inside the drawn range
  {
    Condition cond = tiny_condition();
    cond.update = parse_update_policy("random(3,7)");
    TrainConfig cfg = tiny_config(1, 200);
    Rng master(2);
    Rng wrng = master.stream(kStreamWeights);
    Hierarchy::Config hc;
    Hierarchy model(hc, wrng);
    Optimizer opt{cfg.opt};
    TrainResult res = train_one(model, opt, cond, cfg, master);
    REQUIRE(!res.update_steps_first_epoch.empty());
    int prev = 0;
    for (int at : res.update_steps_first_epoch) {
      CHECK(at - prev >= 3);
      CHECK(at - prev <= 7);
      prev = at;
    }
    CHECK(200 - prev < 7);  // nothing left but a partial window
  }
}

TEST_CASE("training error goes down on the real task") {
  Condition cond = tiny_condition();
  TrainConfig cfg = tiny_config(30, 400);
  Rng master(3);
  Rng wrng = master.stream(kStreamWeights);
  Hierarchy::Config hc;
  Hierarchy model(hc, wrng);
  Optimizer opt{cfg.opt};
  TrainResult res = train_one(model, opt, cond, cfg, master);
  REQUIRE(res.curve.size() == 30);
  CHECK(!res.diverged);
  CHECK(res.curve.back() < res.curve.front());

  // final error definition: mean over the trailing window
  double sum = 0.0;
  for (std::size_t i = res.curve.size() - 30; i < res.curve.size(); ++i)
    sum += res.curve[i];
  CHECK(res.final_train_error == doctest::Approx(sum / 30).epsilon(1e-15));
}

TEST_CASE("a run with an absurd learning rate is flagged, not crashed") {
  Condition cond = tiny_condition();
  TrainConfig cfg = tiny_config(8, 100);
  cfg.opt.lr = 1e6;
  Rng master(4);
  Rng wrng = master.stream(kStreamWeights);
  Hierarchy::Config hc;
  Hierarchy model(hc, wrng);
  Optimizer opt{cfg.opt};
  TrainResult res = train_one(model, opt, cond, cfg, master);
  CHECK(res.diverged);
  CHECK(std::isnan(res.final_train_error));
  CHECK(res.curve.size() <= 8);
}

TEST_CASE("evaluation leaves the weights untouched and repeats exactly") {
  Condition cond = tiny_condition();
  TrainConfig cfg = tiny_config();
  Rng wrng = Rng(5).stream(kStreamWeights);
  Hierarchy::Config hc;
  Hierarchy model(hc, wrng);
  ParamViews pv;
  model.collect_params(pv);
  const std::string before = serialize_params(pv);

  Rng m1(5), m2(5);
  EvalResult a = evaluate(model, cond, cfg, m1);
  CHECK(serialize_params(pv) == before);
  EvalResult b = evaluate(model, cond, cfg, m2);
  CHECK(a.test_error == b.test_error);
  REQUIRE(a.per_sequence.size() == b.per_sequence.size());
  for (std::size_t i = 0; i < a.per_sequence.size(); ++i)
    CHECK(a.per_sequence[i] == b.per_sequence[i]);
  CHECK(a.trace.size() == 30);
}

TEST_CASE("an oracle that reads the in-tune cue scores exactly zero error") {
  Condition cond = tiny_condition();
  cond.ci_mode = CiMode::in_tune;
  TrainConfig cfg = tiny_config();
  OracleModel oracle;
  Rng master(6);
  EvalResult res = evaluate(oracle, cond, cfg, master);
  CHECK(res.test_error == 0.0);
  for (double e : res.per_sequence) CHECK(e == 0.0);
}

TEST_CASE("gate statistics partition the test steps by event") {
  Condition cond = tiny_condition();
  TrainConfig cfg = tiny_config();
  Rng wrng = Rng(7).stream(kStreamWeights);
  Hierarchy::Config hc;
  Hierarchy model(hc, wrng);
  Rng master(7);
  EvalResult res = evaluate(model, cond, cfg, master);
  long total = 0;
  for (int e = 0; e < kNumEvents; ++e) {
    CHECK(res.gate_count[std::size_t(e)] > 0);
    total += res.gate_count[std::size_t(e)];
    CHECK(res.gate_sum[std::size_t(e)].size() == 8);
  }
  CHECK(total == cfg.test_iterations * cfg.test_seq_len);
}

TEST_CASE("cluster distances are plain euclidean distances between means") {
  std::array<Vec, kNumEvents> sums;
  std::array<long, kNumEvents> counts{2, 1, 1, 1};
  sums[0] = Vec::Zero(2);             // mean (0, 0)
  sums[1] = (Vec(2) << 3, 4).finished();  // mean (3, 4)
  sums[2] = (Vec(2) << 1, 0).finished();
  sums[3] = (Vec(2) << 0, 2).finished();
  ClusterResult r = cluster_analysis(sums, counts);
  CHECK(r.distances[0] == doctest::Approx(5.0));  // add-sin: (0,0) to (3,4)
  CHECK(r.distances[1] == doctest::Approx(1.0));  // add-sub
  CHECK(r.distances[2] == doctest::Approx(2.0));  // add-con
  CHECK(r.centers[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::string(kPairNames[0]) == "add_sin");
  CHECK(std::string(kPairNames[5]) == "sub_con");

  counts[2] = 0;
  CHECK_THROWS_AS(cluster_analysis(sums, counts), std::invalid_argument);
}

TEST_CASE("summary statistics helpers") {
  std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  CHECK(mean_of(v) == doctest::Approx(2.5));
  CHECK(median_of(v) == doctest::Approx(2.5));
  v.push_back(10.0);
  CHECK(median_of(v) == doctest::Approx(3.0));
  std::vector<double> w{2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0};
  CHECK(stdev_of(w) == doctest::Approx(std::sqrt(32.0 / 7.0)));
}

TEST_CASE("run_single fills every reporting field") {
  Condition cond = tiny_condition();
  TrainConfig cfg = tiny_config();
  RunResult r = run_single(cond, 11, cfg);
  CHECK(r.seed == 11);
  CHECK(r.curve.size() == 2);
  CHECK(r.has_clusters);
  CHECK(r.trace.size() == 30);
  CHECK(!r.checkpoint.empty());
  CHECK(std::isfinite(r.test_error));
  for (double d : r.clusters.distances) CHECK(std::isfinite(d));

  Condition mono = tiny_condition(ModelKind::single_mlp);
  mono.ci_mode = CiMode::in_tune;
  mono.with_ci = true;
  RunResult rm = run_single(mono, 11, cfg);
  CHECK(!rm.has_clusters);
  CHECK(rm.trace.size() == 30);
}

TEST_CASE("identical runs are bit-identical") {
  Condition cond = tiny_condition();
  TrainConfig cfg = tiny_config();
  RunResult a = run_single(cond, 9, cfg);
  RunResult b = run_single(cond, 9, cfg);
  CHECK(a.checkpoint == b.checkpoint);
  CHECK(a.test_error == b.test_error);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i)
    CHECK(a.curve[i] == b.curve[i]);
}

TEST_CASE("suite construction") {
  CHECK(make_suite("table1").conditions.size() == 8);
  CHECK(make_suite("table2").conditions.size() == 4);
  CHECK(make_suite("table3").conditions.size() == 12);
  CHECK(make_suite("table4").conditions.size() == 9);
  CHECK_THROWS_AS(make_suite("table9"), std::invalid_argument);

  Suite s = make_suite("table2");
  CHECK(s.seeds.size() == 10);
  std::map<std::string, int> names;
  for (const auto& c : s.conditions) ++names[c.name];
  for (const auto& [name, n] : names) {
    CAPTURE(name);
    CHECK(n == 1);
  }
  // every full-scale suite trains with the stock config
  CHECK(s.cfg.epochs == 2000);
  CHECK(s.cfg.steps_per_epoch == 2000);
  CHECK(s.cfg.opt.lr == 1e-4);
}

TEST_CASE("manifest round-trips a suite exactly") {
  Suite s = make_suite("table3");
  s.cfg.epochs = 5;
  s.seeds = {3, 4};
  const std::string m1 = suite_to_manifest(s);
  Suite back = suite_from_manifest(m1);
  CHECK(suite_to_manifest(back) == m1);
  CHECK(back.name == s.name);
  CHECK(back.cfg.epochs == 5);
  CHECK(back.seeds == s.seeds);
  REQUIRE(back.conditions.size() == s.conditions.size());
  for (std::size_t i = 0; i < s.conditions.size(); ++i) {
    CHECK(back.conditions[i].name == s.conditions[i].name);
    CHECK(back.conditions[i].update.name() == s.conditions[i].update.name());
    CHECK(back.conditions[i].gate_mode == s.conditions[i].gate_mode);
  }
  CHECK_THROWS(suite_from_manifest("{ not json"));
}

TEST_CASE("suite runs are ordered by condition and seed, not by worker") {
  Suite s = make_suite("table2");
  s.cfg = tiny_config();
  s.conditions.resize(2);
  s.seeds = {1, 2};

  SuiteResult r1 = run_suite(s, 1);
  SuiteResult r4 = run_suite(s, 4);
  REQUIRE(r1.runs.size() == 4);
  REQUIRE(r4.runs.size() == 4);
  for (std::size_t i = 0; i < r1.runs.size(); ++i) {
    CHECK(r1.runs[i].cond.name == s.conditions[i / 2].name);
    CHECK(r1.runs[i].seed == s.seeds[i % 2]);
    CHECK(r1.runs[i].checkpoint == r4.runs[i].checkpoint);
    CHECK(r1.runs[i].test_error == r4.runs[i].test_error);
  }

  // and the written artifacts are byte-identical
  const fs::path d1 = fresh_dir("jobs1");
  const fs::path d4 = fresh_dir("jobs4");
  write_suite_outputs(r1, d1);
  write_suite_outputs(r4, d4);
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(d1)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), d1);
    CAPTURE(rel.string());
    CHECK(slurp(entry.path()) == slurp(d4 / rel));
    ++compared;
  }
  CHECK(compared > 10);
  fs::remove_all(d1);
  fs::remove_all(d4);
}

TEST_CASE("suite outputs parse back and the summary matches the runs") {
  Suite s = make_suite("table2");
  s.cfg = tiny_config();
  s.conditions.resize(2);
  s.seeds = {1, 2, 3};
  SuiteResult res = run_suite(s, 2);
  const fs::path dir = fresh_dir("outputs");
  write_suite_outputs(res, dir);

  for (const char* f : {"runs.csv", "summary.csv", "distances.csv",
                        "centers.csv", "manifest.json"})
    CHECK(fs::exists(dir / f));
  CHECK(fs::exists(dir / "curves" / (s.conditions[0].name + "_seed1.csv")));
  CHECK(fs::exists(dir / "curves" / (s.conditions[0].name + "_mean.csv")));
  CHECK(fs::exists(dir / "traces" / (s.conditions[1].name + "_seed3.csv")));
  CHECK(fs::exists(dir / "checkpoints" / (s.conditions[0].name + "_seed2.evcp")));

  csv::Table runs = csv::read_csv(dir / "runs.csv");
  REQUIRE(runs.rows.size() == 6);
  const int ctest = runs.column("test_error");
  const int ccond = runs.column("condition");

  csv::Table summary = csv::read_csv(dir / "summary.csv");
  REQUIRE(summary.rows.size() == 2);
  for (const auto& row : summary.rows) {
    const std::string cond = row[std::size_t(summary.column("condition"))];
    std::vector<double> errs;
    for (const auto& rrow : runs.rows)
      if (rrow[std::size_t(ccond)] == cond)
        errs.push_back(std::stod(rrow[std::size_t(ctest)]));
    REQUIRE(errs.size() == 3);
    CHECK(std::stod(row[std::size_t(summary.column("test_mean"))]) ==
          doctest::Approx(mean_of(errs)).epsilon(1e-12));
    CHECK(std::stod(row[std::size_t(summary.column("test_stdev"))]) ==
          doctest::Approx(stdev_of(errs)).epsilon(1e-12));
    CHECK(std::stoi(row[std::size_t(summary.column("n"))]) == 3);
  }

  // distances.csv: six rows per gated condition, names in fixed pair order
  csv::Table dist = csv::read_csv(dir / "distances.csv");
  CHECK(dist.rows.size() == 12);
  CHECK(dist.rows[0][std::size_t(dist.column("pair"))] == "add_sin");
  CHECK(dist.rows[5][std::size_t(dist.column("pair"))] == "sub_con");

  // manifest in the output dir reruns the same suite
  Suite again = suite_from_manifest(slurp(dir / "manifest.json"));
  CHECK(suite_to_manifest(again) == suite_to_manifest(s));
  fs::remove_all(dir);
}

TEST_CASE("csv formatting round-trips doubles exactly") {
  for (double v : {0.1, -1.0 / 3.0, 1e-17, 123456789.123456789, 0.0}) {
    const std::string s = csv::fmt(v);
    CHECK(std::stod(s) == v);
  }
}
