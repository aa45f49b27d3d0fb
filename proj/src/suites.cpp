#include "evcomp/suites.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "evcomp/csv.hpp"
#include "evcomp/version.hpp"

namespace evc {
namespace {

using nlohmann::json;

const char* lstmc_input_name(LstmcInput v) {
  return v == LstmcInput::ci ? "ci" : "surprise";
}

ModelKind model_kind_from_name(const std::string& s) {
  for (ModelKind m : {ModelKind::single_lstm, ModelKind::single_mlp,
                      ModelKind::hierarchy, ModelKind::hierarchy_mlpf})
    if (s == model_kind_name(m)) return m;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

CiMode ci_from_name(const std::string& s) {
  for (CiMode m : {CiMode::none, CiMode::in_tune, CiMode::early_switch})
    if (s == ci_name(m)) return m;
  throw std::invalid_argument("unknown CI mode '" + s + "'");
}

GateMode gate_from_name(const std::string& s) {
  for (GateMode m : {GateMode::always_closed, GateMode::always_open,
                     GateMode::open_at_switch, GateMode::gradual})
    if (s == gate_name(m)) return m;
  throw std::invalid_argument("unknown gate mode '" + s + "'");
}

OrderMode order_from_name(const std::string& s) {
  for (OrderMode m : {OrderMode::fixed, OrderMode::random})
    if (s == order_name(m)) return m;
  throw std::invalid_argument("unknown order mode '" + s + "'");
}

LstmcInput lstmc_input_from_name(const std::string& s) {
  if (s == "ci") return LstmcInput::ci;
  if (s == "surprise") return LstmcInput::surprise;
  throw std::invalid_argument("unknown context-layer input '" + s + "'");
}

json cond_to_json(const Condition& c) {
  return json{{"name", c.name},
              {"model", model_kind_name(c.model)},
              {"with_ci", c.with_ci},
              {"ci", ci_name(c.ci_mode)},
              {"gate", gate_name(c.gate_mode)},
              {"order", order_name(c.order)},
              {"lstmc_input", lstmc_input_name(c.lstmc_input)},
              {"ctx_weighted", c.ctx_weighted},
              {"update", c.update.name()}};
}

Condition cond_from_json(const json& j) {
  Condition c;
  c.name = j.at("name").get<std::string>();
  c.model = model_kind_from_name(j.at("model").get<std::string>());
  c.with_ci = j.at("with_ci").get<bool>();
  c.ci_mode = ci_from_name(j.at("ci").get<std::string>());
  c.gate_mode = gate_from_name(j.at("gate").get<std::string>());
  c.order = order_from_name(j.at("order").get<std::string>());
  c.lstmc_input = lstmc_input_from_name(j.at("lstmc_input").get<std::string>());
  c.ctx_weighted = j.at("ctx_weighted").get<bool>();
  c.update = parse_update_policy(j.at("update").get<std::string>());
  return c;
}

json cfg_to_json(const TrainConfig& c) {
  return json{
      {"epochs", c.epochs},
      {"steps_per_epoch", c.steps_per_epoch},
      {"optimizer", c.opt.kind == OptimizerConfig::Kind::adam ? "adam" : "sgd"},
      {"lr", c.opt.lr},
      {"beta1", c.opt.beta1},
      {"beta2", c.opt.beta2},
      {"eps", c.opt.eps},
      {"test_iterations", c.test_iterations},
      {"test_seq_len", c.test_seq_len},
      {"final_error_window", c.final_error_window},
      {"trace_export_steps", c.trace_export_steps},
      {"divergence_threshold", c.divergence_threshold},
      {"dims",
       json{{"lstmc_hidden", c.dims.lstmc_hidden},
            {"lstmf_hidden", c.dims.lstmf_hidden},
            {"pre_hidden", c.dims.pre_hidden},
            {"pre_out", c.dims.pre_out},
            {"single_lstm_hidden", c.dims.single_lstm_hidden},
            {"mlp_hidden", c.dims.mlp_hidden}}}};
}

TrainConfig cfg_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  const std::string opt = j.at("optimizer").get<std::string>();
  if (opt == "adam")
    c.opt.kind = OptimizerConfig::Kind::adam;
  else if (opt == "sgd")
    c.opt.kind = OptimizerConfig::Kind::sgd;
  else
    throw std::invalid_argument("unknown optimizer '" + opt + "'");
  c.opt.lr = j.at("lr").get<double>();
  c.opt.beta1 = j.at("beta1").get<double>();
  c.opt.beta2 = j.at("beta2").get<double>();
  c.opt.eps = j.at("eps").get<double>();
  c.test_iterations = j.at("test_iterations").get<int>();
  c.test_seq_len = j.at("test_seq_len").get<int>();
  c.final_error_window = j.at("final_error_window").get<int>();
  c.trace_export_steps = j.at("trace_export_steps").get<int>();
  c.divergence_threshold = j.at("divergence_threshold").get<double>();
  const json& d = j.at("dims");
  c.dims.lstmc_hidden = d.at("lstmc_hidden").get<int>();
  c.dims.lstmf_hidden = d.at("lstmf_hidden").get<int>();
  c.dims.pre_hidden = d.at("pre_hidden").get<int>();
  c.dims.pre_out = d.at("pre_out").get<int>();
  c.dims.single_lstm_hidden = d.at("single_lstm_hidden").get<int>();
  c.dims.mlp_hidden = d.at("mlp_hidden").get<int>();
  return c;
}

}  // namespace

Suite make_suite(const std::string& which) {
  Suite s;
  s.name = which;
  s.seeds.resize(10);
  std::iota(s.seeds.begin(), s.seeds.end(), 1ull);

  auto add = [&s](Condition c) { s.conditions.push_back(std::move(c)); };

  if (which == "table1") {
    struct Row {
      const char* tag;
      bool with_ci;
      CiMode ci;
      OrderMode order;
    };
    const Row rows[] = {
        {"no_ci", false, CiMode::none, OrderMode::fixed},
        {"ci_fixed_order", true, CiMode::in_tune, OrderMode::fixed},
        {"ci_random_order", true, CiMode::in_tune, OrderMode::random},
        {"ci_early", true, CiMode::early_switch, OrderMode::fixed},
    };
    for (ModelKind m : {ModelKind::single_lstm, ModelKind::single_mlp}) {
      const std::string prefix =
          m == ModelKind::single_lstm ? "lstm_" : "mlp_";
      for (const Row& r : rows) {
        Condition c;
        c.name = prefix + r.tag;
        c.model = m;
        c.with_ci = r.with_ci;
        c.ci_mode = r.ci;
        c.order = r.order;
        c.gate_mode = GateMode::always_closed;  // single nets ignore the gate
        add(std::move(c));
      }
    }
  } else if (which == "table2") {
    const std::pair<const char*, GateMode> gates[] = {
        {"h_closed", GateMode::always_closed},
        {"h_open", GateMode::always_open},
        {"h_oas", GateMode::open_at_switch},
        {"h_gradual", GateMode::gradual},
    };
    for (const auto& [name, gate] : gates) {
      Condition c;
      c.name = name;
      c.model = ModelKind::hierarchy;
      c.ci_mode = CiMode::early_switch;
      c.gate_mode = gate;
      add(std::move(c));
    }
  } else if (which == "table3") {
    struct Policy {
      const char* tag;
      UpdatePolicy p;
    };
    Policy policies[3];
    policies[0] = {"f35", {}};
    policies[0].p.kind = UpdatePolicy::Kind::fixed;
    policies[0].p.n = 35;
    policies[1] = {"r20_50", {}};
    policies[1].p.kind = UpdatePolicy::Kind::random;
    policies[1].p.lo = 20;
    policies[1].p.hi = 50;
    policies[2] = {"r10_30", {}};
    policies[2].p.kind = UpdatePolicy::Kind::random;
    policies[2].p.lo = 10;
    policies[2].p.hi = 30;
    const std::pair<const char*, GateMode> gates[] = {
        {"closed", GateMode::always_closed},
        {"open", GateMode::always_open},
        {"oas", GateMode::open_at_switch},
        {"gradual", GateMode::gradual},
    };
    for (const Policy& pol : policies) {
      for (const auto& [gtag, gate] : gates) {
        Condition c;
        c.name = std::string("h_") + gtag + "_" + pol.tag;
        c.model = ModelKind::hierarchy;
        c.ci_mode = CiMode::early_switch;
        c.gate_mode = gate;
        c.update = pol.p;
        add(std::move(c));
      }
    }
  } else if (which == "table4") {
    const std::pair<const char*, GateMode> gates[] = {
        {"closed", GateMode::always_closed},
        {"open", GateMode::always_open},
        {"oas", GateMode::open_at_switch},
    };
    for (const auto& [gtag, gate] : gates) {
      Condition c;
      c.name = std::string("surp_") + gtag;
      c.model = ModelKind::hierarchy;
      c.ci_mode = CiMode::none;
      c.lstmc_input = LstmcInput::surprise;
      c.gate_mode = gate;
      add(std::move(c));
    }
    for (const auto& [gtag, gate] : gates) {
      Condition c;
      c.name = std::string("intune_") + gtag;
      c.model = ModelKind::hierarchy;
      c.ci_mode = CiMode::in_tune;
      c.gate_mode = gate;
      add(std::move(c));
    }
    for (const auto& [gtag, gate] : gates) {
      Condition c;
      c.name = std::string("mlpf_") + gtag;
      c.model = ModelKind::hierarchy_mlpf;
      c.ci_mode = CiMode::early_switch;
      c.gate_mode = gate;
      add(std::move(c));
    }
  } else {
    throw std::invalid_argument("unknown suite '" + which +
                                "' (expected table1..table4)");
  }
  return s;
}

SuiteResult run_suite(const Suite& suite, int jobs, const ProgressFn& progress) {
  require(jobs >= 1, "run_suite: jobs must be >= 1");
  require(!suite.conditions.empty() && !suite.seeds.empty(),
          "run_suite: empty suite");
  SuiteResult res;
  res.suite = suite;
  const int ns = (int)suite.seeds.size();
  const int total = (int)suite.conditions.size() * ns;
  res.runs.resize((size_t)total);

  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex mu;  // guards progress + first_error
  std::exception_ptr first_error;

  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= total) return;
      try {
        const auto& cond = suite.conditions[(size_t)(i / ns)];
        const auto seed = suite.seeds[(size_t)(i % ns)];
        res.runs[(size_t)i] = run_single(cond, seed, suite.cfg);
        const int d = done.fetch_add(1) + 1;
        if (progress) {
          std::lock_guard<std::mutex> lk(mu);
          progress(res.runs[(size_t)i], d, total);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        if (!first_error) first_error = std::current_exception();
        next.store(total);  // stop handing out work
        return;
      }
    }
  };

  const int n_threads = std::min(jobs, total);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve((size_t)n_threads);
    for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return res;
}

namespace {

namespace fs = std::filesystem;

std::string run_file_stem(const RunResult& r) {
  return r.cond.name + "_seed" + std::to_string(r.seed);
}

void write_runs_csv(const SuiteResult& res, const fs::path& dir) {
  std::ofstream f(dir / "runs.csv");
  f << "condition,seed,diverged,final_train_error,test_error\n";
  for (const RunResult& r : res.runs)
    f << r.cond.name << ',' << r.seed << ',' << (r.diverged ? 1 : 0) << ','
      << csv::fmt(r.final_train_error) << ',' << csv::fmt(r.test_error)
      << '\n';
}

void write_summary_csv(const SuiteResult& res, const fs::path& dir) {
  std::ofstream f(dir / "summary.csv");
  f << "condition,n,n_diverged,train_mean,train_stdev,train_median,"
       "test_mean,test_stdev,test_median\n";
  const size_t ns = res.suite.seeds.size();
  for (size_t ci = 0; ci < res.suite.conditions.size(); ++ci) {
    std::vector<double> train, test;
    int n_div = 0;
    for (size_t si = 0; si < ns; ++si) {
      const RunResult& r = res.runs[ci * ns + si];
      if (r.diverged) {
        ++n_div;
        continue;
      }
      train.push_back(r.final_train_error);
      test.push_back(r.test_error);
    }
    f << res.suite.conditions[ci].name << ',' << ns << ',' << n_div << ','
      << csv::fmt(mean_of(train)) << ',' << csv::fmt(stdev_of(train)) << ','
      << csv::fmt(median_of(train)) << ',' << csv::fmt(mean_of(test)) << ','
      << csv::fmt(stdev_of(test)) << ',' << csv::fmt(median_of(test)) << '\n';
  }
}

void write_distance_csvs(const SuiteResult& res, const fs::path& dir) {
  const size_t ns = res.suite.seeds.size();
  bool any = false;
  for (const RunResult& r : res.runs) any = any || r.has_clusters;
  if (!any) return;

  std::ofstream f(dir / "distances.csv");
  f << "condition,pair,mean,stdev\n";
  for (size_t ci = 0; ci < res.suite.conditions.size(); ++ci) {
    bool clustered = false;
    for (size_t si = 0; si < ns; ++si)
      clustered = clustered || res.runs[ci * ns + si].has_clusters;
    if (!clustered) continue;
    for (size_t p = 0; p < kPairs.size(); ++p) {
      std::vector<double> vals;
      for (size_t si = 0; si < ns; ++si) {
        const RunResult& r = res.runs[ci * ns + si];
        if (r.has_clusters && !r.diverged)
          vals.push_back(r.clusters.distances[p]);
      }
      f << res.suite.conditions[ci].name << ',' << kPairNames[p] << ','
        << csv::fmt(mean_of(vals)) << ',' << csv::fmt(stdev_of(vals)) << '\n';
    }
  }

  std::ofstream g(dir / "centers.csv");
  int k = 0;
  for (const RunResult& r : res.runs)
    if (r.has_clusters) {
      k = (int)r.clusters.centers[0].size();
      break;
    }
  g << "condition,seed,event";
  for (int i = 0; i < k; ++i) g << ",c" << i;
  g << '\n';
  for (const RunResult& r : res.runs) {
    if (!r.has_clusters) continue;
    for (int e = 0; e < kNumEvents; ++e) {
      g << r.cond.name << ',' << r.seed << ',' << event_name((EventType)e);
      const Vec& c = r.clusters.centers[(size_t)e];
      for (int i = 0; i < k; ++i) g << ',' << csv::fmt(c(i));
      g << '\n';
    }
  }
}

void write_curves(const SuiteResult& res, const fs::path& dir) {
  const fs::path cdir = dir / "curves";
  for (const RunResult& r : res.runs) {
    std::ofstream f(cdir / (run_file_stem(r) + ".csv"));
    f << "epoch,train_mae\n";
    for (size_t e = 0; e < r.curve.size(); ++e)
      f << e << ',' << csv::fmt(r.curve[e]) << '\n';
  }
  const size_t ns = res.suite.seeds.size();
  for (size_t ci = 0; ci < res.suite.conditions.size(); ++ci) {
    std::vector<const RunResult*> ok;
    for (size_t si = 0; si < ns; ++si) {
      const RunResult& r = res.runs[ci * ns + si];
      if (!r.diverged) ok.push_back(&r);
    }
    if (ok.empty()) continue;
    size_t epochs = ok.front()->curve.size();
    for (const RunResult* r : ok) epochs = std::min(epochs, r->curve.size());
    std::ofstream f(cdir /
                    (res.suite.conditions[ci].name + std::string("_mean.csv")));
    f << "epoch,mean,stdev\n";
    std::vector<double> vals;
    vals.reserve(ok.size());
    for (size_t e = 0; e < epochs; ++e) {
      vals.clear();
      for (const RunResult* r : ok) vals.push_back(r->curve[e]);
      f << e << ',' << csv::fmt(mean_of(vals)) << ',' << csv::fmt(stdev_of(vals))
        << '\n';
    }
  }
}

void write_traces(const SuiteResult& res, const fs::path& dir) {
  for (const RunResult& r : res.runs) {
    if (r.trace.empty()) continue;
    std::ofstream f(dir / "traces" / (run_file_stem(r) + ".csv"));
    const int gk = (int)r.trace.front().gate_h.size();
    const int ck = (int)r.trace.front().compression.size();
    f << "t,event";
    for (int i = 0; i < gk; ++i) f << ",gate_h" << i;
    for (int i = 0; i < ck; ++i) f << ",comp" << i;
    f << ",prediction,target,surprise\n";
    for (const TraceRow& row : r.trace) {
      f << row.t << ',' << event_name(row.event);
      for (int i = 0; i < gk; ++i) f << ',' << csv::fmt(row.gate_h(i));
      for (int i = 0; i < ck; ++i) f << ',' << csv::fmt(row.compression(i));
      f << ',' << csv::fmt(row.prediction) << ',' << csv::fmt(row.target)
        << ',' << csv::fmt(row.surprise) << '\n';
    }
  }
}

void write_checkpoints(const SuiteResult& res, const fs::path& dir) {
  for (const RunResult& r : res.runs) {
    std::ofstream f(dir / "checkpoints" / (run_file_stem(r) + ".evcp"),
                    std::ios::binary);
    f.write(r.checkpoint.data(), (std::streamsize)r.checkpoint.size());
  }
}

}  // namespace

void write_suite_outputs(const SuiteResult& result, const fs::path& out_dir) {
  fs::create_directories(out_dir / "curves");
  fs::create_directories(out_dir / "traces");
  fs::create_directories(out_dir / "checkpoints");
  write_runs_csv(result, out_dir);
  write_summary_csv(result, out_dir);
  write_distance_csvs(result, out_dir);
  write_curves(result, out_dir);
  write_traces(result, out_dir);
  write_checkpoints(result, out_dir);
  std::ofstream m(out_dir / "manifest.json");
  m << suite_to_manifest(result.suite);
}

std::string suite_to_manifest(const Suite& suite) {
  json j;
  j["suite"] = suite.name;
  j["code_version"] = kCodeVersion;
  j["seeds"] = suite.seeds;
  j["config"] = cfg_to_json(suite.cfg);
  json conds = json::array();
  for (const Condition& c : suite.conditions) conds.push_back(cond_to_json(c));
  j["conditions"] = std::move(conds);
  return j.dump(2) + "\n";
}

Suite suite_from_manifest(const std::string& json_text) {
  const json j = json::parse(json_text);
  Suite s;
  s.name = j.at("suite").get<std::string>();
  s.seeds = j.at("seeds").get<std::vector<unsigned long long>>();
  s.cfg = cfg_from_json(j.at("config"));
  for (const json& c : j.at("conditions")) s.conditions.push_back(cond_from_json(c));
  return s;
}

}  // namespace evc
