#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evcomp/csv.hpp"
#include "evcomp/gradcheck.hpp"
#include "evcomp/suites.hpp"
#include "evcomp/version.hpp"
#include "svg.hpp"

namespace fs = std::filesystem;
using namespace evc;

namespace {

// ------------------------------------------------------------ config keys

int to_int(const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    const int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": expected an integer, got '" + v +
                                "'");
  }
}

double to_double(const std::string& v, const std::string& where) {
  try {
    size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": expected a number, got '" + v +
                                "'");
  }
}

std::vector<unsigned long long> parse_seeds(const std::string& v,
                                            const std::string& where) {
  std::vector<unsigned long long> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw std::invalid_argument(where + ": bad seed '" + tok + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument(where + ": empty seed list");
  return out;
}

// One uniform entry point for config-file keys and CLI overrides, so both
// produce the same messages and the same precedence behavior.
void apply_kv(Suite& suite, const std::string& key, const std::string& value,
              const std::string& where) {
  TrainConfig& c = suite.cfg;
  if (key == "epochs")
    c.epochs = to_int(value, where);
  else if (key == "steps_per_epoch")
    c.steps_per_epoch = to_int(value, where);
  else if (key == "lr")
    c.opt.lr = to_double(value, where);
  else if (key == "optimizer") {
    if (value == "adam")
      c.opt.kind = OptimizerConfig::Kind::adam;
    else if (value == "sgd")
      c.opt.kind = OptimizerConfig::Kind::sgd;
    else
      throw std::invalid_argument(where + ": optimizer must be adam or sgd");
  } else if (key == "beta1")
    c.opt.beta1 = to_double(value, where);
  else if (key == "beta2")
    c.opt.beta2 = to_double(value, where);
  else if (key == "eps")
    c.opt.eps = to_double(value, where);
  else if (key == "test_iterations")
    c.test_iterations = to_int(value, where);
  else if (key == "test_seq_len")
    c.test_seq_len = to_int(value, where);
  else if (key == "final_error_window")
    c.final_error_window = to_int(value, where);
  else if (key == "trace_export_steps")
    c.trace_export_steps = to_int(value, where);
  else if (key == "divergence_threshold")
    c.divergence_threshold = to_double(value, where);
  else if (key == "seeds")
    suite.seeds = parse_seeds(value, where);
  else if (key == "update") {
    UpdatePolicy p;
    try {
      p = parse_update_policy(value);
    } catch (const std::exception& e) {
      throw std::invalid_argument(where + ": " + e.what());
    }
    for (Condition& cond : suite.conditions) cond.update = p;
  } else {
    throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

void load_config_file(Suite& suite, const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::invalid_argument("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (eq == std::string::npos)
      throw std::invalid_argument(where + ": expected key = value");
    apply_kv(suite, trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
             where);
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --------------------------------------------------------------- run

struct RunArgs {
  std::string suite;
  std::string config_file;
  std::string manifest;
  std::string out;
  int jobs = 1;
  std::vector<std::pair<std::string, std::string>> overrides;  // key, value
};

int cmd_run(const RunArgs& args) {
  Suite suite;
  if (!args.manifest.empty()) {
    suite = suite_from_manifest(read_file(args.manifest));
  } else {
    suite = make_suite(args.suite);
    if (!args.config_file.empty()) load_config_file(suite, args.config_file);
  }
  for (const auto& [key, value] : args.overrides)
    apply_kv(suite, key, value, "--" + key);

  fs::path out_dir;
  if (!args.out.empty()) {
    out_dir = args.out;
  } else {
    const char* base = std::getenv("EVCOMP_OUT");
    out_dir = (base ? fs::path(base) : fs::path("out")) / suite.name;
  }

  std::printf("suite %s: %zu conditions x %zu seeds, %d job(s) -> %s\n",
              suite.name.c_str(), suite.conditions.size(), suite.seeds.size(),
              args.jobs, out_dir.string().c_str());
  std::fflush(stdout);

  const ProgressFn progress = [](const RunResult& r, int done, int total) {
    std::printf("[%3d/%3d] %-22s seed %-3llu train %.4f  test %.4f%s\n", done,
                total, r.cond.name.c_str(), r.seed, r.final_train_error,
                r.test_error, r.diverged ? "  (diverged)" : "");
    std::fflush(stdout);
  };
  SuiteResult res = run_suite(suite, args.jobs, progress);
  write_suite_outputs(res, out_dir);

  const size_t ns = suite.seeds.size();
  std::printf("\n%-22s %10s %10s %10s %10s  %s\n", "condition", "train_mean",
              "train_sd", "test_mean", "test_sd", "div");
  for (size_t ci = 0; ci < suite.conditions.size(); ++ci) {
    std::vector<double> train, test;
    int ndiv = 0;
    for (size_t si = 0; si < ns; ++si) {
      const RunResult& r = res.runs[ci * ns + si];
      if (r.diverged) {
        ++ndiv;
        continue;
      }
      train.push_back(r.final_train_error);
      test.push_back(r.test_error);
    }
    std::printf("%-22s %10.4f %10.4f %10.4f %10.4f  %d\n",
                suite.conditions[ci].name.c_str(), mean_of(train),
                stdev_of(train), mean_of(test), stdev_of(test), ndiv);
  }
  std::printf("\nwrote %s\n", out_dir.string().c_str());
  return 0;
}

// --------------------------------------------------------------- plot

const char* event_color(const std::string& name) {
  if (name == "add") return "#4c72b0";
  if (name == "sin") return "#dd8452";
  if (name == "sub") return "#55a868";
  if (name == "con") return "#c44e52";
  return "#999999";
}

const char* line_color(size_t i) {
  static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52",
                                  "#8172b3", "#937860", "#da8bc3", "#8c8c8c"};
  return palette[i % 8];
}

int need_col(const evc::csv::Table& t, const std::string& name,
             const std::string& file) {
  const int c = t.column(name);
  if (c < 0)
    throw std::runtime_error(file + ": missing column '" + name + "'");
  return c;
}

void plot_curve_file(const fs::path& file, const fs::path& out_dir,
                     int& produced) {
  const auto t = evc::csv::read_csv(file);
  const int ce = need_col(t, "epoch", file.string());
  const int cm = need_col(t, "mean", file.string());
  const int cs = need_col(t, "stdev", file.string());
  svgplot::Plot p;
  std::string stem = file.stem().string();  // "<cond>_mean"
  stem.erase(stem.size() - 5);
  p.title = stem + ": training error";
  p.xlabel = "epoch";
  p.ylabel = "MAE";
  svgplot::Series line;
  svgplot::Band band;
  for (const auto& row : t.rows) {
    const double e = std::stod(row[(size_t)ce]);
    const double m = std::stod(row[(size_t)cm]);
    const double s = std::stod(row[(size_t)cs]);
    line.x.push_back(e);
    line.y.push_back(m);
    band.x.push_back(e);
    band.lo.push_back(m - s);
    band.hi.push_back(m + s);
  }
  p.bands.push_back(std::move(band));
  p.series.push_back(std::move(line));
  p.save((out_dir / ("curve_" + stem + ".svg")).string());
  ++produced;
}

void plot_trace_file(const fs::path& file, const fs::path& out_dir,
                     int& produced) {
  const auto t = evc::csv::read_csv(file);
  const int ct = need_col(t, "t", file.string());
  const int cev = need_col(t, "event", file.string());
  std::vector<int> gate_cols, comp_cols;
  for (size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i].rfind("gate_h", 0) == 0) gate_cols.push_back((int)i);
    if (t.header[i].rfind("comp", 0) == 0) comp_cols.push_back((int)i);
  }
  if (gate_cols.empty() && comp_cols.empty()) return;  // single-net trace

  // event-colored background spans
  std::vector<svgplot::Span> spans;
  std::string cur;
  double start = 0;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const double tt = std::stod(t.rows[r][(size_t)ct]);
    const std::string& ev = t.rows[r][(size_t)cev];
    if (ev != cur) {
      if (!cur.empty())
        spans.push_back({start, tt, event_color(cur), 0.13});
      cur = ev;
      start = tt;
    }
    if (r + 1 == t.rows.size())
      spans.push_back({start, tt + 1, event_color(cur), 0.13});
  }

  auto draw = [&](const std::vector<int>& cols, const std::string& what) {
    svgplot::Plot p;
    p.title = file.stem().string() + ": " + what;
    p.xlabel = "step";
    p.ylabel = what;
    p.spans = spans;
    for (size_t k = 0; k < cols.size(); ++k) {
      svgplot::Series s;
      s.color = line_color(k);
      s.width = 1.2;
      for (const auto& row : t.rows) {
        s.x.push_back(std::stod(row[(size_t)ct]));
        s.y.push_back(std::stod(row[(size_t)cols[k]]));
      }
      p.series.push_back(std::move(s));
    }
    p.save((out_dir / (what + "_" + file.stem().string() + ".svg")).string());
    ++produced;
  };
  if (!gate_cols.empty()) draw(gate_cols, "gate");
  if (!comp_cols.empty()) draw(comp_cols, "compression");
}

void plot_centers(const fs::path& file, const fs::path& out_dir,
                  int& produced) {
  const auto t = evc::csv::read_csv(file);
  const int cc = need_col(t, "condition", file.string());
  const int cs = need_col(t, "seed", file.string());
  const int ce = need_col(t, "event", file.string());
  std::vector<int> dims;
  for (size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i].size() >= 2 && t.header[i][0] == 'c' &&
        std::isdigit((unsigned char)t.header[i][1]))
      dims.push_back((int)i);
  if (dims.empty())
    throw std::runtime_error(file.string() + ": missing columns 'c0..'");

  std::map<std::string, std::vector<size_t>> by_cond;
  std::map<std::string, int> seed_index;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    by_cond[t.rows[r][(size_t)cc]].push_back(r);
    seed_index.emplace(t.rows[r][(size_t)cs], (int)seed_index.size());
  }
  const int nseeds = std::max(1, (int)seed_index.size());
  for (const auto& [cond, rows] : by_cond) {
    svgplot::Plot p;
    p.title = cond + ": gate-output centers per seed";
    p.xlabel = "unit";
    p.ylabel = "center value";
    for (const auto& ev : {"add", "sin", "sub", "con"})
      p.legend.push_back({ev, event_color(ev)});
    for (size_t r : rows) {
      const int si = seed_index[t.rows[r][(size_t)cs]];
      const char* color = event_color(t.rows[r][(size_t)ce]);
      for (size_t k = 0; k < dims.size(); ++k) {
        const double jitter = (si - 0.5 * (nseeds - 1)) * (0.8 / nseeds);
        p.points.push_back({(double)k + jitter,
                            std::stod(t.rows[r][(size_t)dims[k]]), color,
                            2.6});
      }
    }
    p.save((out_dir / ("centers_" + cond + ".svg")).string());
    ++produced;
  }
}

int cmd_plot(const std::string& dir, const std::string& out) {
  const fs::path d(dir);
  if (!fs::exists(d))
    throw std::runtime_error("results directory " + dir + " does not exist");
  const fs::path po = out.empty() ? d / "plots" : fs::path(out);
  fs::create_directories(po);
  int produced = 0;

  if (fs::exists(d / "curves"))
    for (const auto& e : fs::directory_iterator(d / "curves")) {
      const std::string name = e.path().filename().string();
      if (name.size() > 9 && name.rfind("_mean.csv") == name.size() - 9)
        plot_curve_file(e.path(), po, produced);
    }
  if (fs::exists(d / "traces"))
    for (const auto& e : fs::directory_iterator(d / "traces"))
      if (e.path().extension() == ".csv") plot_trace_file(e.path(), po, produced);
  if (fs::exists(d / "centers.csv")) plot_centers(d / "centers.csv", po, produced);

  if (produced == 0)
    throw std::runtime_error("no plottable CSV files under " + dir);
  std::printf("wrote %d plot(s) to %s\n", produced, po.string().c_str());
  return 0;
}

// --------------------------------------------------------------- gradcheck

int cmd_gradcheck(int seeds, double rtol) {
  const auto reports = gradcheck_all(seeds, rtol);
  int failures = 0;
  for (const auto& r : reports) {
    std::printf("%-22s max rel error %.3e  %s\n", r.component.c_str(),
                r.max_rel_error, r.pass ? "PASS" : "FAIL");
    if (!r.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

// --------------------------------------------------------------- fixtures

int cmd_fixtures(const std::string& out, unsigned long long seed, int steps) {
  const fs::path dir(out.empty() ? "fixtures" : out);
  fs::create_directories(dir);
  Rng master(seed);

  {
    std::ofstream f(dir / "rng_u64.csv");
    f << "i,value\n";
    Rng r(seed);
    for (int i = 0; i < 32; ++i) f << i << ',' << r.next_u64() << '\n';
  }
  {
    std::ofstream f(dir / "rng_uniform.csv");
    f << "i,value\n";
    Rng r = master.stream(1);
    for (int i = 0; i < 32; ++i) f << i << ',' << evc::csv::fmt(r.uniform()) << '\n';
  }

  struct Fixture {
    const char* file;
    OrderMode order;
    CiMode ci;
    GateMode gate;
  };
  const Fixture fixtures[] = {
      {"stream_intune_oas.csv", OrderMode::fixed, CiMode::in_tune,
       GateMode::open_at_switch},
      {"stream_early_gradual.csv", OrderMode::fixed, CiMode::early_switch,
       GateMode::gradual},
      {"stream_none_closed.csv", OrderMode::random, CiMode::none,
       GateMode::always_closed},
  };
  int k = 0;
  for (const Fixture& fx : fixtures) {
    Rng r = master.stream(10 + (unsigned long long)k++);
    EventSchedule sched = make_schedule(r, steps, fx.order);
    EventStream stream = make_stream(r, sched, fx.ci, fx.gate);
    std::ofstream f(dir / fx.file);
    write_stream_csv(stream, f);
  }
  std::printf("wrote rng_u64.csv rng_uniform.csv and %zu stream fixtures to %s\n",
              std::size(fixtures), dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-compression experiment driver"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kCodeVersion));

  RunArgs run_args;
  // flag name -> config key, applied through the same path as config files
  std::map<std::string, std::string> flag_vals;
  auto* run = app.add_subcommand("run", "run an experiment suite");
  run->add_option("suite", run_args.suite,
                  "suite name (table1, table2, table3, table4)");
  run->add_option("--config", run_args.config_file,
                  "key = value config file");
  run->add_option("--from-manifest", run_args.manifest,
                  "repeat a previous run from its manifest.json");
  run->add_option("--out", run_args.out,
                  "output directory (default $EVCOMP_OUT/<suite> or out/<suite>)");
  run->add_option("--jobs", run_args.jobs, "parallel workers")
      ->check(CLI::PositiveNumber);
  for (const char* key :
       {"epochs", "steps_per_epoch", "lr", "optimizer", "beta1", "beta2",
        "eps", "test_iterations", "test_seq_len", "final_error_window",
        "trace_export_steps", "divergence_threshold", "seeds", "update"})
    run->add_option("--" + std::string(key), flag_vals[key],
                    "override config key " + std::string(key));

  std::string plot_dir, plot_out;
  auto* plot = app.add_subcommand("plot", "render SVG charts from a results directory");
  plot->add_option("--dir", plot_dir, "suite output directory")->required();
  plot->add_option("--out", plot_out, "plot output directory (default <dir>/plots)");

  int gc_seeds = 20;
  double gc_rtol = 1e-5;
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of all backward passes");
  gradcheck->add_option("--seeds", gc_seeds, "random seeds per component")
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--rtol", gc_rtol, "max allowed relative error");

  std::string fx_out;
  unsigned long long fx_seed = 1;
  int fx_steps = 200;
  auto* fixtures = app.add_subcommand(
      "gen-fixtures", "export RNG and event-stream fixtures for cross-checks");
  fixtures->add_option("--out", fx_out, "fixture directory (default fixtures/)");
  fixtures->add_option("--seed", fx_seed, "fixture seed");
  fixtures->add_option("--steps", fx_steps, "stream length")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(run)) {
      if (run_args.manifest.empty() && run_args.suite.empty())
        throw std::invalid_argument(
            "run: give a suite name or --from-manifest");
      if (!run_args.manifest.empty() && !run_args.suite.empty())
        throw std::invalid_argument(
            "run: suite name and --from-manifest are mutually exclusive");
      for (const auto& [key, value] : flag_vals)
        if (!value.empty()) run_args.overrides.emplace_back(key, value);
      return cmd_run(run_args);
    }
    if (app.got_subcommand(plot)) return cmd_plot(plot_dir, plot_out);
    if (app.got_subcommand(gradcheck)) return cmd_gradcheck(gc_seeds, gc_rtol);
    if (app.got_subcommand(fixtures))
      return cmd_fixtures(fx_out, fx_seed, fx_steps);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
