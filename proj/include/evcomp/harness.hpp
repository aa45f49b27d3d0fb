#pragma once

#include <array>
#include <string>
#include <vector>

#include "evcomp/event_world.hpp"
#include "evcomp/models.hpp"

namespace evc {

// When to apply a parameter update. fixed(n): every n steps. random(lo,hi):
// each window length drawn uniformly from [lo, hi].
struct UpdatePolicy {
  enum class Kind { fixed, random };
  Kind kind = Kind::fixed;
  int n = 20;
  int lo = 1, hi = 1;

  int draw(Rng& rng) const;
  int max_len() const;
  std::string name() const;  // "fixed(20)", "random(1,20)"
};
UpdatePolicy parse_update_policy(const std::string& text);

// One experiment cell: model kind plus the stream and schedule knobs.
struct Condition {
  std::string name;
  ModelKind model = ModelKind::hierarchy;
  bool with_ci = false;  // single nets: append CI to the [x, y] input
  CiMode ci_mode = CiMode::none;
  GateMode gate_mode = GateMode::open_at_switch;
  OrderMode order = OrderMode::fixed;
  LstmcInput lstmc_input = LstmcInput::ci;
  bool ctx_weighted = true;
  UpdatePolicy update;
};

struct TrainConfig {
  int epochs = 2000;
  int steps_per_epoch = 2000;
  OptimizerConfig opt;  // adam, lr 1e-4
  int test_iterations = 150;
  int test_seq_len = 200;
  int final_error_window = 50;  // epochs averaged into the final train error
  int trace_export_steps = 200;
  double divergence_threshold = 1e3;
  ModelDims dims;
};

// Seed sub-stream layout for one run (master = Rng(seed)):
//   0           weight init
//   1           update-policy draws
//   2 + e       training stream for epoch e
//   2 + epochs + i   test sequence i
inline constexpr unsigned long long kStreamWeights = 0;
inline constexpr unsigned long long kStreamPolicy = 1;
inline constexpr unsigned long long kStreamTrainBase = 2;

struct TrainResult {
  std::vector<double> curve;  // per-epoch train MAE
  double final_train_error = 0.0;
  bool diverged = false;
  // 1-based step numbers at which updates fired during the first epoch
  std::vector<int> update_steps_first_epoch;
};

TrainResult train_one(ModelBase& model, Optimizer& opt, const Condition& cond,
                      const TrainConfig& cfg, Rng& master);

struct TraceRow {
  int t = 0;
  EventType event = EventType::add;
  double x = 0.0, y = 0.0, target = 0.0;
  double prediction = 0.0, surprise = 0.0;
  Vec gate_h, compression;  // empty for single nets
};

struct EvalResult {
  double test_error = 0.0;  // MAE, mean over sequences
  std::vector<double> per_sequence;
  std::array<Vec, kNumEvents> gate_sum;  // accumulated gate outputs per event
  std::array<long, kNumEvents> gate_count{};
  std::vector<TraceRow> trace;  // first sequence, up to trace_export_steps
};

// Frozen-weight evaluation on fresh sequences; does not touch gradients.
EvalResult evaluate(ModelBase& model, const Condition& cond,
                    const TrainConfig& cfg, Rng& master);

// Mean gate output per event and the six pairwise Euclidean distances, in
// the order: add-sin, add-sub, add-con, sin-sub, sin-con, sub-con.
inline constexpr std::array<const char*, 6> kPairNames = {
    "add_sin", "add_sub", "add_con", "sin_sub", "sin_con", "sub_con"};
inline constexpr std::array<std::array<int, 2>, 6> kPairs = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

struct ClusterResult {
  std::array<Vec, kNumEvents> centers;
  std::array<double, 6> distances{};
};

ClusterResult cluster_analysis(const std::array<Vec, kNumEvents>& sums,
                               const std::array<long, kNumEvents>& counts);

struct RunResult {
  Condition cond;
  unsigned long long seed = 0;
  std::vector<double> curve;
  double final_train_error = 0.0;
  double test_error = 0.0;
  bool diverged = false;
  std::vector<int> update_steps_first_epoch;
  bool has_clusters = false;
  ClusterResult clusters;
  std::vector<TraceRow> trace;
  std::string checkpoint;  // serialized parameters
};

RunResult run_single(const Condition& cond, unsigned long long seed,
                     const TrainConfig& cfg);

// Small stats used by the result tables.
double mean_of(const std::vector<double>& v);
double stdev_of(const std::vector<double>& v);   // sample, n-1
double median_of(std::vector<double> v);         // by value: sorts a copy

}  // namespace evc
