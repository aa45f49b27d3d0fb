#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "evcomp/numerics.hpp"
#include "evcomp/rng.hpp"

namespace evc {

// Flat named view over one parameter tensor. Vectors report cols == 1.
struct ParamView {
  std::string name;
  double* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};
using ParamViews = std::vector<ParamView>;

Eigen::Index total_size(const ParamViews& views);

// Flatten / restore through a contiguous vector (gradient checks).
Vec flatten(const ParamViews& views);
void unflatten(const ParamViews& views, const Vec& flat);

// Binary parameter container, fixed little-endian layout:
//   "EVCP" | u32 version=1 | u32 count
//   per entry: u32 name_len | name | u32 rows | u32 cols | rows*cols f64 (row-major)
std::string serialize_params(const ParamViews& views);
void deserialize_params(const ParamViews& views, const std::string& bytes);
void save_params(const ParamViews& views, const std::filesystem::path& file);
void load_params(const ParamViews& views, const std::filesystem::path& file);

// Glorot-uniform fill, entries drawn row-major.
void glorot_init(Mat& w, Rng& rng);

// Multilayer perceptron: tanh hidden layers, linear output layer.
// Per-step caches indexed by slot so a BPTT window can replay backwards.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> widths, Rng& rng);

  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }

  void ensure_capacity(int slots);
  const Vec& step(const Vec& x, int slot);
  // Accumulates parameter gradients; writes d(loss)/d(input) into *dx if given.
  void backward_step(const Vec& dout, int slot, Vec* dx);
  void zero_grads();

  void collect_params(const std::string& prefix, ParamViews& out);
  void collect_grads(const std::string& prefix, ParamViews& out);

  struct Layer {
    Mat W;
    Vec b;
    Mat dW;
    Vec db;
  };
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<int> widths_;
  std::vector<Layer> layers_;
  struct Slot {
    std::vector<Vec> act;  // act[0] = input, act[l+1] = output of layer l
  };
  std::vector<Slot> cache_;
  std::vector<Vec> dacts_;  // backward scratch, one per activation level
};

// LSTM with forget gate, packed gate order [i; f; g; o].
class Lstm {
 public:
  Lstm() = default;
  Lstm(int in_dim, int hidden, Rng& rng);  // Glorot W/U, b = 0, forget bias +1

  int in_dim() const { return in_dim_; }
  int hidden() const { return hidden_; }

  void reset_state();
  void set_state(const Vec& h, const Vec& c);
  const Vec& h() const { return h_; }
  const Vec& c() const { return c_; }

  void ensure_capacity(int slots);
  const Vec& step(const Vec& x, int slot);

  // BPTT over slots [0, n). dh_extra[t] is the gradient arriving at h_t from
  // outside the recurrence. Writes per-step input gradients into *dx_out if
  // given. Gradients are truncated at the window boundary: the state entering
  // slot 0 is treated as constant.
  void backward_window(int n, const std::vector<Vec>& dh_extra,
                       std::vector<Vec>* dx_out);
  void zero_grads();

  void collect_params(const std::string& prefix, ParamViews& out);
  void collect_grads(const std::string& prefix, ParamViews& out);

  Mat W, U;  // (4H x in), (4H x H)
  Vec b;     // 4H
  Mat dW, dU;
  Vec db;

 private:
  int in_dim_ = 0, hidden_ = 0;
  Vec h_, c_;
  struct Slot {
    Vec x, h_prev, c_prev;
    Vec i, f, g, o;  // post-activation gates
    Vec c_new, tanh_c;
  };
  std::vector<Slot> cache_;
  Vec pre_;                        // 4H scratch
  Vec dh_, dc_, da_, dgate_, dx_;  // backward scratch
};

// The switch GRU: update gate is unweighted and equal to the surprise signal,
// no reset gate. Candidate mixes new context with previous hidden state;
// output is their convex combination:
//   cand = tanh(Wc*context + Uh*h_prev + b)
//   h    = (1 - s)*h_prev + s*cand
// No gradient flows into s; it is an external signal.
class SwitchGru {
 public:
  SwitchGru() = default;
  SwitchGru(int ctx_dim, int hidden, Rng& rng);

  int ctx_dim() const { return ctx_dim_; }
  int hidden() const { return hidden_; }

  void reset_state();
  void set_state(const Vec& h);
  const Vec& h() const { return h_; }

  void ensure_capacity(int slots);
  // surprise must lie in [0,1]
  const Vec& step(const Vec& context, double surprise, int slot);

  void backward_window(int n, const std::vector<Vec>& dh_extra,
                       std::vector<Vec>* dctx_out);
  void zero_grads();

  void collect_params(const std::string& prefix, ParamViews& out);
  void collect_grads(const std::string& prefix, ParamViews& out);

  Mat Wc, Uh;
  Vec b;
  Mat dWc, dUh;
  Vec db;

 private:
  int ctx_dim_ = 0, hidden_ = 0;
  Vec h_;
  struct Slot {
    Vec ctx, h_prev, cand;
    double s = 0.0;
  };
  std::vector<Slot> cache_;
  Vec pre_, dh_, da_, dctx_tmp_;  // scratch
};

struct OptimizerConfig {
  enum class Kind { adam, sgd };
  Kind kind = Kind::adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction (or plain SGD). Moment buffers are aligned with
// the ParamViews order passed to init().
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void init(const ParamViews& params);
  void update(const ParamViews& params, const ParamViews& grads);
  long step_count() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace evc
