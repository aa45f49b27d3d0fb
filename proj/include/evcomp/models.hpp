#pragma once

#include <array>
#include <memory>
#include <vector>

#include "evcomp/cells.hpp"
#include "evcomp/event_world.hpp"

namespace evc {

struct StepInput {
  double x = 0.0;
  double y = 0.0;
  std::array<double, 4> ci{};
  double surprise = 0.0;     // drives the switch gate
  double lstmc_drive = 0.0;  // context-layer input in surprise-input mode
};

// Per-step record of what the hierarchy produced (figures + clustering).
struct StepTrace {
  double prediction = 0.0;
  double surprise = 0.0;
  Vec compression;  // context layer output
  Vec gate_h;       // gate output passed to the function layer
};

struct ModelDims {
  int lstmc_hidden = 8;  // == compression size == gate size
  int lstmf_hidden = 10;
  int pre_hidden = 20;
  int pre_out = 10;
  int single_lstm_hidden = 10;
  int mlp_hidden = 50;  // single-MLP baseline and MLPf hidden layers
};

enum class LstmcInput { ci, surprise };

enum class ModelKind { single_lstm, single_mlp, hierarchy, hierarchy_mlpf };
const char* model_kind_name(ModelKind m);

// Common surface the training loop drives. forward() caches into `slot`;
// backward_window() recomputes all parameter gradients for slots [0, n)
// from scratch (it zeroes them first). Recurrent state is unaffected by
// backward passes and persists across windows until reset_state().
class ModelBase {
 public:
  virtual ~ModelBase() = default;
  virtual void reset_state() = 0;
  virtual void ensure_capacity(int slots) = 0;
  virtual double forward(const StepInput& in, int slot,
                         StepTrace* trace = nullptr) = 0;
  virtual void backward_window(int n, const std::vector<double>& dpred) = 0;
  virtual void collect_params(ParamViews& out) = 0;
  virtual void collect_grads(ParamViews& out) = 0;
};

// LSTM (10 hidden) or MLP (50,50) baseline on input [x, y] or [x, y, ci].
class SingleNet : public ModelBase {
 public:
  SingleNet(ModelKind kind, bool with_ci, const ModelDims& dims, Rng& rng);

  void reset_state() override;
  void ensure_capacity(int slots) override;
  double forward(const StepInput& in, int slot, StepTrace* trace) override;
  void backward_window(int n, const std::vector<double>& dpred) override;
  void collect_params(ParamViews& out) override;
  void collect_grads(ParamViews& out) override;

  Lstm& lstm() { return lstm_; }
  Mlp& readout() { return readout_; }
  Mlp& mlp() { return mlp_; }

 private:
  ModelKind kind_;
  bool with_ci_;
  Lstm lstm_;
  Mlp readout_;  // hidden -> 1, only for the LSTM kind
  Mlp mlp_;
  Vec input_, done_;
  std::vector<Vec> dh_extra_;
};

// The full gated hierarchy:
//   LSTMc(ci) -> compression -> SwitchGru(compression, surprise) -> context
//   inputPrePro(x, y) -> features
//   LSTMf([features; context]) -> linear readout -> prediction
// One MSE loss at the prediction; gradients flow back through the gate into
// LSTMc. Nothing flows into the surprise or CI inputs.
class Hierarchy : public ModelBase {
 public:
  struct Config {
    ModelDims dims;
    LstmcInput lstmc_input = LstmcInput::ci;
    bool ctx_weighted = true;  // false: fixed identity block in LSTMf's W
    bool mlpf = false;         // replace LSTMf+readout by an MLP
  };

  Hierarchy(const Config& cfg, Rng& rng);

  void reset_state() override;
  void ensure_capacity(int slots) override;
  double forward(const StepInput& in, int slot, StepTrace* trace) override;
  void backward_window(int n, const std::vector<double>& dpred) override;
  void collect_params(ParamViews& out) override;
  void collect_grads(ParamViews& out) override;

  const Config& config() const { return cfg_; }

  Lstm lstmc;
  SwitchGru gate;
  Mlp pre;
  Lstm lstmf;
  Mlp readout;
  Mlp mlpf;

 private:
  void freeze_ctx_block();  // unweighted mode: identity block, not trained
  void zero_ctx_block_grads();

  Config cfg_;
  Vec ci_in_, xy_, fin_, done_, dfeat_;
  std::vector<Vec> dh_f_, dxf_, dctx_, dcomp_;
};

std::unique_ptr<ModelBase> make_model(ModelKind kind, bool with_ci,
                                      const ModelDims& dims,
                                      LstmcInput lstmc_input, bool ctx_weighted,
                                      Rng& rng);

}  // namespace evc
