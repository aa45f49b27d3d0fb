#include "evcomp/models.hpp"

namespace evc {

const char* model_kind_name(ModelKind m) {
  switch (m) {
    case ModelKind::single_lstm: return "single_lstm";
    case ModelKind::single_mlp: return "single_mlp";
    case ModelKind::hierarchy: return "hierarchy";
    case ModelKind::hierarchy_mlpf: return "hierarchy_mlpf";
  }
  return "?";
}

// ---------------------------------------------------------------- SingleNet

SingleNet::SingleNet(ModelKind kind, bool with_ci, const ModelDims& dims,
                     Rng& rng)
    : kind_(kind), with_ci_(with_ci) {
  require(kind == ModelKind::single_lstm || kind == ModelKind::single_mlp,
          "SingleNet: kind must be single_lstm or single_mlp");
  const int in = 2 + (with_ci ? 4 : 0);
  if (kind_ == ModelKind::single_lstm) {
    lstm_ = Lstm(in, dims.single_lstm_hidden, rng);
    readout_ = Mlp({dims.single_lstm_hidden, 1}, rng);
  } else {
    mlp_ = Mlp({in, dims.mlp_hidden, dims.mlp_hidden, 1}, rng);
  }
  input_ = Vec::Zero(in);
  done_ = Vec::Zero(1);
}

void SingleNet::reset_state() {
  if (kind_ == ModelKind::single_lstm) lstm_.reset_state();
}

void SingleNet::ensure_capacity(int slots) {
  if (kind_ == ModelKind::single_lstm) {
    lstm_.ensure_capacity(slots);
    readout_.ensure_capacity(slots);
    if ((int)dh_extra_.size() < slots)
      dh_extra_.resize(slots, Vec::Zero(lstm_.hidden()));
  } else {
    mlp_.ensure_capacity(slots);
  }
}

double SingleNet::forward(const StepInput& in, int slot, StepTrace* trace) {
  input_(0) = in.x;
  input_(1) = in.y;
  if (with_ci_)
    for (int k = 0; k < 4; ++k) input_(2 + k) = in.ci[(size_t)k];
  double pred;
  if (kind_ == ModelKind::single_lstm)
    pred = readout_.step(lstm_.step(input_, slot), slot)(0);
  else
    pred = mlp_.step(input_, slot)(0);
  if (trace) {
    trace->prediction = pred;
    trace->surprise = in.surprise;
  }
  return pred;
}

void SingleNet::backward_window(int n, const std::vector<double>& dpred) {
  require((int)dpred.size() >= n, "SingleNet: dpred shorter than window");
  if (kind_ == ModelKind::single_lstm) {
    lstm_.zero_grads();
    readout_.zero_grads();
    for (int t = 0; t < n; ++t) {
      done_(0) = dpred[(size_t)t];
      readout_.backward_step(done_, t, &dh_extra_[(size_t)t]);
    }
    lstm_.backward_window(n, dh_extra_, nullptr);
  } else {
    mlp_.zero_grads();
    for (int t = 0; t < n; ++t) {
      done_(0) = dpred[(size_t)t];
      mlp_.backward_step(done_, t, nullptr);
    }
  }
}

void SingleNet::collect_params(ParamViews& out) {
  if (kind_ == ModelKind::single_lstm) {
    lstm_.collect_params("lstm", out);
    readout_.collect_params("readout", out);
  } else {
    mlp_.collect_params("mlp", out);
  }
}

void SingleNet::collect_grads(ParamViews& out) {
  if (kind_ == ModelKind::single_lstm) {
    lstm_.collect_grads("lstm", out);
    readout_.collect_grads("readout", out);
  } else {
    mlp_.collect_grads("mlp", out);
  }
}

// --------------------------------------------------------------- Hierarchy

Hierarchy::Hierarchy(const Config& cfg, Rng& rng) : cfg_(cfg) {
  require(cfg.ctx_weighted || !cfg.mlpf,
          "Hierarchy: fixed context weights only apply to the LSTM function "
          "layer");
  const int ci_dim = cfg.lstmc_input == LstmcInput::ci ? 4 : 1;
  const int gh = cfg.dims.lstmc_hidden;
  const int fin = cfg.dims.pre_out + gh;
  // Fixed construction order keeps weight draws reproducible across kinds.
  lstmc = Lstm(ci_dim, cfg.dims.lstmc_hidden, rng);
  gate = SwitchGru(cfg.dims.lstmc_hidden, gh, rng);
  pre = Mlp({2, cfg.dims.pre_hidden, cfg.dims.pre_out}, rng);
  if (cfg.mlpf) {
    mlpf = Mlp({fin, cfg.dims.mlp_hidden, cfg.dims.mlp_hidden, 1}, rng);
  } else {
    lstmf = Lstm(fin, cfg.dims.lstmf_hidden, rng);
    readout = Mlp({cfg.dims.lstmf_hidden, 1}, rng);
  }
  if (!cfg.ctx_weighted) freeze_ctx_block();
  ci_in_ = Vec::Zero(ci_dim);
  xy_ = Vec::Zero(2);
  fin_ = Vec::Zero(fin);
  done_ = Vec::Zero(1);
  dfeat_ = Vec::Zero(cfg.dims.pre_out);
}

// Fixed-context mode: the context slice of LSTMf's input weights is not
// trained. Candidate rows pass the context through one-to-one; the gate rows
// ignore it.
void Hierarchy::freeze_ctx_block() {
  const int H = cfg_.dims.lstmf_hidden;
  const int gh = gate.hidden();
  const int off = cfg_.dims.pre_out;
  lstmf.W.block(0, off, 4 * H, gh).setZero();
  const int diag = std::min(H, gh);
  for (int r = 0; r < diag; ++r) lstmf.W(2 * H + r, off + r) = 1.0;
}

void Hierarchy::zero_ctx_block_grads() {
  const int H = cfg_.dims.lstmf_hidden;
  lstmf.dW.block(0, cfg_.dims.pre_out, 4 * H, gate.hidden()).setZero();
}

void Hierarchy::reset_state() {
  lstmc.reset_state();
  gate.reset_state();
  if (!cfg_.mlpf) lstmf.reset_state();
}

void Hierarchy::ensure_capacity(int slots) {
  lstmc.ensure_capacity(slots);
  gate.ensure_capacity(slots);
  pre.ensure_capacity(slots);
  if (cfg_.mlpf)
    mlpf.ensure_capacity(slots);
  else {
    lstmf.ensure_capacity(slots);
    readout.ensure_capacity(slots);
  }
  const int fin = cfg_.dims.pre_out + gate.hidden();
  if ((int)dxf_.size() < slots) {
    dxf_.resize(slots, Vec::Zero(fin));
    dctx_.resize(slots, Vec::Zero(gate.hidden()));
    dcomp_.resize(slots, Vec::Zero(lstmc.hidden()));
    if (!cfg_.mlpf) dh_f_.resize(slots, Vec::Zero(lstmf.hidden()));
  }
}

double Hierarchy::forward(const StepInput& in, int slot, StepTrace* trace) {
  if (cfg_.lstmc_input == LstmcInput::ci)
    for (int k = 0; k < 4; ++k) ci_in_(k) = in.ci[(size_t)k];
  else
    ci_in_(0) = in.lstmc_drive;
  const Vec& comp = lstmc.step(ci_in_, slot);
  const Vec& ctx = gate.step(comp, in.surprise, slot);
  xy_(0) = in.x;
  xy_(1) = in.y;
  const Vec& feat = pre.step(xy_, slot);
  fin_.head(cfg_.dims.pre_out) = feat;
  fin_.tail(gate.hidden()) = ctx;
  const double pred = cfg_.mlpf
                          ? mlpf.step(fin_, slot)(0)
                          : readout.step(lstmf.step(fin_, slot), slot)(0);
  if (trace) {
    trace->prediction = pred;
    trace->surprise = in.surprise;
    trace->compression = comp;
    trace->gate_h = ctx;
  }
  return pred;
}

void Hierarchy::backward_window(int n, const std::vector<double>& dpred) {
  require((int)dpred.size() >= n, "Hierarchy: dpred shorter than window");
  lstmc.zero_grads();
  gate.zero_grads();
  pre.zero_grads();
  if (cfg_.mlpf) {
    mlpf.zero_grads();
    for (int t = 0; t < n; ++t) {
      done_(0) = dpred[(size_t)t];
      mlpf.backward_step(done_, t, &dxf_[(size_t)t]);
    }
  } else {
    lstmf.zero_grads();
    readout.zero_grads();
    for (int t = 0; t < n; ++t) {
      done_(0) = dpred[(size_t)t];
      readout.backward_step(done_, t, &dh_f_[(size_t)t]);
    }
    lstmf.backward_window(n, dh_f_, &dxf_);
    if (!cfg_.ctx_weighted) zero_ctx_block_grads();
  }
  for (int t = 0; t < n; ++t) {
    dfeat_ = dxf_[(size_t)t].head(cfg_.dims.pre_out);
    pre.backward_step(dfeat_, t, nullptr);
    dctx_[(size_t)t] = dxf_[(size_t)t].tail(gate.hidden());
  }
  gate.backward_window(n, dctx_, &dcomp_);
  lstmc.backward_window(n, dcomp_, nullptr);
}

void Hierarchy::collect_params(ParamViews& out) {
  lstmc.collect_params("lstmc", out);
  gate.collect_params("gate", out);
  pre.collect_params("pre", out);
  if (cfg_.mlpf)
    mlpf.collect_params("mlpf", out);
  else {
    lstmf.collect_params("lstmf", out);
    readout.collect_params("readout", out);
  }
}

void Hierarchy::collect_grads(ParamViews& out) {
  lstmc.collect_grads("lstmc", out);
  gate.collect_grads("gate", out);
  pre.collect_grads("pre", out);
  if (cfg_.mlpf)
    mlpf.collect_grads("mlpf", out);
  else {
    lstmf.collect_grads("lstmf", out);
    readout.collect_grads("readout", out);
  }
}

// ----------------------------------------------------------------- factory

std::unique_ptr<ModelBase> make_model(ModelKind kind, bool with_ci,
                                      const ModelDims& dims,
                                      LstmcInput lstmc_input, bool ctx_weighted,
                                      Rng& rng) {
  switch (kind) {
    case ModelKind::single_lstm:
    case ModelKind::single_mlp:
      return std::make_unique<SingleNet>(kind, with_ci, dims, rng);
    case ModelKind::hierarchy:
    case ModelKind::hierarchy_mlpf: {
      Hierarchy::Config cfg;
      cfg.dims = dims;
      cfg.lstmc_input = lstmc_input;
      cfg.ctx_weighted = ctx_weighted;
      cfg.mlpf = kind == ModelKind::hierarchy_mlpf;
      return std::make_unique<Hierarchy>(cfg, rng);
    }
  }
  require(false, "make_model: unknown kind");
  return nullptr;
}

}  // namespace evc
