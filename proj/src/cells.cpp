#include "evcomp/cells.hpp"

#include <cstring>
#include <fstream>

namespace evc {

Eigen::Index total_size(const ParamViews& views) {
  Eigen::Index n = 0;
  for (const auto& v : views) n += v.size();
  return n;
}

Vec flatten(const ParamViews& views) {
  Vec out(total_size(views));
  Eigen::Index at = 0;
  for (const auto& v : views) {
    std::memcpy(out.data() + at, v.data, sizeof(double) * v.size());
    at += v.size();
  }
  return out;
}

void unflatten(const ParamViews& views, const Vec& flat) {
  require(flat.size() == total_size(views), "unflatten: size mismatch");
  Eigen::Index at = 0;
  for (const auto& v : views) {
    std::memcpy(v.data, flat.data() + at, sizeof(double) * v.size());
    at += v.size();
  }
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(char((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& s;
  std::size_t at = 0;
  std::uint32_t u32() {
    if (at + 4 > s.size()) throw std::runtime_error("param container: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(s[at++])) << (8 * i);
    return v;
  }
  double f64() {
    if (at + 8 > s.size()) throw std::runtime_error("param container: truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(s[at++])) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string str(std::size_t n) {
    if (at + n > s.size()) throw std::runtime_error("param container: truncated");
    std::string r = s.substr(at, n);
    at += n;
    return r;
  }
};

}  // namespace

std::string serialize_params(const ParamViews& views) {
  std::string out;
  out += "EVCP";
  put_u32(out, 1);
  put_u32(out, std::uint32_t(views.size()));
  for (const auto& v : views) {
    put_u32(out, std::uint32_t(v.name.size()));
    out += v.name;
    put_u32(out, std::uint32_t(v.rows));
    put_u32(out, std::uint32_t(v.cols));
    for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v.data[i]);
  }
  return out;
}

void deserialize_params(const ParamViews& views, const std::string& bytes) {
  Reader r{bytes};
  if (r.str(4) != "EVCP") throw std::runtime_error("param container: bad magic");
  if (r.u32() != 1) throw std::runtime_error("param container: unknown version");
  const std::uint32_t count = r.u32();
  if (count != views.size())
    throw std::runtime_error("param container: entry count mismatch");
  for (const auto& v : views) {
    const std::string name = r.str(r.u32());
    if (name != v.name)
      throw std::runtime_error("param container: expected '" + v.name +
                               "', found '" + name + "'");
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows != std::uint32_t(v.rows) || cols != std::uint32_t(v.cols))
      throw std::runtime_error("param container: shape mismatch for " + v.name);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data[i] = r.f64();
  }
}

void save_params(const ParamViews& views, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + file.string());
  const std::string bytes = serialize_params(views);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

void load_params(const ParamViews& views, const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  deserialize_params(views, bytes);
}

void glorot_init(Mat& w, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<int> widths, Rng& rng) : widths_(std::move(widths)) {
  require(widths_.size() >= 2, "Mlp: need at least input and output widths");
  for (int w : widths_) require(w >= 1, "Mlp: widths must be >= 1");
  layers_.resize(widths_.size() - 1);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& L = layers_[l];
    L.W.resize(widths_[l + 1], widths_[l]);
    glorot_init(L.W, rng);
    L.b = Vec::Zero(widths_[l + 1]);
    L.dW = Mat::Zero(L.W.rows(), L.W.cols());
    L.db = Vec::Zero(L.b.size());
  }
}

void Mlp::ensure_capacity(int slots) {
  if (int(cache_.size()) >= slots) return;
  const std::size_t old = cache_.size();
  cache_.resize(slots);
  for (std::size_t s = old; s < cache_.size(); ++s) {
    cache_[s].act.resize(widths_.size());
    for (std::size_t l = 0; l < widths_.size(); ++l)
      cache_[s].act[l] = Vec::Zero(widths_[l]);
  }
}

const Vec& Mlp::step(const Vec& x, int slot) {
  require(x.size() == in_dim(), "Mlp::step: input size mismatch");
  ensure_capacity(slot + 1);
  auto& act = cache_[slot].act;
  act[0] = x;
  const std::size_t last = layers_.size() - 1;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    act[l + 1].noalias() = layers_[l].W * act[l];
    act[l + 1] += layers_[l].b;
    if (l != last) tanh_inplace(act[l + 1]);
  }
  return act.back();
}

void Mlp::backward_step(const Vec& dout, int slot, Vec* dx) {
  require(slot >= 0 && slot < int(cache_.size()), "Mlp::backward_step: no cache");
  require(dout.size() == out_dim(), "Mlp::backward_step: dout size mismatch");
  const auto& act = cache_[slot].act;
  const std::size_t last = layers_.size() - 1;
  if (dacts_.size() != widths_.size()) {
    dacts_.resize(widths_.size());
    for (std::size_t l = 0; l < widths_.size(); ++l) dacts_[l] = Vec::Zero(widths_[l]);
  }
  dacts_.back() = dout;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    auto& L = layers_[li];
    Vec& d = dacts_[li + 1];
    if (li != last)  // hidden layers are tanh; output layer is linear
      d.array() *= 1.0 - act[li + 1].array().square();
    L.dW.noalias() += d * act[li].transpose();
    L.db += d;
    if (li > 0 || dx != nullptr) dacts_[li].noalias() = L.W.transpose() * d;
  }
  if (dx != nullptr) *dx = dacts_[0];
}

void Mlp::zero_grads() {
  for (auto& L : layers_) {
    L.dW.setZero();
    L.db.setZero();
  }
}

void Mlp::collect_params(const std::string& prefix, ParamViews& out) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& L = layers_[l];
    const std::string tag = prefix + ".l" + std::to_string(l);
    out.push_back({tag + ".W", L.W.data(), L.W.rows(), L.W.cols()});
    out.push_back({tag + ".b", L.b.data(), L.b.size(), 1});
  }
}

void Mlp::collect_grads(const std::string& prefix, ParamViews& out) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& L = layers_[l];
    const std::string tag = prefix + ".l" + std::to_string(l);
    out.push_back({tag + ".W", L.dW.data(), L.dW.rows(), L.dW.cols()});
    out.push_back({tag + ".b", L.db.data(), L.db.size(), 1});
  }
}

// ---------------------------------------------------------------------------
// Lstm

Lstm::Lstm(int in_dim, int hidden, Rng& rng) : in_dim_(in_dim), hidden_(hidden) {
  require(in_dim >= 1 && hidden >= 1, "Lstm: dimensions must be >= 1");
  W.resize(4 * hidden, in_dim);
  U.resize(4 * hidden, hidden);
  glorot_init(W, rng);
  glorot_init(U, rng);
  b = Vec::Zero(4 * hidden);
  b.segment(hidden, hidden).setOnes();  // forget-gate bias +1
  dW = Mat::Zero(W.rows(), W.cols());
  dU = Mat::Zero(U.rows(), U.cols());
  db = Vec::Zero(b.size());
  h_ = Vec::Zero(hidden);
  c_ = Vec::Zero(hidden);
  pre_ = Vec::Zero(4 * hidden);
  da_ = Vec::Zero(4 * hidden);
  dh_ = Vec::Zero(hidden);
  dc_ = Vec::Zero(hidden);
  dgate_ = Vec::Zero(hidden);
  dx_ = Vec::Zero(in_dim);
}

void Lstm::reset_state() {
  h_.setZero();
  c_.setZero();
}

void Lstm::set_state(const Vec& h, const Vec& c) {
  require(h.size() == hidden_ && c.size() == hidden_, "Lstm::set_state: size");
  h_ = h;
  c_ = c;
}

void Lstm::ensure_capacity(int slots) {
  if (int(cache_.size()) >= slots) return;
  const std::size_t old = cache_.size();
  cache_.resize(slots);
  for (std::size_t s = old; s < cache_.size(); ++s) {
    auto& slot = cache_[s];
    slot.x = Vec::Zero(in_dim_);
    slot.h_prev = slot.c_prev = Vec::Zero(hidden_);
    slot.i = slot.f = slot.g = slot.o = Vec::Zero(hidden_);
    slot.c_new = slot.tanh_c = Vec::Zero(hidden_);
  }
}

const Vec& Lstm::step(const Vec& x, int slot) {
  require(x.size() == in_dim_, "Lstm::step: input size mismatch");
  ensure_capacity(slot + 1);
  auto& s = cache_[slot];
  s.x = x;
  s.h_prev = h_;
  s.c_prev = c_;

  pre_.noalias() = W * x;
  pre_.noalias() += U * h_;
  pre_ += b;

  const int H = hidden_;
  s.i = (1.0 / (1.0 + (-pre_.segment(0, H).array()).exp())).matrix();
  s.f = (1.0 / (1.0 + (-pre_.segment(H, H).array()).exp())).matrix();
  s.g = pre_.segment(2 * H, H).array().tanh().matrix();
  s.o = (1.0 / (1.0 + (-pre_.segment(3 * H, H).array()).exp())).matrix();

  s.c_new = s.f.cwiseProduct(s.c_prev) + s.i.cwiseProduct(s.g);
  s.tanh_c = s.c_new.array().tanh().matrix();
  c_ = s.c_new;
  h_ = s.o.cwiseProduct(s.tanh_c);
  return h_;
}

void Lstm::backward_window(int n, const std::vector<Vec>& dh_extra,
                           std::vector<Vec>* dx_out) {
  require(n >= 1 && n <= int(cache_.size()), "Lstm::backward_window: bad window");
  require(int(dh_extra.size()) >= n, "Lstm::backward_window: missing upstream grads");
  if (dx_out != nullptr) dx_out->resize(n);

  const int H = hidden_;
  dh_.setZero();
  dc_.setZero();
  for (int t = n - 1; t >= 0; --t) {
    const auto& s = cache_[t];
    dh_ += dh_extra[t];
    // h = o * tanh(c)
    da_.segment(3 * H, H) = (dh_.array() * s.tanh_c.array() * s.o.array() *
                             (1.0 - s.o.array()))
                                .matrix();
    dc_.array() += dh_.array() * s.o.array() * (1.0 - s.tanh_c.array().square());
    // c = f*c_prev + i*g
    da_.segment(0, H) =
        (dc_.array() * s.g.array() * s.i.array() * (1.0 - s.i.array())).matrix();
    da_.segment(H, H) = (dc_.array() * s.c_prev.array() * s.f.array() *
                         (1.0 - s.f.array()))
                            .matrix();
    da_.segment(2 * H, H) =
        (dc_.array() * s.i.array() * (1.0 - s.g.array().square())).matrix();

    dW.noalias() += da_ * s.x.transpose();
    dU.noalias() += da_ * s.h_prev.transpose();
    db += da_;
    if (dx_out != nullptr) {
      dx_.noalias() = W.transpose() * da_;
      (*dx_out)[t] = dx_;
    }
    dh_.noalias() = U.transpose() * da_;
    dc_ = dc_.cwiseProduct(s.f);
  }
}

void Lstm::zero_grads() {
  dW.setZero();
  dU.setZero();
  db.setZero();
}

void Lstm::collect_params(const std::string& prefix, ParamViews& out) {
  out.push_back({prefix + ".W", W.data(), W.rows(), W.cols()});
  out.push_back({prefix + ".U", U.data(), U.rows(), U.cols()});
  out.push_back({prefix + ".b", b.data(), b.size(), 1});
}

void Lstm::collect_grads(const std::string& prefix, ParamViews& out) {
  out.push_back({prefix + ".W", dW.data(), dW.rows(), dW.cols()});
  out.push_back({prefix + ".U", dU.data(), dU.rows(), dU.cols()});
  out.push_back({prefix + ".b", db.data(), db.size(), 1});
}

// ---------------------------------------------------------------------------
// SwitchGru

SwitchGru::SwitchGru(int ctx_dim, int hidden, Rng& rng)
    : ctx_dim_(ctx_dim), hidden_(hidden) {
  require(ctx_dim >= 1 && hidden >= 1, "SwitchGru: dimensions must be >= 1");
  Wc.resize(hidden, ctx_dim);
  Uh.resize(hidden, hidden);
  glorot_init(Wc, rng);
  glorot_init(Uh, rng);
  b = Vec::Zero(hidden);
  dWc = Mat::Zero(hidden, ctx_dim);
  dUh = Mat::Zero(hidden, hidden);
  db = Vec::Zero(hidden);
  h_ = Vec::Zero(hidden);
  pre_ = Vec::Zero(hidden);
  dh_ = Vec::Zero(hidden);
  da_ = Vec::Zero(hidden);
  dctx_tmp_ = Vec::Zero(ctx_dim);
}

void SwitchGru::reset_state() { h_.setZero(); }

void SwitchGru::set_state(const Vec& h) {
  require(h.size() == hidden_, "SwitchGru::set_state: size");
  h_ = h;
}

void SwitchGru::ensure_capacity(int slots) {
  if (int(cache_.size()) >= slots) return;
  const std::size_t old = cache_.size();
  cache_.resize(slots);
  for (std::size_t s = old; s < cache_.size(); ++s) {
    cache_[s].ctx = Vec::Zero(ctx_dim_);
    cache_[s].h_prev = Vec::Zero(hidden_);
    cache_[s].cand = Vec::Zero(hidden_);
  }
}

const Vec& SwitchGru::step(const Vec& context, double surprise, int slot) {
  require(context.size() == ctx_dim_, "SwitchGru::step: context size mismatch");
  require(surprise >= 0.0 && surprise <= 1.0,
          "SwitchGru::step: surprise must be in [0,1]");
  ensure_capacity(slot + 1);
  auto& s = cache_[slot];
  s.ctx = context;
  s.h_prev = h_;
  s.s = surprise;

  pre_.noalias() = Wc * context;
  pre_.noalias() += Uh * h_;
  pre_ += b;
  s.cand = pre_.array().tanh().matrix();

  h_ = (1.0 - surprise) * s.h_prev + surprise * s.cand;
  return h_;
}

void SwitchGru::backward_window(int n, const std::vector<Vec>& dh_extra,
                                std::vector<Vec>* dctx_out) {
  require(n >= 1 && n <= int(cache_.size()),
          "SwitchGru::backward_window: bad window");
  require(int(dh_extra.size()) >= n,
          "SwitchGru::backward_window: missing upstream grads");
  if (dctx_out != nullptr) dctx_out->resize(n);

  dh_.setZero();
  for (int t = n - 1; t >= 0; --t) {
    const auto& s = cache_[t];
    dh_ += dh_extra[t];
    // h = (1-s)*h_prev + s*cand; no gradient into s
    da_ = (s.s * dh_.array() * (1.0 - s.cand.array().square())).matrix();
    dWc.noalias() += da_ * s.ctx.transpose();
    dUh.noalias() += da_ * s.h_prev.transpose();
    db += da_;
    if (dctx_out != nullptr) {
      dctx_tmp_.noalias() = Wc.transpose() * da_;
      (*dctx_out)[t] = dctx_tmp_;
    }
    dh_ = (1.0 - s.s) * dh_;
    dh_.noalias() += Uh.transpose() * da_;
  }
}

void SwitchGru::zero_grads() {
  dWc.setZero();
  dUh.setZero();
  db.setZero();
}

void SwitchGru::collect_params(const std::string& prefix, ParamViews& out) {
  out.push_back({prefix + ".Wc", Wc.data(), Wc.rows(), Wc.cols()});
  out.push_back({prefix + ".Uh", Uh.data(), Uh.rows(), Uh.cols()});
  out.push_back({prefix + ".b", b.data(), b.size(), 1});
}

void SwitchGru::collect_grads(const std::string& prefix, ParamViews& out) {
  out.push_back({prefix + ".Wc", dWc.data(), dWc.rows(), dWc.cols()});
  out.push_back({prefix + ".Uh", dUh.data(), dUh.rows(), dUh.cols()});
  out.push_back({prefix + ".b", db.data(), db.size(), 1});
}

// ---------------------------------------------------------------------------
// Optimizer

void Optimizer::init(const ParamViews& params) {
  m_.clear();
  v_.clear();
  t_ = 0;
  for (const auto& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Optimizer::update(const ParamViews& params, const ParamViews& grads) {
  require(params.size() == grads.size() && params.size() == m_.size(),
          "Optimizer::update: view count mismatch");
  ++t_;
  if (cfg_.kind == OptimizerConfig::Kind::sgd) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      require(params[k].size() == grads[k].size(), "Optimizer::update: shape");
      for (Eigen::Index i = 0; i < params[k].size(); ++i)
        params[k].data[i] -= cfg_.lr * grads[k].data[i];
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    require(params[k].size() == grads[k].size() &&
                params[k].size() == Eigen::Index(m_[k].size()),
            "Optimizer::update: shape mismatch");
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (Eigen::Index i = 0; i < params[k].size(); ++i) {
      const double g = grads[k].data[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      params[k].data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace evc
