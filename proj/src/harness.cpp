#include "evcomp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace evc {

int UpdatePolicy::draw(Rng& rng) const {
  if (kind == Kind::fixed) return n;
  return rng.uniform_int(lo, hi);
}

int UpdatePolicy::max_len() const { return kind == Kind::fixed ? n : hi; }

std::string UpdatePolicy::name() const {
  std::ostringstream s;
  if (kind == Kind::fixed)
    s << "fixed(" << n << ")";
  else
    s << "random(" << lo << "," << hi << ")";
  return s.str();
}

UpdatePolicy parse_update_policy(const std::string& text) {
  const auto open = text.find('(');
  const auto close = text.rfind(')');
  require(open != std::string::npos && close == text.size() - 1 && close > open,
          "update policy: expected fixed(N) or random(LO,HI), got '" + text +
              "'");
  const std::string head = text.substr(0, open);
  const std::string args = text.substr(open + 1, close - open - 1);
  UpdatePolicy p;
  try {
    if (head == "fixed") {
      p.kind = UpdatePolicy::Kind::fixed;
      p.n = std::stoi(args);
      require(p.n >= 1, "update policy: fixed length must be >= 1");
    } else if (head == "random") {
      const auto comma = args.find(',');
      require(comma != std::string::npos,
              "update policy: random needs two bounds");
      p.kind = UpdatePolicy::Kind::random;
      p.lo = std::stoi(args.substr(0, comma));
      p.hi = std::stoi(args.substr(comma + 1));
      require(p.lo >= 1 && p.hi >= p.lo,
              "update policy: need 1 <= lo <= hi");
    } else {
      require(false, "update policy: unknown kind '" + head + "'");
    }
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    require(false, "update policy: bad number in '" + text + "'");
  }
  return p;
}

TrainResult train_one(ModelBase& model, Optimizer& opt, const Condition& cond,
                      const TrainConfig& cfg, Rng& master) {
  require(cfg.epochs >= 1 && cfg.steps_per_epoch >= 1,
          "train: epochs and steps_per_epoch must be >= 1");
  TrainResult res;
  res.curve.reserve((size_t)cfg.epochs);

  const int cap = cond.update.max_len();
  model.ensure_capacity(cap);
  ParamViews params, grads;
  model.collect_params(params);
  model.collect_grads(grads);
  opt.init(params);

  Rng policy_rng = master.stream(kStreamPolicy);
  std::vector<double> resid((size_t)cap, 0.0), dpred((size_t)cap, 0.0);

  for (int epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
    Rng erng = master.stream(kStreamTrainBase + (unsigned long long)epoch);
    EventSchedule sched =
        make_schedule(erng, cfg.steps_per_epoch, cond.order);
    EventStream stream =
        make_stream(erng, sched, cond.ci_mode, cond.gate_mode);
    model.reset_state();
    int slot = 0;
    int win = 0;
    double abs_sum = 0.0;
    for (int t = 0; t < cfg.steps_per_epoch; ++t) {
      if (slot == 0) win = cond.update.draw(policy_rng);
      const StreamSample& s = stream.samples[(size_t)t];
      StepInput in;
      in.x = s.x;
      in.y = s.y;
      in.ci = s.ci;
      in.surprise = s.surprise;
      in.lstmc_drive = s.surprise;
      const double pred = model.forward(in, slot);
      resid[(size_t)slot] = pred - s.target;
      abs_sum += std::abs(resid[(size_t)slot]);
      ++slot;
      // Updates fire on full windows only; a window left partial at the
      // epoch end never produces an update.
      if (slot == win) {
        const double scale = 2.0 / slot;  // window-mean squared error
        for (int k = 0; k < slot; ++k) dpred[(size_t)k] = scale * resid[(size_t)k];
        model.backward_window(slot, dpred);
        opt.update(params, grads);
        if (epoch == 0) res.update_steps_first_epoch.push_back(t + 1);
        slot = 0;
      }
    }
    const double mae = abs_sum / cfg.steps_per_epoch;
    res.curve.push_back(mae);
    if (!std::isfinite(mae) || mae > cfg.divergence_threshold)
      res.diverged = true;
  }

  if (res.diverged) {
    res.final_train_error = std::numeric_limits<double>::quiet_NaN();
  } else {
    const int w = std::min<int>(cfg.final_error_window, (int)res.curve.size());
    double sum = 0.0;
    for (int i = (int)res.curve.size() - w; i < (int)res.curve.size(); ++i)
      sum += res.curve[(size_t)i];
    res.final_train_error = sum / w;
  }
  return res;
}

EvalResult evaluate(ModelBase& model, const Condition& cond,
                    const TrainConfig& cfg, Rng& master) {
  EvalResult res;
  model.ensure_capacity(cfg.test_seq_len);
  res.per_sequence.reserve((size_t)cfg.test_iterations);
  StepTrace trace;
  const unsigned long long base =
      kStreamTrainBase + (unsigned long long)cfg.epochs;
  for (int it = 0; it < cfg.test_iterations; ++it) {
    Rng trng = master.stream(base + (unsigned long long)it);
    EventSchedule sched = make_schedule(trng, cfg.test_seq_len, cond.order);
    EventStream stream = make_stream(trng, sched, cond.ci_mode, cond.gate_mode);
    model.reset_state();
    double abs_sum = 0.0;
    for (int t = 0; t < cfg.test_seq_len; ++t) {
      const StreamSample& s = stream.samples[(size_t)t];
      StepInput in;
      in.x = s.x;
      in.y = s.y;
      in.ci = s.ci;
      in.surprise = s.surprise;
      in.lstmc_drive = s.surprise;
      const double pred = model.forward(in, t, &trace);
      abs_sum += std::abs(pred - s.target);
      if (trace.gate_h.size() > 0) {
        const int e = (int)s.event;
        auto& sum = res.gate_sum[(size_t)e];
        if (sum.size() == 0) sum = Vec::Zero(trace.gate_h.size());
        sum += trace.gate_h;
        ++res.gate_count[(size_t)e];
      }
      if (it == 0 && t < cfg.trace_export_steps) {
        TraceRow row;
        row.t = t;
        row.event = s.event;
        row.x = s.x;
        row.y = s.y;
        row.target = s.target;
        row.prediction = pred;
        row.surprise = trace.surprise;
        row.gate_h = trace.gate_h;
        row.compression = trace.compression;
        res.trace.push_back(std::move(row));
      }
    }
    res.per_sequence.push_back(abs_sum / cfg.test_seq_len);
  }
  res.test_error = mean_of(res.per_sequence);
  return res;
}

ClusterResult cluster_analysis(const std::array<Vec, kNumEvents>& sums,
                               const std::array<long, kNumEvents>& counts) {
  ClusterResult res;
  for (int e = 0; e < kNumEvents; ++e) {
    require(counts[(size_t)e] > 0,
            std::string("cluster analysis: event '") +
                event_name((EventType)e) + "' never occurred");
    res.centers[(size_t)e] = sums[(size_t)e] / (double)counts[(size_t)e];
  }
  for (size_t p = 0; p < kPairs.size(); ++p) {
    const auto& a = res.centers[(size_t)kPairs[p][0]];
    const auto& b = res.centers[(size_t)kPairs[p][1]];
    res.distances[p] = (a - b).norm();
  }
  return res;
}

RunResult run_single(const Condition& cond, unsigned long long seed,
                     const TrainConfig& cfg) {
  RunResult out;
  out.cond = cond;
  out.seed = seed;
  Rng master(seed);
  Rng wrng = master.stream(kStreamWeights);
  auto model = make_model(cond.model, cond.with_ci, cfg.dims, cond.lstmc_input,
                          cond.ctx_weighted, wrng);
  Optimizer opt(cfg.opt);
  TrainResult tr = train_one(*model, opt, cond, cfg, master);
  out.curve = std::move(tr.curve);
  out.final_train_error = tr.final_train_error;
  out.diverged = tr.diverged;
  out.update_steps_first_epoch = std::move(tr.update_steps_first_epoch);

  EvalResult ev = evaluate(*model, cond, cfg, master);
  out.test_error = ev.test_error;
  out.trace = std::move(ev.trace);
  out.has_clusters = ev.gate_count[0] + ev.gate_count[1] + ev.gate_count[2] +
                         ev.gate_count[3] >
                     0;
  if (out.has_clusters)
    out.clusters = cluster_analysis(ev.gate_sum, ev.gate_count);

  ParamViews params;
  model->collect_params(params);
  out.checkpoint = serialize_params(params);
  return out;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / (double)v.size();
}

double stdev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (double)(v.size() - 1));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace evc
