#pragma once

#include <functional>
#include <string>
#include <vector>

#include "evcomp/numerics.hpp"

namespace evc {

// Central-difference gradient oracle: (f(p+eps*e_i) - f(p-eps*e_i)) / (2*eps).
// Independent of the hand-derived BPTT path it is used to verify.
// Throws std::runtime_error if f evaluates to a non-finite value.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& p,
                     double eps = 1e-5);

// Max relative error between analytic and numeric gradients.
// Entries whose absolute difference is below atol count as zero error
// (handles near-zero gradients where relative error is meaningless).
double grad_rel_error(const Vec& analytic, const Vec& numeric,
                      double atol = 1e-7);

struct GradCheckReport {
  std::string component;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Finite-difference checks of the hand-derived backward passes over random
// 5-step windows. rtol is the pass threshold on grad_rel_error.
GradCheckReport gradcheck_mlp(std::uint64_t seed, double rtol = 1e-5);
GradCheckReport gradcheck_lstm(std::uint64_t seed, double rtol = 1e-5);
GradCheckReport gradcheck_switch_gru(std::uint64_t seed, double rtol = 1e-5);
GradCheckReport gradcheck_hierarchy(std::uint64_t seed, double rtol = 1e-5,
                                    bool mlpf = false, bool ctx_weighted = true);

// All components, worst case over `seeds` random seeds per component.
std::vector<GradCheckReport> gradcheck_all(int seeds, double rtol = 1e-5);

}  // namespace evc
