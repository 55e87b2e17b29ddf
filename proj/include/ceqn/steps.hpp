#pragma once

#include <ceqn/core.hpp>
#include <ceqn/hessian_approx.hpp>
#include <ceqn/problem.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace ceqn {

/// Closed form of the cubically regularized step length.
///   Standard:      η = 2 / (θ + √(θ² + L·‖g‖*))
///   QuadraticRoot: η = 2 / (θ + √(θ² + 4L·‖g‖*)), the positive root of
///                  L‖g‖*·η² + θη − 1 = 0.
enum class StepsizeForm { Standard, QuadraticRoot };

struct CeqnParams {
  double theta = 1.0;
  double cubic = 0.0;  // L
  StepsizeForm form = StepsizeForm::Standard;

  void validate() const {
    if (!(theta > 0.0) || !std::isfinite(theta)) throw UsageError("CeqnParams: theta must be > 0");
    if (!(cubic >= 0.0) || !std::isfinite(cubic)) throw UsageError("CeqnParams: L must be >= 0");
  }
};

enum class AcceptMode { Dual, Reg };

struct AdaptiveParams {
  double cubic = 1.0;  // L
  double alpha0 = 1.0;
  double gamma_inc = 2.0;
  double gamma_dec = 0.5;  // 1 keeps α monotone
  AcceptMode mode = AcceptMode::Dual;
  int max_inner = 30;
  double grad_tol = 1e-12;  // ‖g₊‖² at or below this is accepted outright

  void validate() const {
    if (!(cubic > 0.0) || !std::isfinite(cubic)) throw UsageError("AdaptiveParams: L must be > 0");
    if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw UsageError("AdaptiveParams: alpha0 must be > 0");
    if (!(gamma_inc > 1.0)) throw UsageError("AdaptiveParams: gamma_inc must be > 1");
    if (!(gamma_dec > 0.0 && gamma_dec <= 1.0)) throw UsageError("AdaptiveParams: gamma_dec must be in (0, 1]");
    if (max_inner < 1) throw UsageError("AdaptiveParams: max_inner must be >= 1");
    if (!(grad_tol >= 0.0)) throw UsageError("AdaptiveParams: grad_tol must be >= 0");
  }
};

enum class AcceptedBy { Dual, Reg, Fixed, None };

struct StepResult {
  Vector x_next;
  double eta = 0.0;
  double alpha_used = 0.0;
  int inner_count = 0;
  double dual_norm_before = 0.0;  // ‖g_k‖* under H_k
  AcceptedBy accepted_by = AcceptedBy::None;
  bool cap_hit = false;
  bool accepted_at_stationarity = false;  // accepted by the ‖g₊‖² ≤ grad_tol guard
  // Evaluations made at x_next while testing acceptance, for reuse by the caller.
  std::optional<double> f_next;
  std::optional<Vector> g_next;
};

struct DualNorm {
  double value = 0.0;
  Vector hg;  // H g, reused as the step direction
};

/// ‖g‖* = √(gᵀHg) with one application of H. Throws IndefiniteOperator when
/// gᵀHg ≤ 1e-14·‖g‖² for g ≠ 0.
inline DualNorm dual_norm(const InverseHessianOperator& op, const Vector& g) {
  require_dim(g.size(), op.dimension(), "dual_norm");
  DualNorm out{0.0, op.apply(g)};
  const double gg = g.squaredNorm();
  if (gg == 0.0) return out;
  const double ghg = g.dot(out.hg);
  if (!(ghg > 1e-14 * gg)) {
    throw IndefiniteOperator("dual_norm: gᵀHg = " + std::to_string(ghg) + " is not positive");
  }
  out.value = std::sqrt(ghg);
  return out;
}

inline double ceqn_stepsize(const CeqnParams& params, double gdual) {
  params.validate();
  if (!(gdual >= 0.0)) throw UsageError("ceqn_stepsize: dual norm must be >= 0");
  const double scale = params.form == StepsizeForm::Standard ? 1.0 : 4.0;
  const double theta = params.theta;
  return 2.0 / (theta + std::sqrt(theta * theta + scale * params.cubic * gdual));
}

/// x₊ = x − η H g with η from ceqn_stepsize.
inline StepResult ceqn_step(const CeqnParams& params, const InverseHessianOperator& op, const Vector& x,
                            const Vector& g) {
  require_dim(x.size(), g.size(), "ceqn_step");
  auto dn = dual_norm(op, g);
  StepResult r;
  r.eta = ceqn_stepsize(params, dn.value);
  r.x_next = x - r.eta * dn.hg;
  r.alpha_used = params.theta - 1.0;
  r.dual_norm_before = dn.value;
  r.accepted_by = AcceptedBy::None;
  return r;
}

/// η = 2 / ((1+α) + √((1+α)² + (1+α)^{3/2}·L·‖g‖*))
inline double adaptive_stepsize(double cubic, double alpha, double gdual) {
  if (!(alpha > 0.0)) throw UsageError("adaptive_stepsize: alpha must be > 0");
  if (!(gdual >= 0.0)) throw UsageError("adaptive_stepsize: dual norm must be >= 0");
  const double t = 1.0 + alpha;
  return 2.0 / (t + std::sqrt(t * t + std::pow(t, 1.5) * cubic * gdual));
}

/// Right-hand side of the dual acceptance test:
///   min{ (‖g₊‖*)² / 4α,  (‖g₊‖*)^{3/2} / √(6(1+α)^{3/2}L) }.
inline double dual_test_bound(double gdual_next, double alpha, double cubic) {
  const double quad = gdual_next * gdual_next / (4.0 * alpha);
  if (cubic <= 0.0) return quad;
  const double cub = std::pow(gdual_next, 1.5) / std::sqrt(6.0 * std::pow(1.0 + alpha, 1.5) * cubic);
  return std::min(quad, cub);
}

/// True when the trial step is rejected: ⟨g₊, x − x₊⟩ ≤ dual_test_bound, with
/// ‖g₊‖* measured under the same H as the step. ‖g₊‖² ≤ grad_tol accepts.
inline bool check_dual(const Vector& g_next, const Vector& x, const Vector& x_next,
                       const InverseHessianOperator& op, double alpha, double cubic, double grad_tol) {
  require_dim(g_next.size(), x.size(), "check_dual (g_next)");
  require_dim(x_next.size(), x.size(), "check_dual (x_next)");
  if (g_next.squaredNorm() <= grad_tol) return false;
  const double gd = dual_norm(op, g_next).value;
  const double lhs = g_next.dot(x - x_next);
  return lhs <= dual_test_bound(gd, alpha, cubic);
}

/// True when the trial step is rejected:
///   f₊ > f − ½η(‖g‖*)² − (L(1+α)^{3/2}/6)·η³(‖g‖*)³.
inline bool check_reg(double f, double f_next, double eta, double gdual, double cubic, double alpha) {
  if (!(gdual >= 0.0)) throw UsageError("check_reg: dual norm must be >= 0");
  if (!(eta > 0.0)) throw UsageError("check_reg: eta must be > 0");
  const double l_eff = cubic * std::pow(1.0 + alpha, 1.5);
  const double bound = f - 0.5 * eta * gdual * gdual - l_eff / 6.0 * eta * eta * eta * gdual * gdual * gdual;
  return f_next > bound;
}

struct AdaptiveOutcome {
  StepResult step;
  double alpha_out = 0.0;
};

/// One outer iteration of the adaptive scheme: take the trial step for the
/// current α, and while the mode's test rejects it, multiply α by gamma_inc
/// and retry, up to max_inner times. α leaves multiplied by gamma_dec.
/// Non-finite trial evaluations count as rejections.
inline AdaptiveOutcome adaptive_iteration(const AdaptiveParams& params, Oracle& oracle,
                                          const InverseHessianOperator& op, const Vector& x,
                                          const Vector& g, double f, double alpha_in) {
  params.validate();
  if (!(alpha_in > 0.0)) throw UsageError("adaptive_iteration: alpha must be > 0");
  require_dim(x.size(), g.size(), "adaptive_iteration");

  const auto dn = dual_norm(op, g);
  double alpha = alpha_in;
  StepResult r;
  r.dual_norm_before = dn.value;

  auto trial_rejected = [&]() {
    r.eta = adaptive_stepsize(params.cubic, alpha, dn.value);
    r.x_next = x - r.eta * dn.hg;
    r.accepted_at_stationarity = false;
    if (params.mode == AcceptMode::Dual) {
      Vector gn = oracle.gradient(r.x_next);
      r.f_next.reset();
      const bool finite = all_finite(gn);
      const bool rejected =
          !finite || check_dual(gn, x, r.x_next, op, alpha, params.cubic, params.grad_tol);
      if (finite && gn.squaredNorm() <= params.grad_tol) r.accepted_at_stationarity = true;
      r.g_next = std::move(gn);
      return rejected;
    }
    const double fn = oracle.value(r.x_next);
    r.g_next.reset();
    r.f_next = fn;
    return !std::isfinite(fn) || check_reg(f, fn, r.eta, dn.value, params.cubic, alpha);
  };

  bool rejected = trial_rejected();
  while (rejected && r.inner_count < params.max_inner) {
    alpha *= params.gamma_inc;
    ++r.inner_count;
    rejected = trial_rejected();
  }

  r.alpha_used = alpha;
  r.cap_hit = rejected;
  if (rejected) {
    r.accepted_by = AcceptedBy::None;
  } else {
    r.accepted_by = params.mode == AcceptMode::Dual ? AcceptedBy::Dual : AcceptedBy::Reg;
  }
  const double alpha_out = params.gamma_dec < 1.0 ? alpha * params.gamma_dec : alpha;
  return {std::move(r), alpha_out};
}

/// x₊ = x − (1/L) H g.
inline StepResult fixed_step_iteration(double cubic, const InverseHessianOperator& op, const Vector& x,
                                       const Vector& g) {
  if (!(cubic > 0.0)) throw UsageError("fixed_step_iteration: L must be > 0");
  require_dim(x.size(), g.size(), "fixed_step_iteration");
  const Vector hg = op.apply(g);
  StepResult r;
  r.eta = 1.0 / cubic;
  r.x_next = x - r.eta * hg;
  r.dual_norm_before = std::sqrt(std::max(g.dot(hg), 0.0));
  r.alpha_used = 0.0;
  r.accepted_by = AcceptedBy::Fixed;
  return r;
}

}  // namespace ceqn
