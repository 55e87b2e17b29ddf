#pragma once

#include <ceqn/core.hpp>
#include <ceqn/hessian_approx.hpp>
#include <ceqn/problem.hpp>
#include <ceqn/steps.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ceqn {

enum class Method { Ceqn, AdaptiveDual, AdaptiveReg, Fixed };

struct FixedParams {
  double cubic = 1.0;  // η = 1/L
};

using EngineParams = std::variant<CeqnParams, AdaptiveParams, FixedParams>;

enum class StartKind { AllOnes, Zero, Explicit };

struct StartPoint {
  StartKind kind = StartKind::AllOnes;
  Vector point;  // used when kind == Explicit

  Vector resolve(Index dim) const {
    switch (kind) {
      case StartKind::AllOnes:
        return Vector::Ones(dim);
      case StartKind::Zero:
        return Vector::Zero(dim);
      case StartKind::Explicit:
        require_dim(point.size(), dim, "StartPoint");
        return point;
    }
    return Vector::Ones(dim);
  }
};

struct SolverConfig {
  Method method = Method::Fixed;
  ApproxConfig approx;
  EngineParams engine = FixedParams{};
  int max_iters = 1000;
  double grad_tol = 1e-12;  // on ‖∇f‖²
  double max_seconds = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  StartPoint x0;

  void validate() const {
    approx.validate();
    if (max_iters < 1) throw UsageError("SolverConfig: max_iters must be >= 1");
    if (!(grad_tol >= 0.0)) throw UsageError("SolverConfig: grad_tol must be >= 0");
    if (!(max_seconds > 0.0)) throw UsageError("SolverConfig: max_seconds must be > 0");
    switch (method) {
      case Method::Ceqn:
        if (!std::holds_alternative<CeqnParams>(engine)) throw UsageError("SolverConfig: CEQN needs CeqnParams");
        std::get<CeqnParams>(engine).validate();
        break;
      case Method::AdaptiveDual:
      case Method::AdaptiveReg: {
        if (!std::holds_alternative<AdaptiveParams>(engine)) {
          throw UsageError("SolverConfig: adaptive methods need AdaptiveParams");
        }
        const auto& p = std::get<AdaptiveParams>(engine);
        p.validate();
        const auto want = method == Method::AdaptiveDual ? AcceptMode::Dual : AcceptMode::Reg;
        if (p.mode != want) throw UsageError("SolverConfig: AdaptiveParams mode does not match method");
        break;
      }
      case Method::Fixed:
        if (!std::holds_alternative<FixedParams>(engine)) throw UsageError("SolverConfig: FIXED needs FixedParams");
        if (!(std::get<FixedParams>(engine).cubic > 0.0)) throw UsageError("SolverConfig: FIXED needs L > 0");
        break;
    }
  }
};

/// State after one outer iteration (`iter` counts completed iterations, from 1).
struct TraceRecord {
  int iter = 0;
  double wall_seconds = 0.0;
  double f_value = 0.0;
  double grad_norm_sq = 0.0;
  double grad_dual_norm = 0.0;  // ‖∇f(x_k)‖* under the H_k used for this step
  double eta = 0.0;
  double alpha = 0.0;
  int inner_count = 0;
  int skipped_pairs = 0;
  bool operator_fallback = false;    // pairs supplied but all skipped
  bool indefinite_fallback = false;  // H_k swapped for cI
  bool cap_hit = false;
  EvalCounters counters;  // cumulative

  /// Bit set written to the trace `fallback` column: 1 operator, 2 indefinite, 4 cap hit.
  int fallback_flags() const {
    return (operator_fallback ? 1 : 0) | (indefinite_fallback ? 2 : 0) | (cap_hit ? 4 : 0);
  }
  void set_fallback_flags(int flags) {
    operator_fallback = (flags & 1) != 0;
    indefinite_fallback = (flags & 2) != 0;
    cap_hit = (flags & 4) != 0;
  }
};

enum class Termination { GradTol, MaxIters, Timeout, Stationary };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::GradTol:
      return "GRAD_TOL";
    case Termination::MaxIters:
      return "MAX_ITERS";
    case Termination::Timeout:
      return "TIMEOUT";
    case Termination::Stationary:
      return "STATIONARY";
  }
  return "?";
}

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Ceqn:
      return "CEQN";
    case Method::AdaptiveDual:
      return "ADAPTIVE_DUAL";
    case Method::AdaptiveReg:
      return "ADAPTIVE_REG";
    case Method::Fixed:
      return "FIXED";
  }
  return "?";
}

struct RunResult {
  std::vector<TraceRecord> trace;
  Termination termination = Termination::MaxIters;
  Vector x_final;
  double f_initial = 0.0;
  double grad_norm_sq_initial = 0.0;
  double f_final = 0.0;
  double grad_norm_sq_final = 0.0;
  double alpha_initial = 0.0;
  double alpha_final = 0.0;  // α carried out of the last iteration
  SolverConfig config;
  std::uint64_t seed = 0;
  EvalCounters counters;
  double wall_seconds = 0.0;

  int iterations() const { return static_cast<int>(trace.size()); }
};

/// Non-finite objective or gradient at an accepted iterate. Carries the trace
/// up to the failure.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, RunResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const RunResult& partial() const noexcept { return partial_; }

 private:
  RunResult partial_;
};

/// Everything the driver knows about one completed outer iteration.
struct IterationEvent {
  int k = 0;  // 0-based index of the iteration just taken
  const Vector& x;
  const Vector& x_next;
  const Vector& g;
  const Vector& g_next;
  double f;
  double f_next;
  const InverseHessianOperator& op;
  const StepResult& step;
  const TraceRecord& record;
};

using IterationObserver = std::function<void(const IterationEvent&)>;

/// GRAD_TOL takes precedence over MAX_ITERS, which takes precedence over TIMEOUT.
inline std::optional<Termination> check_termination(int k, double grad_norm_sq, double elapsed_seconds,
                                                    const SolverConfig& config) {
  if (grad_norm_sq <= config.grad_tol) return Termination::GradTol;
  if (k >= config.max_iters) return Termination::MaxIters;
  if (elapsed_seconds >= config.max_seconds) return Termination::Timeout;
  return std::nullopt;
}

namespace detail {

inline std::unique_ptr<InverseHessianOperator> build_operator(const SolverConfig& config, Oracle& oracle,
                                                              const Vector& x, PairBuffer& buffer,
                                                              std::mt19937_64& rng, bool& indefinite) {
  const Index d = oracle.dimension();
  if (config.approx.kind == ApproxKind::EXACT) {
    try {
      return std::make_unique<DenseInverseOperator>(dense_hessian(oracle, x));
    } catch (const IndefiniteOperator&) {
      indefinite = true;
      return std::make_unique<ScaledIdentityOperator>(d, config.approx.h0_scale);
    }
  }
  if (config.approx.pair_strategy == PairStrategy::SAMPLED) {
    buffer.assign(sample_pairs(oracle, x, config.approx.memory, rng));
  }
  return rebuild_operator(config.approx, buffer, d);
}

}  // namespace detail

/// Runs the configured method from config.x0 until a termination rule fires.
/// Deterministic in (problem, config) apart from wall-clock fields.
inline RunResult run_solver(Oracle& oracle, const SolverConfig& config, const IterationObserver& observer = {}) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  const Index d = oracle.dimension();
  RunResult result;
  result.config = config;
  result.seed = config.seed;

  Vector x = config.x0.resolve(d);
  double f = oracle.value(x);
  Vector g = oracle.gradient(x);
  result.f_initial = f;
  result.grad_norm_sq_initial = g.squaredNorm();

  double alpha = 0.0;
  if (const auto* p = std::get_if<AdaptiveParams>(&config.engine)) alpha = p->alpha0;
  result.alpha_initial = alpha;

  auto finish = [&](Termination t) {
    result.termination = t;
    result.alpha_final = alpha;
    result.x_final = x;
    result.f_final = f;
    result.grad_norm_sq_final = g.squaredNorm();
    result.counters = oracle.counters();
    result.wall_seconds = elapsed();
  };

  if (!std::isfinite(f) || !all_finite(g)) {
    finish(Termination::MaxIters);
    throw NumericalFailure("non-finite objective or gradient at the starting point", std::move(result));
  }

  std::mt19937_64 rng(config.seed);
  PairBuffer buffer(static_cast<std::size_t>(config.approx.memory), config.approx.pair_strategy);
  for (int k = 0;; ++k) {
    if (auto t = check_termination(k, g.squaredNorm(), elapsed(), config)) {
      finish(*t);
      return result;
    }

    bool indefinite = false;
    auto op = detail::build_operator(config, oracle, x, buffer, rng, indefinite);

    StepResult step;
    double alpha_next = alpha;
    auto take_step = [&](const InverseHessianOperator& h) {
      switch (config.method) {
        case Method::Ceqn:
          step = ceqn_step(std::get<CeqnParams>(config.engine), h, x, g);
          break;
        case Method::AdaptiveDual:
        case Method::AdaptiveReg: {
          auto out = adaptive_iteration(std::get<AdaptiveParams>(config.engine), oracle, h, x, g, f, alpha);
          step = std::move(out.step);
          alpha_next = out.alpha_out;
          break;
        }
        case Method::Fixed:
          step = fixed_step_iteration(std::get<FixedParams>(config.engine).cubic, h, x, g);
          break;
      }
    };
    try {
      take_step(*op);
    } catch (const IndefiniteOperator&) {
      indefinite = true;
      op = std::make_unique<ScaledIdentityOperator>(d, config.approx.h0_scale);
      take_step(*op);
    }

    Vector x_next = std::move(step.x_next);
    const double f_next = step.f_next ? *step.f_next : oracle.value(x_next);
    Vector g_next = step.g_next ? std::move(*step.g_next) : oracle.gradient(x_next);
    step.f_next.reset();
    step.g_next.reset();

    TraceRecord rec;
    rec.iter = k + 1;
    rec.wall_seconds = elapsed();
    rec.f_value = f_next;
    rec.grad_norm_sq = g_next.squaredNorm();
    rec.grad_dual_norm = step.dual_norm_before;
    rec.eta = step.eta;
    rec.alpha = step.alpha_used;
    rec.inner_count = step.inner_count;
    rec.skipped_pairs = op->skipped_pairs();
    rec.operator_fallback = op->fallback();
    rec.indefinite_fallback = indefinite;
    rec.cap_hit = step.cap_hit;
    rec.counters = oracle.counters();

    if (!std::isfinite(f_next) || !all_finite(g_next)) {
      result.trace.push_back(rec);
      finish(Termination::MaxIters);
      throw NumericalFailure("non-finite objective or gradient at iteration " + std::to_string(k + 1),
                             std::move(result));
    }
    result.trace.push_back(rec);

    if (observer) {
      step.x_next = x_next;
      observer(IterationEvent{k, x, x_next, g, g_next, f, f_next, *op, step, result.trace.back()});
    }

    if (config.approx.kind != ApproxKind::EXACT && config.approx.pair_strategy == PairStrategy::HISTORY) {
      collect_history_pair(buffer, x, x_next, g, g_next);
    }

    const bool null_step = x_next == x;
    x = std::move(x_next);
    f = f_next;
    g = std::move(g_next);
    alpha = alpha_next;

    if (null_step && g.squaredNorm() > config.grad_tol) {
      finish(Termination::Stationary);
      return result;
    }
  }
}

inline RunResult run_solver(const Problem& problem, const SolverConfig& config,
                            const IterationObserver& observer = {}) {
  Oracle oracle(problem);
  return run_solver(oracle, config, observer);
}

}  // namespace ceqn
