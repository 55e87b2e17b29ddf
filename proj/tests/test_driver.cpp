#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace ceqn;
using ceqn::testing::random_logistic;
using ceqn::testing::random_quadratic;

namespace {

SolverConfig adaptive_config(Method m, double L, std::uint64_t seed) {
  SolverConfig c;
  c.method = m;
  c.approx.kind = ApproxKind::LSR1;
  c.approx.pair_strategy = PairStrategy::SAMPLED;
  c.approx.memory = 10;
  c.approx.h0_scale = 1e-4;
  AdaptiveParams p;
  p.cubic = L;
  p.mode = m == Method::AdaptiveDual ? AcceptMode::Dual : AcceptMode::Reg;
  c.engine = p;
  c.max_iters = 200;
  c.seed = seed;
  return c;
}

// ½xᵀAx that turns NaN outside a box.
class Fragile : public Problem {
 public:
  Index dimension() const override { return 2; }
  double value(const Vector& x) const override {
    return x.cwiseAbs().maxCoeff() > 10.0 ? std::numeric_limits<double>::quiet_NaN() : 0.5 * x.squaredNorm();
  }
  Vector gradient(const Vector& x) const override { return x; }
  Vector hvp(const Vector&, const Vector& v) const override { return v; }
};

class Saddle : public Problem {
 public:
  Index dimension() const override { return 2; }
  double value(const Vector& x) const override { return 0.5 * (x[0] * x[0] - x[1] * x[1]); }
  Vector gradient(const Vector& x) const override { return Vector{{x[0], -x[1]}}; }
  Vector hvp(const Vector&, const Vector& v) const override { return Vector{{v[0], -v[1]}}; }
};

}  // namespace

TEST(RunSolver, NewtonOnQuadraticStopsAtIterationOne) {
  std::mt19937_64 rng(1);
  for (Index d = 2; d <= 6; ++d) {
    auto q = random_quadratic(d, rng);
    SolverConfig c;
    c.method = Method::Ceqn;
    c.approx.kind = ApproxKind::EXACT;
    c.engine = CeqnParams{};
    const auto r = run_solver(*q, c);
    EXPECT_EQ(r.termination, Termination::GradTol);
    ASSERT_EQ(r.iterations(), 1);
    EXPECT_LE(r.trace[0].grad_norm_sq, 1e-20);
    EXPECT_DOUBLE_EQ(r.trace[0].eta, 1.0);
  }
}

TEST(RunSolver, StartAtMinimizerStopsAtIterationZero) {
  std::mt19937_64 rng(2);
  auto q = random_quadratic(4, rng);
  SolverConfig c;
  c.x0 = {StartKind::Explicit, q->minimizer()};
  const auto r = run_solver(*q, c);
  EXPECT_EQ(r.termination, Termination::GradTol);
  EXPECT_EQ(r.iterations(), 0);
  EXPECT_EQ(r.x_final, q->minimizer());
}

TEST(RunSolver, MaxItersAndTimeout) {
  std::mt19937_64 rng(3);
  auto p = random_logistic(50, 5, 1e-4, rng);
  SolverConfig c;
  c.engine = FixedParams{100.0};
  c.max_iters = 7;
  const auto r = run_solver(*p, c);
  EXPECT_EQ(r.termination, Termination::MaxIters);
  EXPECT_EQ(r.iterations(), 7);

  c.max_seconds = 1e-12;
  EXPECT_EQ(run_solver(*p, c).termination, Termination::Timeout);
}

TEST(RunSolver, TerminationPrecedence) {
  SolverConfig c;
  c.max_iters = 5;
  c.max_seconds = 1.0;
  c.grad_tol = 1e-6;
  EXPECT_EQ(check_termination(5, 1e-7, 2.0, c), Termination::GradTol);
  EXPECT_EQ(check_termination(5, 1.0, 2.0, c), Termination::MaxIters);
  EXPECT_EQ(check_termination(4, 1.0, 2.0, c), Termination::Timeout);
  EXPECT_FALSE(check_termination(4, 1.0, 0.5, c).has_value());
}

TEST(RunSolver, DeterministicForEqualSeeds) {
  std::mt19937_64 rng(4);
  auto p = random_logistic(100, 10, 1e-4, rng);
  for (auto m : {Method::AdaptiveDual, Method::AdaptiveReg}) {
    const auto c = adaptive_config(m, 10.0, 7);
    const auto a = run_solver(*p, c), b = run_solver(*p, c);
    ASSERT_EQ(a.iterations(), b.iterations());
    EXPECT_EQ(a.x_final, b.x_final);
    for (int k = 0; k < a.iterations(); ++k) {
      EXPECT_EQ(a.trace[k].f_value, b.trace[k].f_value);
      EXPECT_EQ(a.trace[k].eta, b.trace[k].eta);
      EXPECT_EQ(a.trace[k].alpha, b.trace[k].alpha);
      EXPECT_EQ(a.trace[k].counters, b.trace[k].counters);
    }
    auto c2 = c;
    c2.seed = 8;
    EXPECT_NE(run_solver(*p, c2).trace[0].f_value, a.trace[0].f_value);
  }
}

TEST(RunSolver, TraceIsCompleteAndCountersCumulative) {
  std::mt19937_64 rng(5);
  auto p = random_logistic(100, 10, 1e-4, rng);
  auto c = adaptive_config(Method::AdaptiveDual, 10.0, 0);
  c.max_iters = 40;
  const auto r = run_solver(*p, c);
  ASSERT_GT(r.iterations(), 0);
  EvalCounters prev{1, 1, 0};
  std::size_t inner_total = 0;
  for (int k = 0; k < r.iterations(); ++k) {
    const auto& rec = r.trace[k];
    EXPECT_EQ(rec.iter, k + 1);
    EXPECT_GE(rec.counters.value, prev.value);
    EXPECT_GE(rec.counters.gradient, prev.gradient);
    EXPECT_EQ(rec.counters.hvp - prev.hvp, 10u);  // m sampled directions per iteration
    EXPECT_LE(rec.inner_count, 30);
    EXPECT_GT(rec.eta, 0.0);
    inner_total += static_cast<std::size_t>(rec.inner_count);
    prev = rec.counters;
  }
  // DUAL mode: one gradient per trial, reused as the next g; one value per iteration.
  const auto K = static_cast<std::size_t>(r.iterations());
  EXPECT_EQ(r.counters.gradient, 1 + K + inner_total);
  EXPECT_EQ(r.counters.value, 1 + K);
}

TEST(RunSolver, MonotoneDescentAdaptiveModes) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto p = random_logistic(200, 20, 1e-4, rng);
    for (auto m : {Method::AdaptiveDual, Method::AdaptiveReg}) {
      const auto r = run_solver(*p, adaptive_config(m, 1.0, seed));
      double f = r.f_initial;
      for (const auto& rec : r.trace) {
        if (rec.fallback_flags() == 0) {
          EXPECT_LE(rec.f_value, f) << to_string(m) << " iter " << rec.iter;
        }
        f = rec.f_value;
      }
    }
  }
}

TEST(RunSolver, AlphaBookkeeping) {
  std::mt19937_64 rng(6);
  auto p = random_logistic(150, 12, 1e-4, rng);
  auto c = adaptive_config(Method::AdaptiveReg, 1e-2, 3);
  const auto r = run_solver(*p, c);
  double inner = 0;
  for (const auto& rec : r.trace) inner += rec.inner_count;
  // γ_inc = 2 and γ_dec = 1/2: each iteration multiplies α by 2^{inner−1}
  EXPECT_NEAR(inner, std::log2(r.alpha_final / r.alpha_initial) + r.iterations(), 1e-9);

  auto& ap = std::get<AdaptiveParams>(c.engine);
  ap.gamma_dec = 1.0;
  const auto mono = run_solver(*p, c);
  double prev = ap.alpha0;
  for (const auto& rec : mono.trace) {
    EXPECT_GE(rec.alpha, prev);
    prev = rec.alpha;
  }
}

TEST(RunSolver, HistoryPairsConverge) {
  std::mt19937_64 rng(7);
  auto p = random_logistic(200, 10, 1e-3, rng);
  for (auto kind : {ApproxKind::LBFGS, ApproxKind::LSR1}) {
    SolverConfig c;
    c.method = Method::AdaptiveReg;
    c.approx.kind = kind;
    c.approx.pair_strategy = PairStrategy::HISTORY;
    c.approx.h0_scale = 1.0;
    AdaptiveParams ap;
    ap.mode = AcceptMode::Reg;
    c.engine = ap;
    c.x0.kind = StartKind::Zero;
    c.max_iters = 500;
    c.grad_tol = 1e-16;
    const auto r = run_solver(*p, c);
    EXPECT_EQ(r.termination, Termination::GradTol);
    EXPECT_EQ(r.counters.hvp, 0u);
    EXPECT_LT(r.f_final, r.f_initial);
  }
}

TEST(RunSolver, NumericalFailureCarriesPartialTrace) {
  Fragile f;
  SolverConfig c;
  c.engine = FixedParams{1e-3};
  c.approx.h0_scale = 1.0;
  try {
    run_solver(f, c);
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    EXPECT_EQ(e.partial().iterations(), 1);
    EXPECT_TRUE(std::isnan(e.partial().trace[0].f_value));
  }
}

TEST(RunSolver, NullStepIsStationary) {
  QuadraticProblem q(Matrix::Identity(2, 2), Vector::Zero(2));
  SolverConfig c;
  c.engine = FixedParams{1e300};
  c.approx.h0_scale = 1e-10;
  const auto r = run_solver(q, c);
  EXPECT_EQ(r.termination, Termination::Stationary);
  EXPECT_EQ(r.iterations(), 1);
}

TEST(RunSolver, IndefiniteOperatorFallsBackToScaledIdentity) {
  Saddle s;
  SolverConfig c;
  c.method = Method::AdaptiveDual;
  c.approx.memory = 2;
  c.approx.h0_scale = 1.0;
  AdaptiveParams ap;
  ap.cubic = 1.0;
  c.engine = ap;
  c.x0 = {StartKind::Explicit, Vector{{0.0, 1.0}}};
  c.max_iters = 1;
  // Two independent exact pairs make L-SR1 reproduce A⁻¹, and gᵀA⁻¹g < 0 here.
  const auto r = run_solver(s, c);
  ASSERT_EQ(r.iterations(), 1);
  EXPECT_TRUE(r.trace[0].indefinite_fallback);
  EXPECT_EQ(r.trace[0].fallback_flags() & 2, 2);
}

TEST(RunSolver, ObserverSeesFrozenOperator) {
  std::mt19937_64 rng(9);
  auto p = random_logistic(100, 8, 1e-4, rng);
  int calls = 0;
  const auto r = run_solver(*p, adaptive_config(Method::AdaptiveDual, 1.0, 1), [&](const IterationEvent& e) {
    ++calls;
    const double gd = dual_norm(e.op, e.g).value;
    EXPECT_DOUBLE_EQ(gd, e.record.grad_dual_norm);
    EXPECT_EQ(e.x_next, e.step.x_next);
  });
  EXPECT_EQ(calls, r.iterations());
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  c.method = Method::Ceqn;
  EXPECT_THROW(c.validate(), UsageError);
  c.engine = CeqnParams{};
  EXPECT_NO_THROW(c.validate());
  c.method = Method::AdaptiveReg;
  c.engine = AdaptiveParams{};  // mode defaults to Dual
  EXPECT_THROW(c.validate(), UsageError);
  c.method = Method::Fixed;
  c.engine = FixedParams{0.0};
  EXPECT_THROW(c.validate(), UsageError);
}
