#pragma once

#include <ceqn/core.hpp>
#include <ceqn/problem.hpp>

#include <cmath>
#include <cstddef>
#include <deque>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ceqn {

enum class ApproxKind { LSR1, LBFGS, EXACT };
enum class PairStrategy { HISTORY, SAMPLED };

struct CurvaturePair {
  Vector s;
  Vector y;
};

struct ApproxConfig {
  int memory = 10;
  double h0_scale = 1e-4;  // H₀ = c·I
  ApproxKind kind = ApproxKind::LSR1;
  PairStrategy pair_strategy = PairStrategy::SAMPLED;
  double sr1_skip_tol = 1e-8;
  double bfgs_curvature_tol = 1e-12;

  void validate() const {
    if (memory < 1) throw UsageError("ApproxConfig: memory must be >= 1");
    if (!(h0_scale > 0.0) || !std::isfinite(h0_scale)) throw UsageError("ApproxConfig: h0_scale must be > 0");
    if (!(sr1_skip_tol > 0.0)) throw UsageError("ApproxConfig: sr1_skip_tol must be > 0");
    if (!(bfgs_curvature_tol > 0.0)) throw UsageError("ApproxConfig: bfgs_curvature_tol must be > 0");
  }
};

/// Bounded FIFO of curvature pairs. Pushing into a full buffer drops the oldest.
class PairBuffer {
 public:
  PairBuffer(std::size_t capacity, PairStrategy strategy) : capacity_(capacity), strategy_(strategy) {
    if (capacity == 0) throw UsageError("PairBuffer: capacity must be >= 1");
  }

  void push(CurvaturePair pair) {
    if (!pairs_.empty()) require_dim(pair.s.size(), pairs_.front().s.size(), "PairBuffer::push");
    require_dim(pair.y.size(), pair.s.size(), "PairBuffer::push");
    if (pairs_.size() == capacity_) pairs_.pop_front();
    pairs_.push_back(std::move(pair));
  }

  /// Replaces the whole content, keeping at most the newest `capacity` pairs.
  void assign(std::vector<CurvaturePair> pairs) {
    pairs_.clear();
    for (auto& p : pairs) push(std::move(p));
  }

  void clear() { pairs_.clear(); }
  std::size_t size() const noexcept { return pairs_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return pairs_.empty(); }
  PairStrategy strategy() const noexcept { return strategy_; }

  /// Oldest first.
  std::vector<CurvaturePair> pairs() const { return {pairs_.begin(), pairs_.end()}; }
  const CurvaturePair& newest() const { return pairs_.back(); }
  const CurvaturePair& oldest() const { return pairs_.front(); }

 private:
  std::size_t capacity_;
  PairStrategy strategy_;
  std::deque<CurvaturePair> pairs_;
};

inline void collect_history_pair(PairBuffer& buffer, const Vector& x_prev, const Vector& x_next,
                                 const Vector& g_prev, const Vector& g_next) {
  require_dim(x_next.size(), x_prev.size(), "collect_history_pair (x)");
  require_dim(g_prev.size(), x_prev.size(), "collect_history_pair (g_prev)");
  require_dim(g_next.size(), x_prev.size(), "collect_history_pair (g_next)");
  buffer.push({x_next - x_prev, g_next - g_prev});
}

/// m pairs (d_i, ∇²f(x) d_i) with d_i ~ N(0, I) drawn from `rng`.
template <class Rng>
std::vector<CurvaturePair> sample_pairs(Oracle& oracle, const Vector& x, int m, Rng& rng) {
  if (m < 1) throw UsageError("sample_pairs: m must be >= 1");
  require_dim(x.size(), oracle.dimension(), "sample_pairs");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<CurvaturePair> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    Vector dir(x.size());
    for (Index j = 0; j < dir.size(); ++j) dir[j] = normal(rng);
    Vector y = oracle.hvp(x, dir);
    out.push_back({std::move(dir), std::move(y)});
  }
  return out;
}

/// Applies H ≈ ∇²f⁻¹ without materializing it. Immutable once built.
class InverseHessianOperator {
 public:
  virtual ~InverseHessianOperator() = default;
  virtual Vector apply(const Vector& g) const = 0;
  virtual Index dimension() const = 0;
  /// Pairs dropped by the skip rule during construction.
  virtual int skipped_pairs() const { return 0; }
  /// True when pairs were supplied but none survived, so the operator is H₀.
  virtual bool fallback() const { return false; }
};

class ScaledIdentityOperator final : public InverseHessianOperator {
 public:
  ScaledIdentityOperator(Index dim, double scale) : dim_(dim), scale_(scale) {}
  Vector apply(const Vector& g) const override {
    require_dim(g.size(), dim_, "ScaledIdentityOperator::apply");
    return scale_ * g;
  }
  Index dimension() const override { return dim_; }
  double scale() const { return scale_; }

 private:
  Index dim_;
  double scale_;
};

/// Limited-memory SR1 in recursive form:
///   H^{i+1}u = H^i u + (v_iᵀu / v_iᵀy_i) v_i,  v_i = s_i − H^i y_i,  H⁰ = cI.
/// Construction computes every v_i by applying the partial operator to y_i
/// (O(m²d)); apply is then O(md). Pair i is dropped when
/// |v_iᵀy_i| ≤ skip_tol·‖v_i‖·‖y_i‖.
class Lsr1Operator final : public InverseHessianOperator {
 public:
  Lsr1Operator(std::span<const CurvaturePair> pairs, Index dim, double scale, double skip_tol)
      : dim_(dim), scale_(scale) {
    if (!(scale > 0.0)) throw UsageError("Lsr1Operator: scale must be > 0");
    for (const auto& p : pairs) {
      require_dim(p.s.size(), dim, "Lsr1Operator (s)");
      require_dim(p.y.size(), dim, "Lsr1Operator (y)");
      Vector v = p.s - apply_partial(p.y);
      const double denom = v.dot(p.y);
      if (!std::isfinite(denom) || std::abs(denom) <= skip_tol * v.norm() * p.y.norm()) {
        ++skipped_;
        continue;
      }
      dirs_.push_back(std::move(v));
      denoms_.push_back(denom);
    }
    fallback_ = !pairs.empty() && dirs_.empty();
  }

  Vector apply(const Vector& g) const override {
    require_dim(g.size(), dim_, "Lsr1Operator::apply");
    return apply_partial(g);
  }
  Index dimension() const override { return dim_; }
  int skipped_pairs() const override { return skipped_; }
  bool fallback() const override { return fallback_; }
  std::size_t rank() const { return dirs_.size(); }

 private:
  Vector apply_partial(const Vector& u) const {
    Vector out = scale_ * u;
    for (std::size_t j = 0; j < dirs_.size(); ++j) out += (dirs_[j].dot(u) / denoms_[j]) * dirs_[j];
    return out;
  }

  Index dim_;
  double scale_;
  std::vector<Vector> dirs_;
  std::vector<double> denoms_;
  int skipped_ = 0;
  bool fallback_ = false;
};

/// Limited-memory BFGS via the two-loop recursion with initial scaling
/// B₀ = yᵀy / sᵀy from the newest retained pair. Pairs with
/// sᵀy ≤ tol·‖s‖·‖y‖ are excluded from both loops; with nothing retained the
/// operator is cI.
class LbfgsOperator final : public InverseHessianOperator {
 public:
  LbfgsOperator(std::span<const CurvaturePair> pairs, Index dim, double scale, double curvature_tol)
      : dim_(dim), scale_(scale) {
    if (!(scale > 0.0)) throw UsageError("LbfgsOperator: scale must be > 0");
    for (const auto& p : pairs) {
      require_dim(p.s.size(), dim, "LbfgsOperator (s)");
      require_dim(p.y.size(), dim, "LbfgsOperator (y)");
      const double sy = p.s.dot(p.y);
      if (!std::isfinite(sy) || sy <= curvature_tol * p.s.norm() * p.y.norm()) {
        ++skipped_;
        continue;
      }
      kept_.push_back(p);
      rho_.push_back(1.0 / sy);
    }
    fallback_ = !pairs.empty() && kept_.empty();
    if (!kept_.empty()) {
      const auto& last = kept_.back();
      b0_ = last.y.squaredNorm() / last.s.dot(last.y);
    }
  }

  Vector apply(const Vector& g) const override {
    require_dim(g.size(), dim_, "LbfgsOperator::apply");
    if (kept_.empty()) return scale_ * g;
    const std::size_t m = kept_.size();
    std::vector<double> alpha(m);
    Vector q = g;
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_[i] * kept_[i].s.dot(q);
      q -= alpha[i] * kept_[i].y;
    }
    Vector r = q / b0_;
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_[i] * kept_[i].y.dot(r);
      r += (alpha[i] - beta) * kept_[i].s;
    }
    return r;
  }
  Index dimension() const override { return dim_; }
  int skipped_pairs() const override { return skipped_; }
  bool fallback() const override { return fallback_; }

 private:
  Index dim_;
  double scale_;
  std::vector<CurvaturePair> kept_;
  std::vector<double> rho_;
  double b0_ = 1.0;
  int skipped_ = 0;
  bool fallback_ = false;
};

/// Exact inverse of a dense SPD matrix (small problems only).
class DenseInverseOperator final : public InverseHessianOperator {
 public:
  explicit DenseInverseOperator(const Matrix& hessian) : dim_(hessian.rows()), llt_(hessian) {
    if (llt_.info() != Eigen::Success) {
      throw IndefiniteOperator("DenseInverseOperator: Hessian is not positive definite");
    }
  }
  Vector apply(const Vector& g) const override {
    require_dim(g.size(), dim_, "DenseInverseOperator::apply");
    return llt_.solve(g);
  }
  Index dimension() const override { return dim_; }

 private:
  Index dim_;
  Eigen::LLT<Matrix> llt_;
};

struct ApplyResult {
  Vector value;
  int skipped = 0;
};

inline ApplyResult lsr1_apply(std::span<const CurvaturePair> pairs, double scale, const Vector& g,
                              double skip_tol) {
  Lsr1Operator op(pairs, g.size(), scale, skip_tol);
  return {op.apply(g), op.skipped_pairs()};
}

inline ApplyResult lbfgs_two_loop(std::span<const CurvaturePair> pairs, const Vector& g,
                                  double curvature_tol, double scale) {
  LbfgsOperator op(pairs, g.size(), scale, curvature_tol);
  return {op.apply(g), op.skipped_pairs()};
}

/// Limited-memory operator for `config.kind` (LSR1 or LBFGS) over `pairs`.
inline std::unique_ptr<InverseHessianOperator> rebuild_operator(const ApproxConfig& config,
                                                                std::span<const CurvaturePair> pairs,
                                                                Index dim) {
  config.validate();
  switch (config.kind) {
    case ApproxKind::LSR1:
      return std::make_unique<Lsr1Operator>(pairs, dim, config.h0_scale, config.sr1_skip_tol);
    case ApproxKind::LBFGS:
      return std::make_unique<LbfgsOperator>(pairs, dim, config.h0_scale, config.bfgs_curvature_tol);
    case ApproxKind::EXACT:
      break;
  }
  throw UsageError("rebuild_operator: EXACT operators are built from the Hessian, not from pairs");
}

inline std::unique_ptr<InverseHessianOperator> rebuild_operator(const ApproxConfig& config,
                                                                const PairBuffer& buffer, Index dim) {
  const auto pairs = buffer.pairs();
  return rebuild_operator(config, std::span<const CurvaturePair>(pairs), dim);
}

}  // namespace ceqn
