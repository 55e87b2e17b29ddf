#pragma once

#include <ceqn/core.hpp>

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ceqn {

/// Row-compressed sparse matrix with 0-based, strictly increasing column
/// indices per row.
class SparseDesignMatrix {
 public:
  using Entry = std::pair<Index, double>;

  SparseDesignMatrix() = default;

  /// Builds from per-row entry lists. Throws UsageError on out-of-range or
  /// non-increasing indices and on non-finite values.
  SparseDesignMatrix(Index cols, const std::vector<std::vector<Entry>>& rows) : cols_(cols) {
    if (cols < 0) throw UsageError("SparseDesignMatrix: negative column count");
    row_ptr_.reserve(rows.size() + 1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Index prev = -1;
      for (const auto& [col, val] : rows[r]) {
        if (col < 0 || col >= cols) {
          throw UsageError("SparseDesignMatrix: column index " + std::to_string(col) +
                           " out of range in row " + std::to_string(r));
        }
        if (col <= prev) {
          throw UsageError("SparseDesignMatrix: column indices not strictly increasing in row " +
                           std::to_string(r));
        }
        if (!std::isfinite(val)) {
          throw UsageError("SparseDesignMatrix: non-finite value in row " + std::to_string(r));
        }
        col_idx_.push_back(col);
        values_.push_back(val);
        prev = col;
      }
      row_ptr_.push_back(static_cast<Index>(col_idx_.size()));
    }
  }

  /// All-zero n×d matrix.
  static SparseDesignMatrix zeros(Index rows, Index cols) {
    return SparseDesignMatrix(cols, std::vector<std::vector<Entry>>(static_cast<std::size_t>(rows)));
  }

  static SparseDesignMatrix from_dense(const Matrix& dense) {
    std::vector<std::vector<Entry>> rows(static_cast<std::size_t>(dense.rows()));
    for (Index r = 0; r < dense.rows(); ++r) {
      for (Index c = 0; c < dense.cols(); ++c) {
        if (dense(r, c) != 0.0) rows[static_cast<std::size_t>(r)].emplace_back(c, dense(r, c));
      }
    }
    return SparseDesignMatrix(dense.cols(), rows);
  }

  Index rows() const noexcept { return static_cast<Index>(row_ptr_.empty() ? 0 : row_ptr_.size() - 1); }
  Index cols() const noexcept { return cols_; }
  Index nnz() const noexcept { return static_cast<Index>(values_.size()); }

  std::span<const Index> row_indices(Index r) const {
    const auto b = static_cast<std::size_t>(row_ptr_[static_cast<std::size_t>(r)]);
    const auto e = static_cast<std::size_t>(row_ptr_[static_cast<std::size_t>(r) + 1]);
    return {col_idx_.data() + b, e - b};
  }
  std::span<const double> row_values(Index r) const {
    const auto b = static_cast<std::size_t>(row_ptr_[static_cast<std::size_t>(r)]);
    const auto e = static_cast<std::size_t>(row_ptr_[static_cast<std::size_t>(r) + 1]);
    return {values_.data() + b, e - b};
  }

  double row_dot(Index r, const Vector& x) const {
    const auto idx = row_indices(r);
    const auto val = row_values(r);
    double acc = 0.0;
    for (std::size_t j = 0; j < idx.size(); ++j) acc += val[j] * x[idx[j]];
    return acc;
  }

  /// y = A x
  Vector multiply(const Vector& x) const {
    require_dim(x.size(), cols_, "SparseDesignMatrix::multiply");
    Vector out(rows());
    for (Index r = 0; r < rows(); ++r) out[r] = row_dot(r, x);
    return out;
  }

  /// y = Aᵀ w
  Vector multiply_transpose(const Vector& w) const {
    require_dim(w.size(), rows(), "SparseDesignMatrix::multiply_transpose");
    Vector out = Vector::Zero(cols_);
    for (Index r = 0; r < rows(); ++r) {
      if (w[r] == 0.0) continue;
      const auto idx = row_indices(r);
      const auto val = row_values(r);
      for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] += w[r] * val[j];
    }
    return out;
  }

 private:
  Index cols_ = 0;
  std::vector<Index> row_ptr_{0};
  std::vector<Index> col_idx_;
  std::vector<double> values_;
};

/// Smooth objective with analytic value, gradient and Hessian-vector product.
/// Implementations are immutable after construction.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual Index dimension() const = 0;
  virtual double value(const Vector& x) const = 0;
  virtual Vector gradient(const Vector& x) const = 0;
  virtual Vector hvp(const Vector& x, const Vector& v) const = 0;
};

namespace detail {

// log(1 + exp(-t)) without overflow
inline double log1p_exp_neg(double t) {
  return t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

// σ(t) = 1 / (1 + exp(-t))
inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

/// f(x) = (1/n) Σ log(1 + exp(-b_i⟨a_i, x⟩)) + (μ/2)‖x‖²
class LogisticProblem final : public Problem {
 public:
  LogisticProblem(SparseDesignMatrix design, std::vector<int> labels, double mu)
      : design_(std::move(design)), labels_(std::move(labels)), mu_(mu) {
    if (static_cast<Index>(labels_.size()) != design_.rows()) {
      throw UsageError("LogisticProblem: label count does not match design rows");
    }
    for (int b : labels_) {
      if (b != 1 && b != -1) throw UsageError("LogisticProblem: labels must be +1 or -1");
    }
    if (!(mu_ >= 0.0) || !std::isfinite(mu_)) throw UsageError("LogisticProblem: mu must be >= 0");
    if (design_.rows() == 0) throw UsageError("LogisticProblem: empty dataset");
  }

  Index dimension() const override { return design_.cols(); }
  Index samples() const { return design_.rows(); }
  double mu() const { return mu_; }
  const SparseDesignMatrix& design() const { return design_; }
  const std::vector<int>& labels() const { return labels_; }

  double value(const Vector& x) const override {
    require_dim(x.size(), dimension(), "logistic value");
    const Index n = samples();
    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double t = labels_[static_cast<std::size_t>(i)] * design_.row_dot(i, x);
      loss += detail::log1p_exp_neg(t);
    }
    return loss / static_cast<double>(n) + 0.5 * mu_ * x.squaredNorm();
  }

  Vector gradient(const Vector& x) const override {
    require_dim(x.size(), dimension(), "logistic gradient");
    const Index n = samples();
    Vector coeff(n);
    for (Index i = 0; i < n; ++i) {
      const double b = labels_[static_cast<std::size_t>(i)];
      coeff[i] = -b * detail::sigmoid(-b * design_.row_dot(i, x)) / static_cast<double>(n);
    }
    Vector g = design_.multiply_transpose(coeff);
    g += mu_ * x;
    return g;
  }

  Vector hvp(const Vector& x, const Vector& v) const override {
    require_dim(x.size(), dimension(), "logistic hvp (x)");
    require_dim(v.size(), dimension(), "logistic hvp (v)");
    const Index n = samples();
    Vector coeff(n);
    for (Index i = 0; i < n; ++i) {
      const double s = detail::sigmoid(design_.row_dot(i, x));
      coeff[i] = s * (1.0 - s) * design_.row_dot(i, v) / static_cast<double>(n);
    }
    Vector hv = design_.multiply_transpose(coeff);
    hv += mu_ * v;
    return hv;
  }

 private:
  SparseDesignMatrix design_;
  std::vector<int> labels_;
  double mu_;
};

/// f(x) = ½ xᵀAx − bᵀx with A symmetric positive definite.
class QuadraticProblem final : public Problem {
 public:
  QuadraticProblem(Matrix matrix, Vector linear) : a_(std::move(matrix)), b_(std::move(linear)) {
    if (a_.rows() != a_.cols()) throw UsageError("QuadraticProblem: matrix must be square");
    require_dim(b_.size(), a_.rows(), "QuadraticProblem linear term");
    if ((a_ - a_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw UsageError("QuadraticProblem: matrix is not symmetric");
    }
    llt_.compute(a_);
    if (llt_.info() != Eigen::Success) {
      throw UsageError("QuadraticProblem: matrix is not positive definite");
    }
  }

  Index dimension() const override { return a_.rows(); }
  const Matrix& matrix() const { return a_; }
  const Vector& linear() const { return b_; }
  Vector minimizer() const { return llt_.solve(b_); }

  double value(const Vector& x) const override {
    require_dim(x.size(), dimension(), "quadratic value");
    return 0.5 * x.dot(a_ * x) - b_.dot(x);
  }
  Vector gradient(const Vector& x) const override {
    require_dim(x.size(), dimension(), "quadratic gradient");
    return a_ * x - b_;
  }
  Vector hvp(const Vector& x, const Vector& v) const override {
    require_dim(x.size(), dimension(), "quadratic hvp (x)");
    require_dim(v.size(), dimension(), "quadratic hvp (v)");
    return a_ * v;
  }

 private:
  Matrix a_;
  Vector b_;
  Eigen::LLT<Matrix> llt_;
};

/// z ↦ f(Mz) for an invertible square M. Shares the base problem read-only.
class LinearReparameterization final : public Problem {
 public:
  LinearReparameterization(std::shared_ptr<const Problem> base, Matrix map)
      : base_(std::move(base)), map_(std::move(map)) {
    if (map_.rows() != map_.cols()) throw UsageError("LinearReparameterization: map must be square");
    require_dim(map_.rows(), base_->dimension(), "LinearReparameterization");
  }

  Index dimension() const override { return map_.cols(); }
  double value(const Vector& z) const override { return base_->value(map_ * z); }
  Vector gradient(const Vector& z) const override {
    return map_.transpose() * base_->gradient(map_ * z);
  }
  Vector hvp(const Vector& z, const Vector& v) const override {
    return map_.transpose() * base_->hvp(map_ * z, map_ * v);
  }

 private:
  std::shared_ptr<const Problem> base_;
  Matrix map_;
};

struct EvalCounters {
  std::uint64_t value = 0;
  std::uint64_t gradient = 0;
  std::uint64_t hvp = 0;

  friend bool operator==(const EvalCounters&, const EvalCounters&) = default;
};

/// Single-owner, counting view over a shared Problem.
class Oracle {
 public:
  explicit Oracle(const Problem& problem) : problem_(&problem) {}

  Index dimension() const { return problem_->dimension(); }
  const Problem& problem() const { return *problem_; }
  const EvalCounters& counters() const { return counters_; }

  double value(const Vector& x) {
    ++counters_.value;
    return problem_->value(x);
  }
  Vector gradient(const Vector& x) {
    ++counters_.gradient;
    return problem_->gradient(x);
  }
  Vector hvp(const Vector& x, const Vector& v) {
    ++counters_.hvp;
    return problem_->hvp(x, v);
  }

 private:
  const Problem* problem_;
  EvalCounters counters_;
};

/// Central differences (f(x + h e_j) − f(x − h e_j)) / 2h, one coordinate at a time.
inline Vector finite_diff_gradient(Oracle& oracle, const Vector& x, double h) {
  if (!(h > 0.0)) throw UsageError("finite_diff_gradient: step must be positive");
  require_dim(x.size(), oracle.dimension(), "finite_diff_gradient");
  Vector g(x.size());
  Vector probe = x;
  for (Index j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const double up = oracle.value(probe);
    probe[j] = x[j] - h;
    const double down = oracle.value(probe);
    probe[j] = x[j];
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Dense Hessian assembled column by column from d Hessian-vector products.
inline Matrix dense_hessian(Oracle& oracle, const Vector& x) {
  const Index d = oracle.dimension();
  Matrix hess(d, d);
  Vector e = Vector::Zero(d);
  for (Index j = 0; j < d; ++j) {
    e[j] = 1.0;
    hess.col(j) = oracle.hvp(x, e);
    e[j] = 0.0;
  }
  return 0.5 * (hess + hess.transpose());
}

}  // namespace ceqn
