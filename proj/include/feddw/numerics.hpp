#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

#include "feddw/errors.hpp"

namespace feddw {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

/// Row-wise softmax with per-row max subtraction.
template <typename Derived>
MatrixT<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.cols() < 1) throw InvalidInput("softmax_rows: matrix has no columns");
  if (!m.allFinite()) throw InvalidInput("softmax_rows: non-finite input entry");
  MatrixT<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Scalar peak = m.row(i).maxCoeff();
    out.row(i) = (m.row(i).array() - peak).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

/// Pulls an upstream gradient dL/dP through P = softmax_rows(Z); returns dL/dZ.
template <typename DerivedP, typename DerivedG>
MatrixT<typename DerivedP::Scalar> softmax_rows_backward(const Eigen::MatrixBase<DerivedP>& probs,
                                                         const Eigen::MatrixBase<DerivedG>& upstream) {
  using Scalar = typename DerivedP::Scalar;
  MatrixT<Scalar> out(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const Scalar inner = probs.row(i).dot(upstream.row(i));
    out.row(i) = probs.row(i).cwiseProduct((upstream.row(i).array() - inner).matrix());
  }
  return out;
}

/// m * m^T.
template <typename Derived>
MatrixT<typename Derived::Scalar> gram(const Eigen::MatrixBase<Derived>& m) {
  return m * m.transpose();
}

/// Gradient of L(gram(m)) with respect to m, given dL/dG.
template <typename DerivedM, typename DerivedG>
MatrixT<typename DerivedM::Scalar> gram_backward(const Eigen::MatrixBase<DerivedM>& m,
                                                 const Eigen::MatrixBase<DerivedG>& upstream) {
  return (upstream + upstream.transpose()) * m;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar frobenius_sq_dist(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidInput("frobenius_sq_dist: shape mismatch");
  return (a - b).squaredNorm();
}

/// Deterministic generator. A child derived with split(label) depends only on
/// (seed, label), never on how many draws the parent has made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  Rng split(std::string_view label) const;
  Rng split(std::uint64_t label) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1).
  double uniform_open();
  /// Uniform integer in [0, bound), unbiased.
  std::uint64_t uniform_index(std::uint64_t bound);
  double normal();
  double gamma(double alpha);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = uniform_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

/// Dirichlet(alpha * 1_k) via k normalized Gamma(alpha, 1) draws.
Vector sample_dirichlet(Rng& rng, double alpha, int k);

/// Central differences of a scalar function of a matrix.
template <typename F>
Matrix finite_diff_grad(F&& f, const Matrix& at, double h) {
  if (!(h > 0)) throw InvalidInput("finite_diff_grad: step must be positive");
  Matrix probe = at;
  Matrix grad(at.rows(), at.cols());
  for (Eigen::Index i = 0; i < at.rows(); ++i) {
    for (Eigen::Index j = 0; j < at.cols(); ++j) {
      const double x = at(i, j);
      probe(i, j) = x + h;
      const double up = f(static_cast<const Matrix&>(probe));
      probe(i, j) = x - h;
      const double down = f(static_cast<const Matrix&>(probe));
      probe(i, j) = x;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw OracleFailure("finite_diff_grad: non-finite function value");
      grad(i, j) = (up - down) / (2 * h);
    }
  }
  return grad;
}

/// ||a - b||_F / max(||a||_F, ||b||_F); zero when both vanish.
template <typename DerivedA, typename DerivedB>
double relative_error(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0) return 0;
  return (a - b).norm() / scale;
}

}  // namespace feddw
