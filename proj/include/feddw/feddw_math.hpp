#pragma once

// Soft-label / class-relation consistency kernel.
//
//   SL matrix      Omega[i, :] = mean softmax output over class-i samples
//   CR matrix      w w^T for classifier weights w (|C| x k)
//   regularizer    (1/|C|^2) * || Omega - softmax_rows(w w^T) ||_F^2
//
// Rows of Omega flagged uncovered (no samples of that class anywhere) are left
// out of the regularizer sum. The regularizer depends only on (Omega, w), so
// its gradient is computed once per optimizer step and injected into the
// classifier gradient.

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "feddw/datasets.hpp"
#include "feddw/neuralnet.hpp"
#include "feddw/numerics.hpp"

namespace feddw {

struct SLMatrix {
  Matrix omega;                // |C| x |C|
  std::vector<bool> covered;   // per row

  int class_count() const { return static_cast<int>(omega.rows()); }
  /// Row mask as 0/1 doubles.
  Vector row_mask() const;
  /// Every row 1/|C|, all covered.
  static SLMatrix uniform(int class_count);
};

enum class RegularizerMode { exact, linearized };

struct RegularizerConfig {
  double mu = 0.1;
  RegularizerMode mode = RegularizerMode::exact;
  int linearization_refresh = 50;
};

/// One client's upload for SL aggregation.
struct SlUpload {
  SLMatrix sl;
  std::vector<long> counts;  // per-class sample counts
};

// ---------------------------------------------------------------------------
// Scalar-generic kernels. `mask` selects the rows of the residual that count.

/// sum_i mask_i * || omega_i - softmax(w w^T)_i ||^2 / |C|^2
template <typename DO, typename DW, typename DM>
typename DW::Scalar consistency_loss(const Eigen::MatrixBase<DO>& omega, const Eigen::MatrixBase<DW>& weights,
                                     const Eigen::MatrixBase<DM>& mask) {
  using Scalar = typename DW::Scalar;
  const auto probs = softmax_rows(gram(weights));
  const Scalar c2 = static_cast<Scalar>(omega.rows() * omega.rows());
  return (mask.asDiagonal() * (omega - probs)).squaredNorm() / c2;
}

template <typename DO, typename DW, typename DM>
MatrixT<typename DW::Scalar> consistency_grad(const Eigen::MatrixBase<DO>& omega, const Eigen::MatrixBase<DW>& weights,
                                              const Eigen::MatrixBase<DM>& mask) {
  using Scalar = typename DW::Scalar;
  const MatrixT<Scalar> probs = softmax_rows(gram(weights));
  const Scalar c2 = static_cast<Scalar>(omega.rows() * omega.rows());
  const MatrixT<Scalar> d_probs = (Scalar(-2) / c2) * (mask.asDiagonal() * (omega - probs));
  return gram_backward(weights, softmax_rows_backward(probs, d_probs));
}

/// || Omega - A^T A ||_F^2, the objective without the row softmax.
template <typename DO, typename DA>
typename DA::Scalar unsoftmaxed_objective(const Eigen::MatrixBase<DO>& omega, const Eigen::MatrixBase<DA>& a) {
  return (omega - a.transpose() * a).squaredNorm();
}

/// Convex surrogate from linearizing A^T A around `reference` (A0):
/// || Omega - A0^T A - A^T A0 + A0^T A0 ||_F^2.
template <typename DO, typename DA, typename DR>
typename DA::Scalar linearized_surrogate(const Eigen::MatrixBase<DO>& omega, const Eigen::MatrixBase<DA>& a,
                                         const Eigen::MatrixBase<DR>& reference) {
  if (a.rows() != reference.rows() || a.cols() != reference.cols() || omega.rows() != a.cols() ||
      omega.cols() != a.cols())
    throw InvalidInput("linearized_surrogate: shape mismatch");
  return (omega - reference.transpose() * a - a.transpose() * reference + reference.transpose() * reference)
      .squaredNorm();
}

/// Gradient of the (masked) linearized surrogate with respect to A.
template <typename DO, typename DA, typename DR, typename DM>
MatrixT<typename DA::Scalar> linearized_surrogate_grad(const Eigen::MatrixBase<DO>& omega,
                                                       const Eigen::MatrixBase<DA>& a,
                                                       const Eigen::MatrixBase<DR>& reference,
                                                       const Eigen::MatrixBase<DM>& mask) {
  using Scalar = typename DA::Scalar;
  const MatrixT<Scalar> residual =
      mask.asDiagonal() *
      (omega - reference.transpose() * a - a.transpose() * reference + reference.transpose() * reference);
  return Scalar(-2) * reference * (residual + residual.transpose());
}

// ---------------------------------------------------------------------------

/// Mean softmax output per class over the samples of `shard`; classes without
/// samples give zero rows flagged uncovered.
SLMatrix local_sl_matrix(const Model& model, const Dataset& data, std::span<const std::size_t> shard);
SLMatrix local_sl_matrix(const Model& model, const Dataset& data);

/// Count-weighted mean of client SL rows; a row no participant holds is
/// carried over from `previous_global`.
SLMatrix aggregate_sl(std::span<const SlUpload> uploads, const SLMatrix& previous_global);

/// w w^T.
Matrix cr_matrix(const Matrix& classifier_weights);

/// Consistency regularizer. Asserts the result stays below reg_loss_bound()
/// whenever the covered rows of the SL matrix are probability vectors.
double reg_loss(const SLMatrix& global_sl, const Matrix& classifier_weights);
/// Exact gradient of reg_loss with respect to the classifier weights.
Matrix reg_grad(const SLMatrix& global_sl, const Matrix& classifier_weights);

/// Linearized variant: (1/|C|^2) * linearized_surrogate(Omega, A, reference)
/// with A = softmax_rows(w w^T), uncovered rows masked out.
double reg_loss_linearized(const SLMatrix& global_sl, const Matrix& classifier_weights, const Matrix& reference);
Matrix reg_grad_linearized(const SLMatrix& global_sl, const Matrix& classifier_weights, const Matrix& reference);

/// softmax_rows(w w^T).
Matrix softmax_cr(const Matrix& classifier_weights);

/// 2 / |C|.
double reg_loss_bound(int class_count);

/// || Omega - softmax_rows(w w^T) ||_F over all rows.
double sl_cr_distance(const SLMatrix& sl, const Matrix& classifier_weights);

nlohmann::json to_json(const SLMatrix& sl);
SLMatrix sl_from_json(const nlohmann::json& j);

}  // namespace feddw
