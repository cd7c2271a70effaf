#include "feddw/feddw_math.hpp"

#include <algorithm>

namespace feddw {

Vector SLMatrix::row_mask() const {
  Vector m(static_cast<Eigen::Index>(covered.size()));
  for (std::size_t i = 0; i < covered.size(); ++i) m[static_cast<Eigen::Index>(i)] = covered[i] ? 1.0 : 0.0;
  return m;
}

SLMatrix SLMatrix::uniform(int class_count) {
  if (class_count < 2) throw InvalidInput("SLMatrix::uniform: need at least two classes");
  return {Matrix::Constant(class_count, class_count, 1.0 / class_count),
          std::vector<bool>(static_cast<std::size_t>(class_count), true)};
}

SLMatrix local_sl_matrix(const Model& model, const Dataset& data, std::span<const std::size_t> shard) {
  const int classes = data.class_count;
  if (model.class_count != classes) throw InvalidInput("local_sl_matrix: model output does not match class count");
  SLMatrix sl{Matrix::Zero(classes, classes), std::vector<bool>(static_cast<std::size_t>(classes), false)};
  if (shard.empty()) return sl;

  const Dataset local = data.subset(shard);
  const Matrix probs = softmax_rows(predict_logits(model, local.features));
  std::vector<long> counts(static_cast<std::size_t>(classes), 0);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const int y = local.labels[static_cast<std::size_t>(r)];
    sl.omega.row(y) += probs.row(r);
    counts[static_cast<std::size_t>(y)] += 1;
  }
  for (int c = 0; c < classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) continue;
    sl.omega.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    sl.covered[static_cast<std::size_t>(c)] = true;
  }
  return sl;
}

SLMatrix local_sl_matrix(const Model& model, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return local_sl_matrix(model, data, all);
}

SLMatrix aggregate_sl(std::span<const SlUpload> uploads, const SLMatrix& previous_global) {
  const int classes = previous_global.class_count();
  for (const auto& u : uploads) {
    if (u.sl.omega.rows() != classes || u.sl.omega.cols() != classes ||
        u.counts.size() != static_cast<std::size_t>(classes))
      throw InvalidInput("aggregate_sl: upload shape does not match the global SL matrix");
    if (std::any_of(u.counts.begin(), u.counts.end(), [](long c) { return c < 0; }))
      throw InvalidInput("aggregate_sl: negative class count");
  }

  SLMatrix out = previous_global;
  for (int i = 0; i < classes; ++i) {
    const auto row = static_cast<std::size_t>(i);
    double total = 0;
    for (const auto& u : uploads) total += static_cast<double>(u.counts[row]);
    if (total == 0) continue;
    out.omega.row(i).setZero();
    for (const auto& u : uploads) {
      if (u.counts[row] == 0) continue;
      out.omega.row(i) += (static_cast<double>(u.counts[row]) / total) * u.sl.omega.row(i);
    }
    out.covered[row] = true;
  }
  return out;
}

Matrix cr_matrix(const Matrix& classifier_weights) { return gram(classifier_weights); }

Matrix softmax_cr(const Matrix& classifier_weights) { return softmax_rows(gram(classifier_weights)); }

double reg_loss_bound(int class_count) {
  if (class_count < 2) throw InvalidInput("reg_loss_bound: need at least two classes");
  return 2.0 / class_count;
}

namespace {

void check_shapes(const SLMatrix& sl, const Matrix& w, const char* who) {
  if (sl.omega.rows() != sl.omega.cols() || sl.omega.rows() != w.rows() ||
      sl.covered.size() != static_cast<std::size_t>(sl.omega.rows()))
    throw InvalidInput(std::string(who) + ": SL matrix is not |C|x|C| for a |C|-row classifier");
}

bool covered_rows_stochastic(const SLMatrix& sl) {
  for (int i = 0; i < sl.class_count(); ++i) {
    if (!sl.covered[static_cast<std::size_t>(i)]) continue;
    const auto row = sl.omega.row(i);
    if (row.minCoeff() < 0 || std::abs(row.sum() - 1) > 1e-9) return false;
  }
  return true;
}

}  // namespace

double reg_loss(const SLMatrix& global_sl, const Matrix& classifier_weights) {
  check_shapes(global_sl, classifier_weights, "reg_loss");
  const double loss = consistency_loss(global_sl.omega, classifier_weights, global_sl.row_mask());
  // Saturated softmax rows round to one-hot, so the supremum itself is reachable in floating point.
  if (!(loss <= reg_loss_bound(global_sl.class_count())) && covered_rows_stochastic(global_sl))
    throw Error("invariant", "reg_loss " + std::to_string(loss) + " exceeds the 2/|C| ceiling");
  return loss;
}

Matrix reg_grad(const SLMatrix& global_sl, const Matrix& classifier_weights) {
  check_shapes(global_sl, classifier_weights, "reg_grad");
  return consistency_grad(global_sl.omega, classifier_weights, global_sl.row_mask());
}

double reg_loss_linearized(const SLMatrix& global_sl, const Matrix& classifier_weights, const Matrix& reference) {
  check_shapes(global_sl, classifier_weights, "reg_loss_linearized");
  const Matrix a = softmax_cr(classifier_weights);
  if (reference.rows() != a.rows() || reference.cols() != a.cols())
    throw InvalidInput("reg_loss_linearized: reference must be |C|x|C|");
  const Matrix residual = global_sl.row_mask().asDiagonal() *
                          (global_sl.omega - reference.transpose() * a - a.transpose() * reference +
                           reference.transpose() * reference);
  const double c = global_sl.class_count();
  return residual.squaredNorm() / (c * c);
}

Matrix reg_grad_linearized(const SLMatrix& global_sl, const Matrix& classifier_weights, const Matrix& reference) {
  check_shapes(global_sl, classifier_weights, "reg_grad_linearized");
  const Matrix a = softmax_cr(classifier_weights);
  if (reference.rows() != a.rows() || reference.cols() != a.cols())
    throw InvalidInput("reg_grad_linearized: reference must be |C|x|C|");
  const double c = global_sl.class_count();
  const Matrix d_a = linearized_surrogate_grad(global_sl.omega, a, reference, global_sl.row_mask()) / (c * c);
  return gram_backward(classifier_weights, softmax_rows_backward(a, d_a));
}

double sl_cr_distance(const SLMatrix& sl, const Matrix& classifier_weights) {
  return std::sqrt(frobenius_sq_dist(sl.omega, softmax_cr(classifier_weights)));
}

nlohmann::json to_json(const SLMatrix& sl) {
  nlohmann::json j;
  j["class_count"] = sl.class_count();
  j["values"] = std::vector<double>(sl.omega.data(), sl.omega.data() + sl.omega.size());
  j["covered"] = sl.covered;
  return j;
}

SLMatrix sl_from_json(const nlohmann::json& j) {
  try {
    const int c = j.at("class_count").get<int>();
    const auto values = j.at("values").get<std::vector<double>>();
    auto covered = j.at("covered").get<std::vector<bool>>();
    if (c < 1 || values.size() != static_cast<std::size_t>(c) * c || covered.size() != static_cast<std::size_t>(c))
      throw FormatError("SL matrix JSON: inconsistent sizes");
    SLMatrix sl{Eigen::Map<const Matrix>(values.data(), c, c), std::move(covered)};
    return sl;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("SL matrix JSON: ") + e.what());
  }
}

}  // namespace feddw
