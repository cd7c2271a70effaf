#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "feddw/numerics.hpp"

namespace feddw {

/// Fully connected layer, y = x W^T + b. Weights are out x in.
struct Dense {
  Matrix weights;
  Vector bias;  // empty when has_bias is false
  bool has_bias = true;

  Eigen::Index in() const { return weights.cols(); }
  Eigen::Index out() const { return weights.rows(); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(weights.size() + (has_bias ? bias.size() : 0));
  }
};

struct ReLU {};

using Layer = std::variant<Dense, ReLU>;

struct ModelSpec {
  int input_dim = 0;
  std::vector<int> feature_dims;             // Dense+ReLU blocks of the feature extractor
  std::vector<int> mapping_dims{128, 128};   // Dense+ReLU blocks of the mapping layer
  int class_count = 0;
  bool classifier_bias = true;
};

/// f = classification o mapping o feature_extractor.
struct Model {
  std::vector<Layer> feature_extractor;
  std::vector<Layer> mapping_layer;
  Dense classification_layer;
  int class_count = 0;

  Eigen::Index input_dim() const;
  std::size_t parameter_count() const;

  /// Dense layers in canonical order: feature extractor, mapping, classifier.
  std::vector<const Dense*> dense_layers() const;
  std::vector<Dense*> dense_layers();
};

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
Model init_model(const ModelSpec& spec, Rng& rng);

/// Layer inputs recorded by forward(), one per layer of the flattened stack.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;
};

struct ForwardResult {
  Matrix logits;
  ForwardCache cache;
};

ForwardResult forward(const Model& model, const Matrix& batch);
/// Logits only; no cache kept.
Matrix predict_logits(const Model& model, const Matrix& batch);

/// Mean softmax cross-entropy, evaluated in log space.
double cross_entropy_loss(const Matrix& logits, std::span<const int> labels);

/// Gradients in the canonical dense-layer order of the model.
struct Gradients {
  std::vector<Dense> dense;

  Dense& classifier() { return dense.back(); }
  const Dense& classifier() const { return dense.back(); }
  bool all_finite() const;
};

Gradients zero_gradients(const Model& model);

/// Exact gradient of the mean cross-entropy.
Gradients backward(const Model& model, const ForwardCache& cache, const Matrix& logits,
                   std::span<const int> labels);
/// As above, with `extra_classifier_grad` added to the classification weights.
Gradients backward(const Model& model, const ForwardCache& cache, const Matrix& logits,
                   std::span<const int> labels, const Matrix& extra_classifier_grad);

struct AdamState {
  std::vector<Dense> first_moment;
  std::vector<Dense> second_moment;
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_model(const Model& model, double learning_rate);
};

/// One bias-corrected Adam update, in place. Throws TrainingDiverged on a
/// non-finite gradient and leaves model and state untouched.
void adam_step(Model& model, AdamState& state, const Gradients& grads);

// Flat parameter layout: for every dense layer in canonical order, the
// row-major weights followed by the bias (when present).
Vector flatten_parameters(const Model& model);
void load_parameters(Model& model, const Vector& flat);

/// Writes <stem>.bin (little-endian float64 parameters) and <stem>.json
/// (shape manifest).
void save_model(const Model& model, const std::filesystem::path& stem);
Model load_model(const std::filesystem::path& stem);

double accuracy(const Matrix& logits, std::span<const int> labels);

}  // namespace feddw
