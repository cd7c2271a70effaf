#include "feddw/neuralnet.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace feddw {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

Dense make_dense(int in, int out, bool has_bias, Rng& rng) {
  if (in < 1 || out < 1) throw InvalidInput("dense layer dimensions must be positive");
  Dense d;
  d.has_bias = has_bias;
  d.weights.resize(out, in);
  const double bound = std::sqrt(6.0 / in);
  for (Eigen::Index i = 0; i < d.weights.size(); ++i)
    d.weights.data()[i] = (2 * rng.uniform() - 1) * bound;
  if (has_bias) d.bias = Vector::Zero(out);
  return d;
}

Dense zeros_like(const Dense& d) {
  Dense z;
  z.has_bias = d.has_bias;
  z.weights = Matrix::Zero(d.weights.rows(), d.weights.cols());
  if (d.has_bias) z.bias = Vector::Zero(d.bias.size());
  return z;
}

// Flattened layer sequence, classifier last.
std::vector<const Layer*> stack(const Model& model, const Layer& classifier) {
  std::vector<const Layer*> out;
  for (const auto& l : model.feature_extractor) out.push_back(&l);
  for (const auto& l : model.mapping_layer) out.push_back(&l);
  out.push_back(&classifier);
  return out;
}

Matrix dense_forward(const Dense& d, const Matrix& x) {
  Matrix z = x * d.weights.transpose();
  if (d.has_bias) z.rowwise() += d.bias.transpose();
  return z;
}

}  // namespace

Eigen::Index Model::input_dim() const { return dense_layers().front()->in(); }

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Dense* d : dense_layers()) n += d->parameter_count();
  return n;
}

std::vector<const Dense*> Model::dense_layers() const {
  std::vector<const Dense*> out;
  for (const auto* part : {&feature_extractor, &mapping_layer})
    for (const auto& l : *part)
      if (const auto* d = std::get_if<Dense>(&l)) out.push_back(d);
  out.push_back(&classification_layer);
  return out;
}

std::vector<Dense*> Model::dense_layers() {
  std::vector<Dense*> out;
  for (auto* part : {&feature_extractor, &mapping_layer})
    for (auto& l : *part)
      if (auto* d = std::get_if<Dense>(&l)) out.push_back(d);
  out.push_back(&classification_layer);
  return out;
}

Model init_model(const ModelSpec& spec, Rng& rng) {
  if (spec.input_dim < 1) throw InvalidInput("model input dimension must be positive");
  if (spec.class_count < 2) throw InvalidInput("model needs at least two classes");
  Model m;
  m.class_count = spec.class_count;
  int width = spec.input_dim;
  for (int d : spec.feature_dims) {
    m.feature_extractor.emplace_back(make_dense(width, d, true, rng));
    m.feature_extractor.emplace_back(ReLU{});
    width = d;
  }
  for (int d : spec.mapping_dims) {
    m.mapping_layer.emplace_back(make_dense(width, d, true, rng));
    m.mapping_layer.emplace_back(ReLU{});
    width = d;
  }
  m.classification_layer = make_dense(width, spec.class_count, spec.classifier_bias, rng);
  return m;
}

ForwardResult forward(const Model& model, const Matrix& batch) {
  if (batch.cols() != model.input_dim())
    throw InvalidInput("forward: batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                       std::to_string(model.input_dim()));
  const Layer classifier = model.classification_layer;
  ForwardResult r;
  Matrix x = batch;
  for (const Layer* layer : stack(model, classifier)) {
    Matrix y = std::visit(Overloaded{[&](const Dense& d) { return dense_forward(d, x); },
                                     [&](const ReLU&) -> Matrix { return x.cwiseMax(0.0); }},
                          *layer);
    r.cache.layer_inputs.push_back(std::move(x));
    x = std::move(y);
  }
  r.logits = std::move(x);
  return r;
}

Matrix predict_logits(const Model& model, const Matrix& batch) {
  if (batch.cols() != model.input_dim()) throw InvalidInput("predict_logits: feature dimension mismatch");
  Matrix x = batch;
  auto apply = [&x](const Layer& layer) {
    std::visit(Overloaded{[&](const Dense& d) { x = dense_forward(d, x); },
                          [&](const ReLU&) { x = x.cwiseMax(0.0); }},
               layer);
  };
  for (const auto& l : model.feature_extractor) apply(l);
  for (const auto& l : model.mapping_layer) apply(l);
  return dense_forward(model.classification_layer, x);
}

double cross_entropy_loss(const Matrix& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw InvalidInput("cross_entropy_loss: label count does not match batch size");
  if (logits.rows() == 0) throw InvalidInput("cross_entropy_loss: empty batch");
  double total = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= logits.cols()) throw InvalidInput("cross_entropy_loss: label out of range");
    const double peak = logits.row(i).maxCoeff();
    const double lse = peak + std::log((logits.row(i).array() - peak).exp().sum());
    total += lse - logits(i, y);
  }
  return total / static_cast<double>(logits.rows());
}

bool Gradients::all_finite() const {
  for (const auto& d : dense) {
    if (!d.weights.allFinite()) return false;
    if (d.has_bias && !d.bias.allFinite()) return false;
  }
  return true;
}

Gradients zero_gradients(const Model& model) {
  Gradients g;
  for (const Dense* d : model.dense_layers()) g.dense.push_back(zeros_like(*d));
  return g;
}

Gradients backward(const Model& model, const ForwardCache& cache, const Matrix& logits,
                   std::span<const int> labels) {
  const Layer classifier = model.classification_layer;
  const auto layers = stack(model, classifier);
  if (cache.layer_inputs.size() != layers.size()) throw InvalidInput("backward: cache does not match model");
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows() || logits.cols() != model.class_count)
    throw InvalidInput("backward: logits/labels shape mismatch");

  const double batch = static_cast<double>(logits.rows());
  Matrix upstream = softmax_rows(logits);
  for (Eigen::Index i = 0; i < upstream.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= model.class_count) throw InvalidInput("backward: label out of range");
    upstream(i, y) -= 1.0;
  }
  upstream /= batch;

  Gradients g = zero_gradients(model);
  std::size_t dense_index = g.dense.size();
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Matrix& x = cache.layer_inputs[l];
    if (const auto* d = std::get_if<Dense>(layers[l])) {
      Dense& gd = g.dense[--dense_index];
      gd.weights.noalias() = upstream.transpose() * x;
      if (d->has_bias) gd.bias = upstream.colwise().sum().transpose();
      if (l > 0) upstream = upstream * d->weights;
    } else {
      upstream = upstream.cwiseProduct((x.array() > 0).cast<double>().matrix());
    }
  }
  return g;
}

Gradients backward(const Model& model, const ForwardCache& cache, const Matrix& logits,
                   std::span<const int> labels, const Matrix& extra_classifier_grad) {
  const Dense& cls = model.classification_layer;
  if (extra_classifier_grad.rows() != cls.weights.rows() || extra_classifier_grad.cols() != cls.weights.cols())
    throw InvalidInput("backward: extra classifier gradient has the wrong shape");
  Gradients g = backward(model, cache, logits, labels);
  g.classifier().weights += extra_classifier_grad;
  return g;
}

AdamState AdamState::for_model(const Model& model, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const Dense* d : model.dense_layers()) {
    s.first_moment.push_back(zeros_like(*d));
    s.second_moment.push_back(zeros_like(*d));
  }
  return s;
}

void adam_step(Model& model, AdamState& state, const Gradients& grads) {
  auto layers = model.dense_layers();
  if (grads.dense.size() != layers.size() || state.first_moment.size() != layers.size())
    throw InvalidInput("adam_step: gradient/state layout does not match model");
  if (!grads.all_finite()) throw TrainingDiverged("adam_step: non-finite gradient");

  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(b2, static_cast<double>(state.step));
  const double lr = state.learning_rate, eps = state.epsilon;

  auto update = [&](auto&& param, const auto& g, auto&& m, auto&& v) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i]->weights, grads.dense[i].weights, state.first_moment[i].weights,
           state.second_moment[i].weights);
    if (layers[i]->has_bias)
      update(layers[i]->bias, grads.dense[i].bias, state.first_moment[i].bias, state.second_moment[i].bias);
  }
}

Vector flatten_parameters(const Model& model) {
  Vector flat(static_cast<Eigen::Index>(model.parameter_count()));
  Eigen::Index at = 0;
  for (const Dense* d : model.dense_layers()) {
    flat.segment(at, d->weights.size()) = Eigen::Map<const Vector>(d->weights.data(), d->weights.size());
    at += d->weights.size();
    if (d->has_bias) {
      flat.segment(at, d->bias.size()) = d->bias;
      at += d->bias.size();
    }
  }
  return flat;
}

void load_parameters(Model& model, const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != model.parameter_count())
    throw InvalidInput("load_parameters: expected " + std::to_string(model.parameter_count()) + " values, got " +
                       std::to_string(flat.size()));
  Eigen::Index at = 0;
  for (Dense* d : model.dense_layers()) {
    Eigen::Map<Vector>(d->weights.data(), d->weights.size()) = flat.segment(at, d->weights.size());
    at += d->weights.size();
    if (d->has_bias) {
      d->bias = flat.segment(at, d->bias.size());
      at += d->bias.size();
    }
  }
}

namespace {

nlohmann::json layer_json(const Layer& l, const char* part) {
  return std::visit(Overloaded{[&](const Dense& d) {
                                 return nlohmann::json{{"part", part},     {"kind", "dense"},
                                                       {"in", d.in()},     {"out", d.out()},
                                                       {"bias", d.has_bias}};
                               },
                               [&](const ReLU&) { return nlohmann::json{{"part", part}, {"kind", "relu"}}; }},
                    l);
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& stem) {
  nlohmann::json manifest;
  manifest["format"] = "feddw-model";
  manifest["version"] = 1;
  manifest["class_count"] = model.class_count;
  manifest["parameter_count"] = model.parameter_count();
  manifest["dtype"] = "float64-le";
  auto& layers = manifest["layers"] = nlohmann::json::array();
  for (const auto& l : model.feature_extractor) layers.push_back(layer_json(l, "feature"));
  for (const auto& l : model.mapping_layer) layers.push_back(layer_json(l, "mapping"));
  layers.push_back(layer_json(model.classification_layer, "classification"));

  std::ofstream js(std::filesystem::path(stem).concat(".json"));
  js << manifest.dump(2) << '\n';

  const Vector flat = flatten_parameters(model);
  std::ofstream bin(std::filesystem::path(stem).concat(".bin"), std::ios::binary);
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(flat[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    bin.write(bytes, 8);
  }
  if (!js || !bin) throw Error("io", "save_model: write failed for " + stem.string());
}

Model load_model(const std::filesystem::path& stem) {
  const auto json_path = std::filesystem::path(stem).concat(".json");
  const auto bin_path = std::filesystem::path(stem).concat(".bin");
  std::ifstream js(json_path);
  if (!js) throw NotFound("model manifest not found: " + json_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("model manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "feddw-model") throw FormatError("model manifest: bad format tag");

  Model m;
  m.class_count = manifest.at("class_count").get<int>();
  const auto& layers = manifest.at("layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string part = l.at("part");
    Layer layer = ReLU{};
    if (l.at("kind") == "dense") {
      Dense d;
      d.has_bias = l.at("bias").get<bool>();
      d.weights = Matrix::Zero(l.at("out").get<int>(), l.at("in").get<int>());
      if (d.has_bias) d.bias = Vector::Zero(d.weights.rows());
      layer = std::move(d);
    }
    if (part == "feature") {
      m.feature_extractor.push_back(std::move(layer));
    } else if (part == "mapping") {
      m.mapping_layer.push_back(std::move(layer));
    } else if (part == "classification" && i + 1 == layers.size() && std::holds_alternative<Dense>(layer)) {
      m.classification_layer = std::get<Dense>(std::move(layer));
    } else {
      throw FormatError("model manifest: unexpected layer part '" + part + "'");
    }
  }

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw NotFound("model parameters not found: " + bin_path.string());
  Vector flat(static_cast<Eigen::Index>(m.parameter_count()));
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    char bytes[8];
    if (!bin.read(bytes, 8)) throw FormatError("model parameters: truncated file " + bin_path.string());
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    flat[i] = std::bit_cast<double>(bits);
  }
  if (bin.peek() != std::char_traits<char>::eof()) throw FormatError("model parameters: trailing bytes");
  load_parameters(m, flat);
  return m;
}

double accuracy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) return 0;
  long correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg;
    logits.row(i).maxCoeff(&arg);
    if (arg == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace feddw
