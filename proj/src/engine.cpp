#include "feddw/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <iostream>
#include <ostream>
#include <thread>

namespace feddw {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::fedavg: return "fedavg";
    case StrategyKind::fedprox: return "fedprox";
    case StrategyKind::feddw: return "feddw";
    case StrategyKind::local_only: return "local";
  }
  return "?";
}

StrategyKind parse_strategy_kind(const std::string& name) {
  if (name == "fedavg") return StrategyKind::fedavg;
  if (name == "fedprox") return StrategyKind::fedprox;
  if (name == "feddw") return StrategyKind::feddw;
  if (name == "local" || name == "local-only") return StrategyKind::local_only;
  throw ConfigError("strategy.kind: unknown strategy '" + name + "' (expected fedavg|fedprox|feddw|local)");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (clients < 1) fail("clients: must be >= 1");
  if (rounds < 0) fail("rounds: must be >= 0");
  if (local_epochs < 1) fail("local_epochs: must be >= 1");
  if (batch_size < 1) fail("batch_size: must be >= 1");
  if (!(participation_rate > 0 && participation_rate <= 1)) fail("participation_rate: must be in (0, 1]");
  if (!(beta > 0)) fail("beta: must be > 0");
  if (!(learning_rate > 0)) fail("learning_rate: must be > 0");
  if (!(strategy.prox_mu >= 0)) fail("strategy.prox_mu: must be >= 0");
  if (!(strategy.reg.mu >= 0)) fail("strategy.mu: must be >= 0");
  if (strategy.reg.linearization_refresh < 1) fail("strategy.linearization_refresh: must be >= 1");
  if (workers < 1) fail("workers: must be >= 1");
  if (strategy.kind == StrategyKind::feddw && classifier_bias.value_or(false))
    fail("model.classifier_bias: FedDW requires a bias-free classification layer");
  for (int d : feature_dims)
    if (d < 1) fail("model.feature_dims: dimensions must be positive");
  for (int d : mapping_dims)
    if (d < 1) fail("model.mapping_dims: dimensions must be positive");
}

ModelSpec RunConfig::model_spec(int input_dim, int class_count) const {
  ModelSpec spec;
  spec.input_dim = input_dim;
  spec.class_count = class_count;
  spec.feature_dims = feature_dims;
  spec.mapping_dims = mapping_dims;
  spec.classifier_bias = classifier_bias.value_or(strategy.kind != StrategyKind::feddw);
  return spec;
}

Traffic client_traffic(const Strategy& strategy, std::size_t parameter_count, int class_count) {
  if (strategy.kind == StrategyKind::local_only) return {};
  std::uint64_t up = parameter_count + 1;
  std::uint64_t down = parameter_count;
  if (strategy.kind == StrategyKind::feddw) {
    const std::uint64_t c = static_cast<std::uint64_t>(class_count);
    up += c * c + c;
    down += c * c + c;
  }
  return {8 * up, 8 * down};
}

Rng client_rng(std::uint64_t seed, int round, int client) {
  return Rng(seed).split("client-train").split(static_cast<std::uint64_t>(round)).split(static_cast<std::uint64_t>(client));
}

namespace {

ClientReport failed_report(int id, std::string why) {
  ClientReport r;
  r.client_id = id;
  r.failed = true;
  r.failure = std::move(why);
  return r;
}

}  // namespace

ClientReport client_train(const Model& global_model, const SLMatrix& global_sl, const Dataset& data,
                          std::span<const std::size_t> shard, const Strategy& strategy, const RunConfig& config,
                          Rng rng) {
  if (shard.empty()) throw InvalidInput("client_train: empty shard");
  const bool feddw = strategy.kind == StrategyKind::feddw;
  if (feddw && global_model.classification_layer.has_bias)
    throw InvalidInput("client_train: FedDW needs a bias-free classification layer");
  const bool use_reg = feddw && strategy.reg.mu > 0;
  const bool use_prox = strategy.kind == StrategyKind::fedprox && strategy.prox_mu > 0;
  const bool linearized = strategy.reg.mode == RegularizerMode::linearized;

  Model model = global_model;
  AdamState adam = AdamState::for_model(model, config.learning_rate);
  std::vector<std::size_t> order(shard.begin(), shard.end());
  const auto global_dense = global_model.dense_layers();
  Matrix reference;

  ClientReport report;
  report.client_id = -1;
  report.sample_count = static_cast<long>(shard.size());
  report.class_counts = class_counts(data, shard);

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const Eigen::Index dim = data.features.cols();
  Matrix x;
  std::vector<int> y;
  try {
    for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
      rng.shuffle(order.begin(), order.end());
      double epoch_loss = 0;
      int batches = 0;
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t n = std::min(batch, order.size() - start);
        x.resize(static_cast<Eigen::Index>(n), dim);
        y.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          x.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(order[start + i]));
          y[i] = data.labels[order[start + i]];
        }
        auto fwd = forward(model, x);
        const double loss = cross_entropy_loss(fwd.logits, y);
        if (!std::isfinite(loss)) throw TrainingDiverged("non-finite classification loss");
        epoch_loss += loss;
        ++batches;

        Gradients grads = backward(model, fwd.cache, fwd.logits, y);
        if (use_reg) {
          const Matrix& w = model.classification_layer.weights;
          if (linearized) {
            if (adam.step % strategy.reg.linearization_refresh == 0) reference = softmax_cr(w);
            grads.classifier().weights += strategy.reg.mu * reg_grad_linearized(global_sl, w, reference);
          } else {
            grads.classifier().weights += strategy.reg.mu * reg_grad(global_sl, w);
          }
        }
        if (use_prox) {
          const auto local_dense = model.dense_layers();
          for (std::size_t l = 0; l < local_dense.size(); ++l) {
            grads.dense[l].weights += strategy.prox_mu * (local_dense[l]->weights - global_dense[l]->weights);
            if (local_dense[l]->has_bias)
              grads.dense[l].bias += strategy.prox_mu * (local_dense[l]->bias - global_dense[l]->bias);
          }
        }
        adam_step(model, adam, grads);
      }
      report.cla_loss = epoch_loss / batches;
    }
  } catch (const TrainingDiverged& e) {
    return failed_report(-1, e.what());
  }

  report.reg_loss = reg_loss(global_sl, model.classification_layer.weights);
  report.sl = local_sl_matrix(model, data, shard);
  report.parameters = flatten_parameters(model);
  return report;
}

Vector aggregate_models(std::span<const ClientReport> reports) {
  double total = 0;
  Eigen::Index size = -1;
  for (const auto& r : reports) {
    if (r.failed) continue;
    if (size >= 0 && r.parameters.size() != size) throw InvalidInput("aggregate_models: parameter shapes differ");
    size = r.parameters.size();
    total += static_cast<double>(r.sample_count);
  }
  if (size < 0) throw RoundFailure("aggregate_models: no successful client reports");
  if (!(total > 0)) throw RoundFailure("aggregate_models: successful reports carry no samples");
  Vector out = Vector::Zero(size);
  for (const auto& r : reports)
    if (!r.failed) out += (static_cast<double>(r.sample_count) / total) * r.parameters;
  return out;
}

std::vector<int> sample_participants(int clients, double participation_rate, Rng& round_rng) {
  if (!(participation_rate > 0 && participation_rate <= 1))
    throw InvalidInput("sample_participants: rate must be in (0, 1]");
  const int k = std::clamp(static_cast<int>(std::lround(participation_rate * clients)), 1, clients);
  std::vector<int> ids(static_cast<std::size_t>(clients));
  for (int i = 0; i < clients; ++i) ids[static_cast<std::size_t>(i)] = i;
  // Partial Fisher-Yates over the first k slots.
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + round_rng.uniform_index(static_cast<std::uint64_t>(clients - i));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(k));
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

template <typename Job>
void run_parallel(std::size_t count, int workers, Job&& job) {
  std::vector<std::exception_ptr> errors(count);
  auto guarded = [&](std::size_t i) {
    try {
      job(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) guarded(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct Evaluation {
  double accuracy;
  double loss;
};

Evaluation evaluate(const Model& model, const Dataset& test) {
  const Matrix logits = predict_logits(model, test.features);
  return {accuracy(logits, test.labels), cross_entropy_loss(logits, test.labels)};
}

}  // namespace

RunResult run(const RunConfig& config, const Dataset& train, const Dataset& test, const RoundCallback& on_round) {
  config.validate();
  if (train.class_count != test.class_count || train.features.cols() != test.features.cols())
    throw InvalidInput("run: train and test sets disagree on classes or features");

  const Rng root(config.seed);
  const int classes = train.class_count;
  Rng init_rng = root.split("init");
  const ModelSpec spec = config.model_spec(static_cast<int>(train.features.cols()), classes);

  RunResult result;
  result.final_model = init_model(spec, init_rng);
  result.global_sl = SLMatrix::uniform(classes);
  result.per_client_round = client_traffic(config.strategy, result.final_model.parameter_count(), classes);

  Partition partition;
  if (config.clients == 1) {
    partition.shards.resize(1);
    for (std::size_t i = 0; i < train.size(); ++i) partition.shards[0].push_back(i);
  } else {
    Rng part_rng = root.split("partition");
    partition = dirichlet_partition(train, config.clients, config.beta, part_rng);
  }

  const bool local_only = config.strategy.kind == StrategyKind::local_only;
  if (local_only) result.client_models.assign(static_cast<std::size_t>(config.clients), result.final_model);
  const double mu = config.strategy.kind == StrategyKind::feddw ? config.strategy.reg.mu : 0.0;

  for (int t = 1; t <= config.rounds; ++t) {
    const auto started = std::chrono::steady_clock::now();
    Rng round_rng = root.split("participants").split(static_cast<std::uint64_t>(t));
    const std::vector<int> participants = sample_participants(config.clients, config.participation_rate, round_rng);

    std::vector<ClientReport> reports(participants.size());
    run_parallel(participants.size(), config.workers, [&](std::size_t k) {
      const int id = participants[k];
      const Model& start = local_only ? result.client_models[static_cast<std::size_t>(id)] : result.final_model;
      reports[k] = client_train(start, result.global_sl, train, partition.shards[static_cast<std::size_t>(id)],
                                config.strategy, config, client_rng(config.seed, t, id));
      reports[k].client_id = id;
    });

    RoundRecord rec;
    rec.round = t;
    rec.participants = participants;
    std::vector<SlUpload> uploads;
    int ok = 0;
    for (const auto& r : reports) {
      if (r.failed) {
        ++rec.failed_clients;
        std::cerr << "warning: round " << t << " client " << r.client_id << " dropped: " << r.failure << '\n';
        continue;
      }
      ++ok;
      rec.cla_loss += r.cla_loss;
      rec.reg_loss += r.reg_loss;
      uploads.push_back({r.sl, r.class_counts});
    }
    if (ok == 0) throw RoundFailure("round " + std::to_string(t) + ": every participating client failed");
    rec.cla_loss /= ok;
    rec.reg_loss /= ok;
    rec.train_loss = rec.cla_loss + mu * rec.reg_loss;

    result.global_sl = aggregate_sl(uploads, result.global_sl);
    if (local_only) {
      for (const auto& r : reports)
        if (!r.failed) load_parameters(result.client_models[static_cast<std::size_t>(r.client_id)], r.parameters);
      for (const auto& m : result.client_models) {
        const auto ev = evaluate(m, test);
        rec.accuracy += ev.accuracy;
        rec.test_loss += ev.loss;
        rec.sl_cr_distance += sl_cr_distance(result.global_sl, m.classification_layer.weights);
      }
      const double n = static_cast<double>(result.client_models.size());
      rec.accuracy /= n;
      rec.test_loss /= n;
      rec.sl_cr_distance /= n;
    } else {
      load_parameters(result.final_model, aggregate_models(reports));
      const auto ev = evaluate(result.final_model, test);
      rec.accuracy = ev.accuracy;
      rec.test_loss = ev.loss;
      rec.sl_cr_distance = sl_cr_distance(result.global_sl, result.final_model.classification_layer.weights);
    }

    result.traffic.upload_bytes += result.per_client_round.upload_bytes * participants.size();
    result.traffic.download_bytes += result.per_client_round.download_bytes * participants.size();
    rec.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    result.records.push_back(rec);
    if (on_round) on_round(rec);
  }
  return result;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_csv_header(std::ostream& out) {
  out << "round,accuracy,loss,cla_loss,reg_loss,sl_cr_distance,participants\n";
}

void write_csv_row(std::ostream& out, const RoundRecord& r) {
  out << r.round << ',' << fmt(r.accuracy) << ',' << fmt(r.test_loss) << ',' << fmt(r.cla_loss) << ','
      << fmt(r.reg_loss) << ',' << fmt(r.sl_cr_distance) << ',';
  for (std::size_t i = 0; i < r.participants.size(); ++i) out << (i ? ";" : "") << r.participants[i];
  out << '\n';
}

}  // namespace feddw
