#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "feddw/datasets.hpp"
#include "feddw/feddw_math.hpp"
#include "feddw/neuralnet.hpp"

namespace feddw {

enum class StrategyKind { fedavg, fedprox, feddw, local_only };

struct Strategy {
  StrategyKind kind = StrategyKind::fedavg;
  double prox_mu = 0.01;   // FedProx only
  RegularizerConfig reg;   // FedDW only

  static Strategy fedavg() { return {}; }
  static Strategy fedprox(double prox_mu) { return {StrategyKind::fedprox, prox_mu, {}}; }
  static Strategy feddw(double mu, RegularizerMode mode = RegularizerMode::exact, int refresh = 50) {
    return {StrategyKind::feddw, 0.01, {mu, mode, refresh}};
  }
  static Strategy local_only() { return {StrategyKind::local_only, 0.01, {}}; }
};

std::string to_string(StrategyKind kind);
StrategyKind parse_strategy_kind(const std::string& name);

struct DatasetSpec {
  std::string kind = "blobs";  // "blobs" or "mnist"
  int blob_classes = 10;
  int blob_per_class = 100;
  int blob_test_per_class = 50;
  int blob_dim = 20;
  double blob_spread = 0.5;
  std::string mnist_dir;  // supplies any of the four paths left empty
  std::string mnist_train_images;
  std::string mnist_train_labels;
  std::string mnist_test_images;
  std::string mnist_test_labels;
  std::size_t train_limit = 5000;  // 0 keeps everything
  std::size_t test_limit = 0;
};

struct RunConfig {
  Strategy strategy;
  int clients = 10;
  int rounds = 20;
  int local_epochs = 5;
  int batch_size = 128;
  double participation_rate = 1.0;
  double beta = 0.5;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  DatasetSpec dataset;
  std::vector<int> feature_dims{128};
  std::vector<int> mapping_dims{128, 128};
  std::optional<bool> classifier_bias;  // unset: bias-free only for FedDW
  int workers = 1;                      // execution detail, never affects results

  /// Throws ConfigError on an invariant violation.
  void validate() const;
  ModelSpec model_spec(int input_dim, int class_count) const;
};

struct ClientReport {
  int client_id = -1;
  bool failed = false;
  std::string failure;
  Vector parameters;
  SLMatrix sl;                 // post-training local SL matrix
  std::vector<long> class_counts;
  long sample_count = 0;
  double cla_loss = 0;         // mean batch loss over the last local epoch
  double reg_loss = 0;         // regularizer at the trained classifier
};

struct RoundRecord {
  int round = 0;
  std::vector<int> participants;
  double accuracy = 0;
  double test_loss = 0;
  double train_loss = 0;       // mean of cla + mu * reg over clients
  double cla_loss = 0;
  double reg_loss = 0;
  double sl_cr_distance = 0;
  int failed_clients = 0;
  double millis = 0;
};

/// Scalars exchanged per client per round, counted as 8-byte doubles.
struct Traffic {
  std::uint64_t upload_bytes = 0;
  std::uint64_t download_bytes = 0;
};

/// Upload: parameters plus |D^n|; FedDW adds the SL matrix and per-class
/// counts, |C|^2 + |C| scalars. Download mirrors it with the global SL matrix
/// and global per-class totals. LocalOnly exchanges nothing.
Traffic client_traffic(const Strategy& strategy, std::size_t parameter_count, int class_count);

struct RunResult {
  std::vector<RoundRecord> records;
  Model final_model;
  SLMatrix global_sl;
  Traffic traffic;            // totals over all rounds and clients
  Traffic per_client_round;   // one participant, one round
  std::vector<Model> client_models;  // LocalOnly only
};

/// Per-client generator for a round; depends only on (seed, round, client).
Rng client_rng(std::uint64_t seed, int round, int client);

ClientReport client_train(const Model& global_model, const SLMatrix& global_sl, const Dataset& data,
                          std::span<const std::size_t> shard, const Strategy& strategy, const RunConfig& config,
                          Rng rng);

/// Weighted mean of client parameters, weights |D^n| / sum |D^n| over the
/// reports that did not fail.
Vector aggregate_models(std::span<const ClientReport> reports);

/// Sorted ids, size max(1, round(rate * N)), uniform without replacement.
std::vector<int> sample_participants(int clients, double participation_rate, Rng& round_rng);

using RoundCallback = std::function<void(const RoundRecord&)>;

/// Runs the whole protocol. Client training inside a round runs on
/// config.workers threads; results do not depend on the worker count.
RunResult run(const RunConfig& config, const Dataset& train, const Dataset& test,
              const RoundCallback& on_round = {});

// Metrics CSV: round,accuracy,loss,cla_loss,reg_loss,sl_cr_distance,participants
void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const RoundRecord& r);

}  // namespace feddw
