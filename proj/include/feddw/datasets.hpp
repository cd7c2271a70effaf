#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "feddw/numerics.hpp"

namespace feddw {

using Shard = std::vector<std::size_t>;

struct Dataset {
  Matrix features;          // n_samples x n_features
  std::vector<int> labels;  // one per row
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  /// Rows selected by `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// First min(n, size()) samples.
  Dataset head(std::size_t n) const;
};

struct Partition {
  std::vector<Shard> shards;
  double beta = 0;
  std::uint64_t seed = 0;
};

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled to [0, 1]; the class count is 10.
Dataset load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Writes IDX files; pixel values are rounded from [0, 1] to bytes.
void write_idx_images(const std::filesystem::path& path, const Matrix& pixels, int rows, int cols);
void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels);

/// k Gaussian classes of n samples each in d dimensions. Class means are fixed
/// (independent of rng): 2 * e_c when d >= k, otherwise evenly spaced on a
/// circle in the first two coordinates, with adjacent means 2 apart.
Dataset make_blobs(Rng& rng, int classes, int per_class, int dim, double spread);
Matrix blob_means(int classes, int dim);

/// Binary fixture format: "FDWBLOB1", u32 rows, u32 cols, u32 classes
/// (little-endian), rows*cols float64 features, rows u32 labels.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Per-class Dirichlet split: for every class a Dir(beta * 1_N) vector divides
/// the (shuffled) class indices among clients by cumulative share. Empty
/// shards receive one sample from the currently largest shard.
Partition dirichlet_partition(const Dataset& data, int clients, double beta, Rng& rng);

std::vector<long> class_counts(const Dataset& data, std::span<const std::size_t> shard);

/// Shannon entropy (nats) of a shard's label distribution.
double label_entropy(const Dataset& data, std::span<const std::size_t> shard);

}  // namespace feddw
