#include "feddw/datasets.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

namespace feddw {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.class_count = class_count;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw InvalidInput("subset: index out of range");
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(idx);
}

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t at, const std::string& field,
                   const std::filesystem::path& path) {
  if (buf.size() < at + 4) throw FormatError(path.string() + ": truncated header (" + field + ")");
  return (std::uint32_t{buf[at]} << 24) | (std::uint32_t{buf[at + 1]} << 16) | (std::uint32_t{buf[at + 2]} << 8) |
         std::uint32_t{buf[at + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

void put_le32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
  out.write(b, 4);
}

std::uint32_t get_le32(std::ifstream& in, const std::string& field) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("dataset fixture truncated at " + field);
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

}  // namespace

Dataset load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);

  if (be32(img, 0, "magic", images_path) != kImageMagic)
    throw FormatError(images_path.string() + ": bad magic (expected 0x00000803)");
  const std::size_t n = be32(img, 4, "image count", images_path);
  const std::size_t rows = be32(img, 8, "row count", images_path);
  const std::size_t cols = be32(img, 12, "column count", images_path);
  if (be32(lab, 0, "magic", labels_path) != kLabelMagic)
    throw FormatError(labels_path.string() + ": bad magic (expected 0x00000801)");
  const std::size_t n_labels = be32(lab, 4, "label count", labels_path);

  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels) throw FormatError(images_path.string() + ": truncated pixel data");
  if (lab.size() < 8 + n_labels) throw FormatError(labels_path.string() + ": truncated label data");
  if (n != n_labels)
    throw FormatError("image count " + std::to_string(n) + " does not match label count " + std::to_string(n_labels));

  Dataset d;
  d.class_count = 10;
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < pixels; ++p)
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = img[16 + i * pixels + p] / 255.0;
    const int y = lab[8 + i];
    if (y >= d.class_count) throw FormatError(labels_path.string() + ": label value " + std::to_string(y) + " >= 10");
    d.labels[i] = y;
  }
  return d;
}

void write_idx_images(const std::filesystem::path& path, const Matrix& pixels, int rows, int cols) {
  if (pixels.cols() != static_cast<Eigen::Index>(rows) * cols)
    throw InvalidInput("write_idx_images: feature count does not equal rows*cols");
  std::ofstream out(path, std::ios::binary);
  put_be32(out, kImageMagic);
  put_be32(out, static_cast<std::uint32_t>(pixels.rows()));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  for (Eigen::Index i = 0; i < pixels.rows(); ++i)
    for (Eigen::Index j = 0; j < pixels.cols(); ++j)
      out.put(static_cast<char>(std::lround(std::clamp(pixels(i, j), 0.0, 1.0) * 255)));
  if (!out) throw Error("io", "write_idx_images: write failed for " + path.string());
}

void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::ofstream out(path, std::ios::binary);
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int y : labels) out.put(static_cast<char>(y));
  if (!out) throw Error("io", "write_idx_labels: write failed for " + path.string());
}

Matrix blob_means(int classes, int dim) {
  Matrix means = Matrix::Zero(classes, dim);
  if (dim >= classes) {
    for (int c = 0; c < classes; ++c) means(c, c) = 2.0;
  } else {
    const double radius = 1.0 / std::sin(std::numbers::pi / classes);
    for (int c = 0; c < classes; ++c) {
      const double angle = 2 * std::numbers::pi * c / classes;
      means(c, 0) = radius * std::cos(angle);
      means(c, 1) = radius * std::sin(angle);
    }
  }
  return means;
}

Dataset make_blobs(Rng& rng, int classes, int per_class, int dim, double spread) {
  if (classes < 2 || per_class < 1 || dim < 2) throw InvalidInput("make_blobs: need k >= 2, n >= 1, d >= 2");
  const Matrix means = blob_means(classes, dim);
  Dataset d;
  d.class_count = classes;
  d.features.resize(static_cast<Eigen::Index>(classes) * per_class, dim);
  d.labels.reserve(static_cast<std::size_t>(classes) * per_class);
  Eigen::Index row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      for (int j = 0; j < dim; ++j) d.features(row, j) = means(c, j) + spread * rng.normal();
      d.labels.push_back(c);
    }
  }
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  out.write("FDWBLOB1", 8);
  put_le32(out, static_cast<std::uint32_t>(data.features.rows()));
  put_le32(out, static_cast<std::uint32_t>(data.features.cols()));
  put_le32(out, static_cast<std::uint32_t>(data.class_count));
  for (Eigen::Index i = 0; i < data.features.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(data.features.data()[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char b[8];
    std::memcpy(b, &bits, 8);
    out.write(b, 8);
  }
  for (int y : data.labels) put_le32(out, static_cast<std::uint32_t>(y));
  if (!out) throw Error("io", "save_dataset: write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::string(magic, 8) != "FDWBLOB1") throw FormatError(path.string() + ": bad magic");
  const auto rows = get_le32(in, "rows");
  const auto cols = get_le32(in, "cols");
  Dataset d;
  d.class_count = static_cast<int>(get_le32(in, "classes"));
  d.features.resize(rows, cols);
  for (Eigen::Index i = 0; i < d.features.size(); ++i) {
    char b[8];
    if (!in.read(b, 8)) throw FormatError(path.string() + ": truncated features");
    std::uint64_t bits;
    std::memcpy(&bits, b, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    d.features.data()[i] = std::bit_cast<double>(bits);
  }
  d.labels.resize(rows);
  for (auto& y : d.labels) {
    y = static_cast<int>(get_le32(in, "labels"));
    if (y >= d.class_count) throw FormatError(path.string() + ": label out of range");
  }
  return d;
}

Partition dirichlet_partition(const Dataset& data, int clients, double beta, Rng& rng) {
  if (clients < 2) throw InvalidInput("dirichlet_partition: need at least two clients");
  if (!(beta > 0)) throw InvalidInput("dirichlet_partition: beta must be positive");
  if (data.size() < static_cast<std::size_t>(clients))
    throw InvalidInput("dirichlet_partition: dataset has fewer samples than clients");

  Partition part;
  part.beta = beta;
  part.seed = rng.seed();
  part.shards.resize(clients);

  std::vector<Shard> by_class(data.class_count);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

  for (auto& members : by_class) {
    rng.shuffle(members.begin(), members.end());
    const Vector share = sample_dirichlet(rng, beta, clients);
    const double n = static_cast<double>(members.size());
    double cumulative = 0;
    std::size_t begin = 0;
    for (int c = 0; c < clients; ++c) {
      cumulative += share[c];
      const std::size_t end =
          c + 1 == clients ? members.size() : std::min(members.size(), static_cast<std::size_t>(std::lround(cumulative * n)));
      for (std::size_t i = begin; i < end; ++i) part.shards[c].push_back(members[i]);
      begin = std::max(begin, end);
    }
  }

  for (auto& shard : part.shards) {
    if (!shard.empty()) continue;
    auto largest = std::max_element(part.shards.begin(), part.shards.end(),
                                    [](const Shard& a, const Shard& b) { return a.size() < b.size(); });
    shard.push_back(largest->back());
    largest->pop_back();
  }
  for (auto& shard : part.shards) std::sort(shard.begin(), shard.end());
  return part;
}

std::vector<long> class_counts(const Dataset& data, std::span<const std::size_t> shard) {
  std::vector<long> counts(data.class_count, 0);
  for (std::size_t i : shard) counts[data.labels.at(i)] += 1;
  return counts;
}

double label_entropy(const Dataset& data, std::span<const std::size_t> shard) {
  if (shard.empty()) return 0;
  double h = 0;
  for (long c : class_counts(data, shard)) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(shard.size());
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace feddw
