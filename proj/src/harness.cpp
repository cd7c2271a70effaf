#include "feddw/harness.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace feddw {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Presets

std::span<const ExperimentPreset> presets() {
  static const std::vector<ExperimentPreset> table = {
      {"practical", {{"beta", "0.5"}, {"participation_rate", "1"}}},
      {"pathological", {{"beta", "0.1"}, {"participation_rate", "0.5"}}},
      {"iid", {{"beta", "1000"}, {"participation_rate", "1"}}},
      {"norm-study", {{"strategy.kind", "fedavg"}, {"model.classifier_bias", "false"}, {"clients", "1"}}},
      {"heatmap-study",
       {{"beta", "0.1"}, {"participation_rate", "0.5"}, {"strategy.kind", "feddw"}, {"strategy.mu", "10"}}},
      {"sweep-mu", {{"strategy.kind", "feddw"}}},
  };
  return table;
}

const ExperimentPreset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw ConfigError("preset: unknown preset '" + name + "'");
}

void apply_preset(RunConfig& config, const std::string& name) {
  for (const auto& [k, v] : find_preset(name).overrides) apply_setting(config, k, v);
}

// ---------------------------------------------------------------------------
// Scalar parsing and formatting

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void type_error(const std::string& key, const char* expected, const std::string& value) {
  throw ConfigError("key '" + key + "': expected " + expected + ", got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
  T out{};
  const auto* first = value.data();
  const auto* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) type_error(key, expected, value);
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  const double d = parse_number<double>(key, v, "real");
  if (!std::isfinite(d)) type_error(key, "finite real", v);
  return d;
}
int parse_int(const std::string& key, const std::string& v) { return parse_number<int>(key, v, "integer"); }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  type_error(key, "boolean (true|false)", v);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item), "comma-separated integer list"));
  return out;
}

std::string fmt_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt_list(const std::vector<int>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"strategy.kind", [](RunConfig& c, const std::string& v) { c.strategy.kind = parse_strategy_kind(v); },
       [](const RunConfig& c) { return to_string(c.strategy.kind); }},
      {"strategy.mu", [](RunConfig& c, const std::string& v) { c.strategy.reg.mu = parse_real("strategy.mu", v); },
       [](const RunConfig& c) { return fmt_real(c.strategy.reg.mu); }},
      {"strategy.prox_mu",
       [](RunConfig& c, const std::string& v) { c.strategy.prox_mu = parse_real("strategy.prox_mu", v); },
       [](const RunConfig& c) { return fmt_real(c.strategy.prox_mu); }},
      {"strategy.reg_mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "exact") c.strategy.reg.mode = RegularizerMode::exact;
         else if (v == "linearized") c.strategy.reg.mode = RegularizerMode::linearized;
         else type_error("strategy.reg_mode", "exact|linearized", v);
       },
       [](const RunConfig& c) {
         return std::string(c.strategy.reg.mode == RegularizerMode::exact ? "exact" : "linearized");
       }},
      {"strategy.linearization_refresh",
       [](RunConfig& c, const std::string& v) {
         c.strategy.reg.linearization_refresh = parse_int("strategy.linearization_refresh", v);
       },
       [](const RunConfig& c) { return std::to_string(c.strategy.reg.linearization_refresh); }},
      {"clients", [](RunConfig& c, const std::string& v) { c.clients = parse_int("clients", v); },
       [](const RunConfig& c) { return std::to_string(c.clients); }},
      {"rounds", [](RunConfig& c, const std::string& v) { c.rounds = parse_int("rounds", v); },
       [](const RunConfig& c) { return std::to_string(c.rounds); }},
      {"local_epochs", [](RunConfig& c, const std::string& v) { c.local_epochs = parse_int("local_epochs", v); },
       [](const RunConfig& c) { return std::to_string(c.local_epochs); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.batch_size = parse_int("batch_size", v); },
       [](const RunConfig& c) { return std::to_string(c.batch_size); }},
      {"participation_rate",
       [](RunConfig& c, const std::string& v) { c.participation_rate = parse_real("participation_rate", v); },
       [](const RunConfig& c) { return fmt_real(c.participation_rate); }},
      {"beta", [](RunConfig& c, const std::string& v) { c.beta = parse_real("beta", v); },
       [](const RunConfig& c) { return fmt_real(c.beta); }},
      {"learning_rate", [](RunConfig& c, const std::string& v) { c.learning_rate = parse_real("learning_rate", v); },
       [](const RunConfig& c) { return fmt_real(c.learning_rate); }},
      {"seed",
       [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v, "unsigned integer"); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"workers", [](RunConfig& c, const std::string& v) { c.workers = parse_int("workers", v); },
       [](const RunConfig& c) { return std::to_string(c.workers); }},
      {"dataset.kind",
       [](RunConfig& c, const std::string& v) {
         if (v != "blobs" && v != "mnist") type_error("dataset.kind", "blobs|mnist", v);
         c.dataset.kind = v;
       },
       [](const RunConfig& c) { return c.dataset.kind; }},
      {"dataset.classes",
       [](RunConfig& c, const std::string& v) { c.dataset.blob_classes = parse_int("dataset.classes", v); },
       [](const RunConfig& c) { return std::to_string(c.dataset.blob_classes); }},
      {"dataset.per_class",
       [](RunConfig& c, const std::string& v) { c.dataset.blob_per_class = parse_int("dataset.per_class", v); },
       [](const RunConfig& c) { return std::to_string(c.dataset.blob_per_class); }},
      {"dataset.test_per_class",
       [](RunConfig& c, const std::string& v) {
         c.dataset.blob_test_per_class = parse_int("dataset.test_per_class", v);
       },
       [](const RunConfig& c) { return std::to_string(c.dataset.blob_test_per_class); }},
      {"dataset.dim", [](RunConfig& c, const std::string& v) { c.dataset.blob_dim = parse_int("dataset.dim", v); },
       [](const RunConfig& c) { return std::to_string(c.dataset.blob_dim); }},
      {"dataset.spread",
       [](RunConfig& c, const std::string& v) { c.dataset.blob_spread = parse_real("dataset.spread", v); },
       [](const RunConfig& c) { return fmt_real(c.dataset.blob_spread); }},
      {"dataset.mnist_dir", [](RunConfig& c, const std::string& v) { c.dataset.mnist_dir = v; },
       [](const RunConfig& c) { return c.dataset.mnist_dir; }},
      {"dataset.train_images", [](RunConfig& c, const std::string& v) { c.dataset.mnist_train_images = v; },
       [](const RunConfig& c) { return c.dataset.mnist_train_images; }},
      {"dataset.train_labels", [](RunConfig& c, const std::string& v) { c.dataset.mnist_train_labels = v; },
       [](const RunConfig& c) { return c.dataset.mnist_train_labels; }},
      {"dataset.test_images", [](RunConfig& c, const std::string& v) { c.dataset.mnist_test_images = v; },
       [](const RunConfig& c) { return c.dataset.mnist_test_images; }},
      {"dataset.test_labels", [](RunConfig& c, const std::string& v) { c.dataset.mnist_test_labels = v; },
       [](const RunConfig& c) { return c.dataset.mnist_test_labels; }},
      {"dataset.train_limit",
       [](RunConfig& c, const std::string& v) {
         c.dataset.train_limit = parse_number<std::size_t>("dataset.train_limit", v, "unsigned integer");
       },
       [](const RunConfig& c) { return std::to_string(c.dataset.train_limit); }},
      {"dataset.test_limit",
       [](RunConfig& c, const std::string& v) {
         c.dataset.test_limit = parse_number<std::size_t>("dataset.test_limit", v, "unsigned integer");
       },
       [](const RunConfig& c) { return std::to_string(c.dataset.test_limit); }},
      {"model.feature_dims",
       [](RunConfig& c, const std::string& v) { c.feature_dims = parse_int_list("model.feature_dims", v); },
       [](const RunConfig& c) { return fmt_list(c.feature_dims); }},
      {"model.mapping_dims",
       [](RunConfig& c, const std::string& v) { c.mapping_dims = parse_int_list("model.mapping_dims", v); },
       [](const RunConfig& c) { return fmt_list(c.mapping_dims); }},
      {"model.classifier_bias",
       [](RunConfig& c, const std::string& v) {
         if (v == "auto") c.classifier_bias.reset();
         else c.classifier_bias = parse_bool("model.classifier_bias", v);
       },
       [](const RunConfig& c) {
         return std::string(!c.classifier_bias ? "auto" : (*c.classifier_bias ? "true" : "false"));
       }},
  };
  return table;
}

}  // namespace

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(config, trim(value));
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  for (const auto& [k, v] : entries)
    if (k == "preset") apply_preset(base, v);
  for (const auto& [k, v] : entries)
    if (k != "preset") apply_setting(base, k, v);
  base.validate();
  return base;
}

RunConfig parse_config_file(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw NotFound("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string emit_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

std::string config_hash(const RunConfig& config) {
  RunConfig c = config;
  c.workers = 1;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(emit_config(c))));
  return buf;
}

// ---------------------------------------------------------------------------
// Datasets

std::pair<Dataset, Dataset> load_datasets(const RunConfig& config) {
  const auto& d = config.dataset;
  if (d.kind == "blobs") {
    const Rng root(config.seed);
    Rng train_rng = root.split("blobs-train");
    Rng test_rng = root.split("blobs-test");
    return {make_blobs(train_rng, d.blob_classes, d.blob_per_class, d.blob_dim, d.blob_spread),
            make_blobs(test_rng, d.blob_classes, d.blob_test_per_class, d.blob_dim, d.blob_spread)};
  }
  auto resolve = [&](const std::string& explicit_path, const char* key, const char* file) -> fs::path {
    if (!explicit_path.empty()) return explicit_path;
    if (d.mnist_dir.empty())
      throw ConfigError(std::string("key '") + key + "': required when dataset.kind = mnist (or set dataset.mnist_dir)");
    return fs::path(d.mnist_dir) / file;
  };
  const fs::path train_images = resolve(d.mnist_train_images, "dataset.train_images", "train-images-idx3-ubyte");
  const fs::path train_labels = resolve(d.mnist_train_labels, "dataset.train_labels", "train-labels-idx1-ubyte");
  const fs::path test_images = resolve(d.mnist_test_images, "dataset.test_images", "t10k-images-idx3-ubyte");
  const fs::path test_labels = resolve(d.mnist_test_labels, "dataset.test_labels", "t10k-labels-idx1-ubyte");
  Dataset train = load_mnist(train_images, train_labels);
  Dataset test = load_mnist(test_images, test_labels);
  if (d.train_limit > 0) train = train.head(d.train_limit);
  if (d.test_limit > 0) test = test.head(d.test_limit);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Runs

namespace {

void prepare_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw Refusal("output directory " + dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw Error("io", "cannot write " + path.string());
}

nlohmann::json config_json(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  std::stringstream ss(emit_config(config));
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

nlohmann::json traffic_json(const Traffic& t) {
  return {{"upload_bytes", t.upload_bytes}, {"download_bytes", t.download_bytes}};
}

nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"values", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != rows * cols) throw FormatError("matrix JSON: size mismatch");
  return Eigen::Map<const Matrix>(values.data(), rows, cols);
}

void write_grid_csv(const fs::path& path, const Matrix& m) {
  std::ofstream out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << fmt_real(m(i, j));
    out << '\n';
  }
}

}  // namespace

RunArtifacts run_experiment(const RunConfig& config, const fs::path& out_root, bool force,
                            const RoundCallback& progress) {
  config.validate();
  const auto [train, test] = load_datasets(config);

  RunArtifacts art;
  art.dir = out_root / (config_hash(config) + "-s" + std::to_string(config.seed));
  prepare_dir(art.dir, force);
  write_text(art.dir / "config.txt", emit_config(config));

  std::ofstream metrics(art.dir / "metrics.csv");
  std::ofstream timing(art.dir / "timing.csv");
  write_csv_header(metrics);
  metrics.flush();
  timing << "round,millis\n";
  double max_reg = 0;
  art.result = run(config, train, test, [&](const RoundRecord& r) {
    write_csv_row(metrics, r);
    metrics.flush();
    timing << r.round << ',' << fmt_real(r.millis) << '\n';
    timing.flush();
    max_reg = std::max(max_reg, r.reg_loss);
    if (progress) progress(r);
  });

  const auto& res = art.result;
  const int classes = train.class_count;
  nlohmann::json summary;
  summary["schema_version"] = kSummarySchemaVersion;
  summary["config_hash"] = config_hash(config);
  summary["config"] = config_json(config);
  summary["rounds_completed"] = res.records.size();
  summary["class_count"] = classes;
  summary["parameter_count"] = res.final_model.parameter_count();
  summary["reg_loss_bound"] = reg_loss_bound(classes);
  summary["max_round_reg_loss"] = max_reg;
  if (!res.records.empty()) {
    const auto& last = res.records.back();
    summary["final"] = {{"accuracy", last.accuracy},       {"loss", last.test_loss},
                        {"cla_loss", last.cla_loss},       {"reg_loss", last.reg_loss},
                        {"sl_cr_distance", last.sl_cr_distance}};
  }
  summary["traffic"] = {{"per_client_round", traffic_json(res.per_client_round)},
                        {"total", traffic_json(res.traffic)}};
  double millis = 0;
  for (const auto& r : res.records) millis += r.millis;
  summary["wall_millis"] = millis;
  write_text(art.dir / "summary.json", summary.dump(2) + "\n");

  write_text(art.dir / "sl_matrix.json", to_json(res.global_sl).dump(2) + "\n");
  const Matrix& w = res.final_model.classification_layer.weights;
  nlohmann::json cr = {{"cr", matrix_json(cr_matrix(w))}, {"softmax_cr", matrix_json(softmax_cr(w))}};
  write_text(art.dir / "cr_matrix.json", cr.dump(2) + "\n");
  save_model(res.final_model, art.dir / "model");
  return art;
}

std::vector<RunArtifacts> sweep_mu(const RunConfig& config, std::span<const double> mus, const fs::path& out_root,
                                   bool force) {
  std::vector<RunArtifacts> out;
  for (double mu : mus) {
    RunConfig c = config;
    c.strategy.kind = StrategyKind::feddw;
    c.strategy.reg.mu = mu;
    out.push_back(run_experiment(c, out_root, force));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Norm study

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidInput("spearman: need two equal-length samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2 + 1;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return Eigen::Map<Vector>(r.data(), static_cast<Eigen::Index>(r.size())).eval();
  };
  const Vector ra = ranks(a), rb = ranks(b);
  const Vector ca = ra.array() - ra.mean(), cb = rb.array() - rb.mean();
  const double denom = ca.norm() * cb.norm();
  return denom == 0 ? 0.0 : ca.dot(cb) / denom;
}

NormReport norm_study(std::span<const double> proportions, const RunConfig& config) {
  const auto [train, test] = load_datasets(config);
  const int classes = train.class_count;
  if (static_cast<int>(proportions.size()) != classes)
    throw InvalidInput("norm_study: need one proportion per class (" + std::to_string(classes) + ")");
  double total = 0;
  for (double p : proportions) {
    if (!(p >= 0) || !std::isfinite(p)) throw InvalidInput("norm_study: proportions must be non-negative");
    total += p;
  }
  if (total == 0) throw InvalidInput("norm_study: all proportions are zero");
  if (std::abs(total - 1) > 1e-6) throw InvalidInput("norm_study: proportions must sum to 1");

  std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < train.size(); ++i) pools[static_cast<std::size_t>(train.labels[i])].push_back(i);

  Rng rng = Rng(config.seed).split("norm-study");
  NormReport report;
  report.proportions = Eigen::Map<const Vector>(proportions.data(), classes);
  report.class_counts.assign(static_cast<std::size_t>(classes), 0);
  std::vector<std::size_t> sample;
  const double n = static_cast<double>(train.size());
  for (int c = 0; c < classes; ++c) {
    const auto& pool = pools[static_cast<std::size_t>(c)];
    const long want = std::lround(proportions[static_cast<std::size_t>(c)] * n);
    if (want > 0 && pool.empty()) throw InvalidInput("norm_study: class " + std::to_string(c) + " has no samples");
    for (long i = 0; i < want; ++i) sample.push_back(pool[rng.uniform_index(pool.size())]);
    report.class_counts[static_cast<std::size_t>(c)] = want;
  }
  if (sample.empty()) throw InvalidInput("norm_study: resample is empty");

  RunConfig central = config;
  central.strategy = Strategy::fedavg();
  central.classifier_bias = false;
  Rng init_rng = Rng(config.seed).split("init");
  const Model start = init_model(central.model_spec(static_cast<int>(train.features.cols()), classes), init_rng);
  const ClientReport trained = client_train(start, SLMatrix::uniform(classes), train, sample, central.strategy,
                                            central, Rng(config.seed).split("norm-study-train"));
  if (trained.failed) throw TrainingDiverged("norm_study: " + trained.failure);
  Model model = start;
  load_parameters(model, trained.parameters);

  const Vector norms = model.classification_layer.weights.rowwise().norm();
  report.relative_norms = norms / norms.sum();
  report.spearman = spearman(proportions, std::span<const double>(report.relative_norms.data(), classes));
  return report;
}

nlohmann::json to_json(const NormReport& report) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"proportions", vec(report.proportions)},
          {"class_counts", report.class_counts},
          {"relative_norms", vec(report.relative_norms)},
          {"spearman", report.spearman}};
}

// ---------------------------------------------------------------------------
// Heatmaps

HeatmapExport heatmap_export(const fs::path& run_dir, const fs::path& out_dir) {
  const fs::path sl_path = run_dir / "sl_matrix.json";
  std::ifstream sl_in(sl_path);
  if (!sl_in) throw NotFound("run artifact missing: " + sl_path.string());
  HeatmapExport h;
  try {
    h.sl = sl_from_json(nlohmann::json::parse(sl_in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(sl_path.string() + ": " + e.what());
  }
  const Model model = load_model(run_dir / "model");
  h.cr_softmax = softmax_cr(model.classification_layer.weights);
  h.distance = sl_cr_distance(h.sl, model.classification_layer.weights);

  fs::create_directories(out_dir);
  nlohmann::json j = {{"schema_version", kSummarySchemaVersion},
                      {"sl", to_json(h.sl)},
                      {"softmax_cr", matrix_json(h.cr_softmax)},
                      {"frobenius_distance", h.distance}};
  write_text(out_dir / "heatmap.json", j.dump(2) + "\n");
  write_grid_csv(out_dir / "sl_grid.csv", h.sl.omega);
  write_grid_csv(out_dir / "cr_grid.csv", h.cr_softmax);
  return h;
}

HeatmapExport read_heatmap(const fs::path& heatmap_json) {
  std::ifstream in(heatmap_json);
  if (!in) throw NotFound("heatmap export not found: " + heatmap_json.string());
  try {
    const auto j = nlohmann::json::parse(in);
    HeatmapExport h;
    h.sl = sl_from_json(j.at("sl"));
    h.cr_softmax = matrix_from_json(j.at("softmax_cr"));
    h.distance = j.at("frobenius_distance").get<double>();
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(heatmap_json.string() + ": " + e.what());
  }
}

nlohmann::json error_json(const std::string& kind, const std::string& message) {
  return {{"error", {{"kind", kind}, {"message", message}}}};
}

}  // namespace feddw
