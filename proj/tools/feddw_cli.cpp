// feddw: command-line front end for the federated simulator.
//
//   feddw run        --preset pathological --strategy feddw --mu 0.1 --out runs
//   feddw sweep      --preset sweep-mu --out runs/sweep
//   feddw norm-study --proportions 0.1,0.1,... --out runs/norm
//   feddw heatmap    --run runs/<hash>-s1

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "feddw/harness.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string preset;
  std::vector<std::uint64_t> seeds;
  std::string out = "runs";
  bool force = false;
  std::string strategy;
  std::optional<double> mu;
  std::optional<double> beta;
  std::optional<int> clients;
  std::optional<int> rounds;
  std::optional<int> workers;
  std::vector<std::string> settings;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Config file (key = value lines)");
  cmd->add_option("--preset", o.preset, "practical|pathological|iid|norm-study|heatmap-study|sweep-mu");
  cmd->add_option("--seed", o.seeds, "Seed; repeat for several runs");
  cmd->add_option("--out", o.out, "Output root directory");
  cmd->add_flag("--force", o.force, "Overwrite a non-empty run directory");
  cmd->add_option("--strategy", o.strategy, "fedavg|fedprox|feddw|local");
  cmd->add_option("--mu", o.mu, "FedDW regularizer weight");
  cmd->add_option("--beta", o.beta, "Dirichlet concentration");
  cmd->add_option("--clients", o.clients, "Number of clients");
  cmd->add_option("--rounds", o.rounds, "Communication rounds");
  cmd->add_option("--workers", o.workers, "Client-training threads per round");
  cmd->add_option("--set", o.settings, "Extra key=value override; repeatable");
}

feddw::RunConfig build_config(const CommonOptions& o) {
  feddw::RunConfig c;
  if (!o.preset.empty()) feddw::apply_preset(c, o.preset);
  if (!o.config_path.empty()) c = feddw::parse_config_file(o.config_path, c);
  if (!o.strategy.empty()) feddw::apply_setting(c, "strategy.kind", o.strategy);
  if (o.mu) c.strategy.reg.mu = *o.mu;
  if (o.beta) c.beta = *o.beta;
  if (o.clients) c.clients = *o.clients;
  if (o.rounds) c.rounds = *o.rounds;
  if (o.workers) c.workers = *o.workers;
  for (const auto& kv : o.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw feddw::ConfigError("--set expects key=value, got '" + kv + "'");
    feddw::apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.validate();
  return c;
}

std::vector<feddw::RunConfig> per_seed(const CommonOptions& o) {
  const feddw::RunConfig base = build_config(o);
  if (o.seeds.empty()) return {base};
  std::vector<feddw::RunConfig> out;
  for (auto s : o.seeds) {
    auto c = base;
    c.seed = s;
    out.push_back(c);
  }
  return out;
}

void report_run(const feddw::RunArtifacts& a) {
  nlohmann::json j = {{"dir", a.dir.string()}, {"rounds", a.result.records.size()}};
  if (!a.result.records.empty()) {
    j["accuracy"] = a.result.records.back().accuracy;
    j["sl_cr_distance"] = a.result.records.back().sl_cr_distance;
  }
  std::cout << j.dump() << std::endl;
}

std::vector<double> parse_reals(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw feddw::ConfigError("expected a comma-separated list of reals, got '" + csv + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with soft-label / class-relation consistency"};
  app.require_subcommand(1);

  CommonOptions run_opts, sweep_opts, norm_opts;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment per seed");
  add_common(run_cmd, run_opts);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run FedDW over a grid of mu values");
  add_common(sweep_cmd, sweep_opts);
  std::string mus_csv;
  sweep_cmd->add_option("--mus", mus_csv, "Comma-separated mu grid (default 0.01,0.1,1,10,100)");

  auto* norm_cmd = app.add_subcommand("norm-study", "Classifier row norms versus class proportions");
  add_common(norm_cmd, norm_opts);
  std::string proportions_csv;
  norm_cmd->add_option("--proportions", proportions_csv, "Per-class fractions, comma-separated")->required();

  auto* heat_cmd = app.add_subcommand("heatmap", "Export SL and softmax(CR) grids from a finished run");
  std::string run_dir, heat_out;
  heat_cmd->add_option("--run", run_dir, "Run directory")->required();
  heat_cmd->add_option("--out", heat_out, "Output directory (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << feddw::error_json("usage", e.what()).dump() << std::endl;
    return 2;
  }

  try {
    if (*run_cmd) {
      for (const auto& c : per_seed(run_opts)) report_run(feddw::run_experiment(c, run_opts.out, run_opts.force));
    } else if (*sweep_cmd) {
      std::vector<double> mus(std::begin(feddw::kDefaultMuGrid), std::end(feddw::kDefaultMuGrid));
      if (!mus_csv.empty()) mus = parse_reals(mus_csv);
      for (const auto& c : per_seed(sweep_opts))
        for (const auto& a : feddw::sweep_mu(c, mus, sweep_opts.out, sweep_opts.force)) report_run(a);
    } else if (*norm_cmd) {
      const auto proportions = parse_reals(proportions_csv);
      std::filesystem::create_directories(norm_opts.out);
      for (const auto& c : per_seed(norm_opts)) {
        const auto report = feddw::norm_study(proportions, c);
        auto j = feddw::to_json(report);
        j["seed"] = c.seed;
        const auto path = std::filesystem::path(norm_opts.out) / ("norm-study-s" + std::to_string(c.seed) + ".json");
        std::ofstream(path) << j.dump(2) << '\n';
        std::cout << j.dump() << std::endl;
      }
    } else if (*heat_cmd) {
      const auto h = feddw::heatmap_export(run_dir, heat_out.empty() ? run_dir : heat_out);
      std::cout << nlohmann::json{{"frobenius_distance", h.distance}}.dump() << std::endl;
    }
  } catch (const feddw::Error& e) {
    std::cerr << feddw::error_json(e.kind(), e.what()).dump() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << feddw::error_json("internal", e.what()).dump() << std::endl;
    return 1;
  }
  return 0;
}
