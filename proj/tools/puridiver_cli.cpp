// Command-line front end: `run` executes one experiment per seed, `sweep-alpha`
// repeats it over a list of static balancing coefficients, `gen-data` writes a
// synthetic dataset CSV. Exit codes: 0 success, 2 configuration error, 3
// runtime numeric error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "puridiver/puridiver.hpp"

namespace {

using namespace puridiver;

std::vector<double> parse_alpha_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("--alphas: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--alphas: empty list");
  return out;
}

void append_aggregate(const std::string& dir, const std::string& rows, bool fresh) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path path = fs::path(dir) / "metrics.csv";
  const bool write_header = fresh || !fs::exists(path);
  std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
  if (write_header) out << kMetricsHeader;
  out << rows;
}

int cmd_run(const std::string& config_path, std::int64_t seed_override,
            const std::string& out_override) {
  ExperimentConfig config = load_config_file(config_path);
  if (!out_override.empty()) config.output_dir = out_override;
  std::vector<std::uint64_t> seeds = config.seeds;
  if (seed_override >= 0) seeds = {static_cast<std::uint64_t>(seed_override)};

  bool first = true;
  for (std::uint64_t seed : seeds) {
    const RunArtifacts run = run_experiment(config, seed);
    const std::string dir =
        (std::filesystem::path(config.output_dir) / run.run_id).string();
    write_results(run, config, dir);
    append_aggregate(config.output_dir, metrics_csv_rows(run, config), first);
    first = false;
    const RunRecord& last = run.records.back();
    std::cout << run.run_id << ": accuracy=" << last.last_accuracy
              << " purity=" << last.memory_purity << " diversity=" << last.memory_diversity
              << "\n";
  }
  return 0;
}

int cmd_sweep_alpha(const std::string& config_path, const std::string& alpha_csv,
                    const std::string& out_override) {
  ExperimentConfig config = load_config_file(config_path);
  if (!out_override.empty()) config.output_dir = out_override;
  const std::vector<double> alphas = parse_alpha_list(alpha_csv);

  bool first = true;
  for (const auto& [cfg, run] : sweep_alpha(config, alphas)) {
    const std::string dir = (std::filesystem::path(cfg.output_dir) / run.run_id).string();
    write_results(run, cfg, dir);
    append_aggregate(cfg.output_dir, metrics_csv_rows(run, cfg), first);
    first = false;
    const RunRecord& last = run.records.back();
    std::cout << run.run_id << ": accuracy=" << last.last_accuracy
              << " purity=" << last.memory_purity << "\n";
  }
  return 0;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_path) {
  const ExperimentConfig config = load_config_file(spec_path);
  SyntheticSpec spec;
  spec.num_classes = config.num_classes;
  spec.dim = config.dim;
  spec.per_class = config.synthetic_per_class;
  spec.mean_radius = config.synthetic_mean_radius;
  spec.sigma = config.synthetic_sigma;
  const Dataset d = generate_synthetic_full(spec, config.seeds.front());
  write_dataset_csv(d, out_path);
  std::cout << "wrote " << d.examples.size() << " examples to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online continual learning on contaminated blurry streams"};
  app.require_subcommand(1);

  std::string config_path, out_override, alpha_csv, spec_path, out_path;
  std::int64_t seed_override = -1;

  auto* run = app.add_subcommand("run", "Run one experiment per configured seed");
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_option("--seed", seed_override, "Override the config seed list with one seed");
  run->add_option("--out", out_override, "Override the output directory");

  auto* sweep = app.add_subcommand("sweep-alpha", "Run once per static alpha per seed");
  sweep->add_option("--config", config_path, "Experiment config file")->required();
  sweep->add_option("--alphas", alpha_csv, "Comma-separated alpha values")->required();
  sweep->add_option("--out", out_override, "Override the output directory");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset CSV");
  gen->add_option("--spec", spec_path, "Generator spec file (config format)")->required();
  gen->add_option("--out", out_path, "Output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed_override, out_override);
    if (sweep->parsed()) return cmd_sweep_alpha(config_path, alpha_csv, out_override);
    if (gen->parsed()) return cmd_gen_data(spec_path, out_path);
  } catch (const puridiver::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const puridiver::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
