#pragma once

// Experiment runner. Per task: (a) stream phase, one SGD step per incoming
// mini-batch followed by per-example memory updates under the configured
// sampler; (b) memory phase, `memory_epochs` epochs of robust training on the
// memory. All randomness derives from the run seed through per-component
// sub-seeds, so a run is a pure function of (config, seed).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "puridiver/config.hpp"
#include "puridiver/dataset_io.hpp"
#include "puridiver/memory.hpp"
#include "puridiver/metrics.hpp"
#include "puridiver/nnkit.hpp"
#include "puridiver/rng.hpp"
#include "puridiver/robust.hpp"
#include "puridiver/stream.hpp"

namespace puridiver {

struct RunArtifacts {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<RunRecord> records;
  std::vector<nlohmann::json> memory_snapshots;  // one per task boundary
  std::vector<nlohmann::json> partition_audit;   // one per memory epoch
  std::string config_echo_text;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Compact rendering for identity strings (run ids, config-derived columns).
inline std::string format_compact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

inline std::string make_run_id(const ExperimentConfig& c, std::uint64_t seed) {
  std::ostringstream os;
  os << to_string(c.sampler) << '-' << to_string(c.robust_mode) << '-' << to_string(c.noise_type)
     << format_compact(c.noise_ratio) << "-a" << alpha_mode_string(c) << "-s" << seed;
  std::string id = os.str();
  for (char& ch : id) {
    if (ch == ':' || ch == '/' || ch == ' ') ch = '_';
  }
  return id;
}

inline double scheduled_lr(const ExperimentConfig& c, int epoch) {
  if (c.lr_schedule == LrSchedule::constant || c.memory_epochs <= 1) return c.lr;
  const double t = static_cast<double>(epoch) / static_cast<double>(c.memory_epochs);
  return 0.5 * c.lr * (1.0 + std::cos(M_PI * t));
}

inline SplitDataset prepare_dataset(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.dataset == "synthetic") {
    SyntheticSpec spec;
    spec.num_classes = c.num_classes;
    spec.dim = c.dim;
    spec.per_class = c.synthetic_per_class;
    spec.mean_radius = c.synthetic_mean_radius;
    spec.sigma = c.synthetic_sigma;
    return generate_synthetic(spec, derive_seed(seed, "data"));
  }
  Dataset full = load_dataset_csv(c.dataset);
  if (full.num_classes > c.num_classes) {
    throw ConfigError("dataset has more classes than config C");
  }
  full.num_classes = c.num_classes;
  if (full.dim != c.dim) throw ConfigError("dataset dimension does not match config D");
  return stratified_split(full, 0.8, derive_seed(seed, "testsplit"));
}

// Offline oracle training for the diversity metric: plain supervised SGD on
// the clean training set for a fixed epoch budget.
inline Model train_oracle(const Dataset& train, const ExperimentConfig& c, std::uint64_t seed) {
  auto rng = make_rng(seed, "oracle");
  Model oracle = make_model(c.dim, c.hidden_dim, c.num_classes, rng);
  std::vector<std::size_t> order(train.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<Vec> targets(c.num_classes);
  for (int cls = 0; cls < c.num_classes; ++cls) targets[cls] = one_hot(c.num_classes, cls);
  for (int epoch = 0; epoch < c.oracle_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(c.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(c.batch_size));
      std::vector<TrainExample> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = train.examples[order[k]];
        batch.push_back(TrainExample{ex.x, targets[ex.true_label], 1.0, ex.id});
      }
      oracle = sgd_step(std::move(oracle), batch, c.lr);
    }
  }
  return oracle;
}

struct OracleCache {
  std::mutex mu;
  std::map<std::string, Model> models;
};

inline OracleCache& oracle_cache() {
  static OracleCache cache;
  return cache;
}

inline std::string oracle_key(const ExperimentConfig& c, std::uint64_t seed) {
  std::ostringstream os;
  os << c.dataset << '|' << c.num_classes << '|' << c.dim << '|' << c.synthetic_per_class << '|'
     << format_double(c.synthetic_mean_radius) << '|' << format_double(c.synthetic_sigma) << '|'
     << c.hidden_dim << '|' << format_double(c.lr) << '|' << c.batch_size << '|'
     << c.oracle_epochs << '|' << seed;
  return os.str();
}

inline Model oracle_for(const Dataset& train, const ExperimentConfig& c, std::uint64_t seed) {
  auto& cache = oracle_cache();
  const std::string key = oracle_key(c, seed);
  {
    std::lock_guard<std::mutex> lock(cache.mu);
    auto it = cache.models.find(key);
    if (it != cache.models.end()) return it->second;
  }
  Model oracle = train_oracle(train, c, seed);
  std::lock_guard<std::mutex> lock(cache.mu);
  return cache.models.emplace(key, std::move(oracle)).first->second;
}

inline nlohmann::json snapshot_memory(const EpisodicMemory& memory, int task_id) {
  nlohmann::json arr = nlohmann::json::array();
  for (const MemoryEntry& e : memory.entries()) {
    arr.push_back({{"id", e.example.id},
                   {"noisy_label", e.example.noisy_label},
                   {"true_label", e.example.true_label}});
  }
  return nlohmann::json{{"task", task_id}, {"entries", arr}};
}

}  // namespace detail

inline RunArtifacts run_experiment(const ExperimentConfig& config, std::uint64_t seed) {
  validate_config(config);

  RunArtifacts out;
  out.run_id = detail::make_run_id(config, seed);
  out.seed = seed;
  out.config_echo_text = config_echo(config);

  SplitDataset data = detail::prepare_dataset(config, seed);

  Dataset noisy_train;
  if (config.noise_type == NoiseType::sym) {
    noisy_train =
        inject_symmetric_noise(data.train, config.noise_ratio, derive_seed(seed, "noise"));
  } else {
    noisy_train =
        inject_asymmetric_noise(data.train, config.noise_ratio,
                                circular_shift_map(config.num_classes),
                                derive_seed(seed, "noise"));
  }

  const std::vector<TaskStream> tasks = split_blurry_tasks(
      noisy_train, config.num_tasks, config.minor_share, derive_seed(seed, "tasks"));

  auto init_rng = make_rng(seed, "init");
  Model model = make_model(config.dim, config.hidden_dim, config.num_classes, init_rng);
  const Model oracle = detail::oracle_for(data.train, config, seed);

  EpisodicMemory memory(static_cast<std::size_t>(config.memory_size));
  auto sampler_rng = make_rng(seed, "sampler");
  std::size_t n_seen = 0;

  std::vector<Vec> hard_targets(config.num_classes);
  for (int c = 0; c < config.num_classes; ++c) hard_targets[c] = one_hot(config.num_classes, c);

  for (const TaskStream& task : tasks) {
    // --- stream phase ---
    double alpha_sum = 0.0;
    std::size_t alpha_count = 0;
    for (const auto batch : batches(task, config.batch_size)) {
      std::vector<TrainExample> items;
      items.reserve(batch.size());
      for (const Example& ex : batch) {
        items.push_back(TrainExample{ex.x, hard_targets[ex.noisy_label], 1.0, ex.id});
      }
      const double mean_loss = batch_mean_loss(model, items);
      model = sgd_step(std::move(model), items, config.lr);

      const double alpha = config.alpha_mode == AlphaMode::adaptive
                               ? adaptive_alpha(mean_loss)
                               : config.alpha_value;
      alpha_sum += alpha;
      ++alpha_count;

      for (const Example& ex : batch) {
        ++n_seen;
        switch (config.sampler) {
          case SamplerKind::puridiver:
            puridiver_update(memory, ex, model, alpha);
            break;
          case SamplerKind::reservoir:
            reservoir_update(memory, ex, n_seen, sampler_rng);
            break;
          case SamplerKind::gbs:
            greedy_balanced_update(memory, ex, sampler_rng);
            break;
        }
      }
    }

    // --- memory phase ---
    if (memory.size() > 0) {
      auto shuffle_rng = make_rng(seed, "memory-shuffle", static_cast<std::uint64_t>(task.task_id));
      auto aug_rng = make_rng(seed, "memory-aug", static_cast<std::uint64_t>(task.task_id));
      for (int epoch = 0; epoch < config.memory_epochs; ++epoch) {
        RobustTrainConfig rc;
        rc.mode = config.robust_mode;
        rc.eta = config.eta;
        rc.lr = detail::scheduled_lr(config, epoch);
        rc.batch_size = config.batch_size;
        rc.aug = config.aug;
        EpochAudit audit;
        model = memory_train_epoch(memory, std::move(model), rc, shuffle_rng, aug_rng, &audit);
        nlohmann::json row{{"task", task.task_id},
                           {"epoch", epoch},
                           {"n_clean", audit.n_clean},
                           {"n_relabel", audit.n_relabel},
                           {"n_unlabeled", audit.n_unlabeled}};
        row["purity_clean"] =
            audit.purity_clean ? nlohmann::json(*audit.purity_clean) : nlohmann::json();
        row["purity_relabel"] =
            audit.purity_relabel ? nlohmann::json(*audit.purity_relabel) : nlohmann::json();
        row["purity_unlabeled"] =
            audit.purity_unlabeled ? nlohmann::json(*audit.purity_unlabeled) : nlohmann::json();
        out.partition_audit.push_back(std::move(row));
      }
    }

    RunRecord record;
    record.task_id = task.task_id;
    record.last_accuracy = evaluate_accuracy(model, data.test.examples);
    record.memory_purity = memory.size() > 0 ? memory_purity(memory) : 0.0;
    record.memory_diversity = memory.size() > 0 ? memory_diversity(memory, oracle) : 0.0;
    record.alpha_mean = alpha_count > 0 ? alpha_sum / static_cast<double>(alpha_count) : 0.0;
    record.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
    out.records.push_back(record);
    out.memory_snapshots.push_back(detail::snapshot_memory(memory, task.task_id));
  }
  return out;
}

inline constexpr const char* kMetricsHeader =
    "run_id,task,sampler,robust_mode,noise_type,noise_ratio,alpha_mode,accuracy,purity,"
    "diversity,alpha_mean,seed\n";

inline std::string metrics_csv_rows(const RunArtifacts& run, const ExperimentConfig& c) {
  std::ostringstream os;
  for (const RunRecord& r : run.records) {
    os << run.run_id << ',' << r.task_id << ',' << to_string(c.sampler) << ','
       << to_string(c.robust_mode) << ',' << to_string(c.noise_type) << ','
       << detail::format_compact(c.noise_ratio) << ',' << alpha_mode_string(c) << ','
       << detail::format_double(r.last_accuracy) << ',' << detail::format_double(r.memory_purity)
       << ',' << detail::format_double(r.memory_diversity) << ','
       << detail::format_double(r.alpha_mean) << ',' << run.seed << '\n';
  }
  return os.str();
}

// Writes metrics.csv, per-task memory snapshots, the partition audit and the
// resolved config into `dir`.
inline void write_results(const RunArtifacts& run, const ExperimentConfig& c,
                          const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream metrics(fs::path(dir) / "metrics.csv");
    if (!metrics) throw ConfigError("write_results: cannot write to " + dir);
    metrics << kMetricsHeader << metrics_csv_rows(run, c);
  }
  for (std::size_t t = 0; t < run.memory_snapshots.size(); ++t) {
    std::ofstream snap(fs::path(dir) / ("memory_task" + std::to_string(t) + ".json"));
    snap << run.memory_snapshots[t].dump(2) << '\n';
  }
  {
    std::ofstream audit(fs::path(dir) / "partition_audit.jsonl");
    for (const auto& row : run.partition_audit) audit << row.dump() << '\n';
  }
  {
    std::ofstream echo(fs::path(dir) / "config.echo");
    echo << run.config_echo_text;
  }
}

// One run per (alpha, seed), with alpha pinned to the given static values.
inline std::vector<std::pair<ExperimentConfig, RunArtifacts>> sweep_alpha(
    const ExperimentConfig& config, const std::vector<double>& alphas) {
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("sweep_alpha: alpha must lie in [0, 1]");
  }
  std::vector<std::pair<ExperimentConfig, RunArtifacts>> out;
  for (double a : alphas) {
    ExperimentConfig c = config;
    c.alpha_mode = AlphaMode::fixed;
    c.alpha_value = a;
    for (std::uint64_t seed : config.seeds) {
      out.emplace_back(c, run_experiment(c, seed));
    }
  }
  return out;
}

}  // namespace puridiver
