#pragma once

// Experiment configuration: a flat key = value text format. Lines starting
// with '#' and blank lines are ignored. Keys follow the run parameters
// one-to-one; `config_echo` serializes the resolved configuration back out.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "puridiver/errors.hpp"
#include "puridiver/robust.hpp"

namespace puridiver {

enum class SamplerKind { puridiver, reservoir, gbs };
enum class NoiseType { sym, asym };
enum class AlphaMode { adaptive, fixed };
enum class LrSchedule { constant, cosine };

struct ExperimentConfig {
  std::string dataset = "synthetic";  // "synthetic" or a CSV path
  int num_classes = 10;               // C
  int dim = 32;                       // D
  int num_tasks = 5;                  // T
  double minor_share = 0.1;           // L
  NoiseType noise_type = NoiseType::sym;
  double noise_ratio = 0.0;
  int memory_size = 200;              // K
  int batch_size = 16;
  SamplerKind sampler = SamplerKind::puridiver;
  RobustMode robust_mode = RobustMode::full;
  AlphaMode alpha_mode = AlphaMode::adaptive;
  double alpha_value = 0.5;           // used when alpha_mode == fixed
  double eta = 1.0;
  double lr = 0.05;
  LrSchedule lr_schedule = LrSchedule::cosine;
  int memory_epochs = 20;
  int hidden_dim = 64;                // H
  int oracle_epochs = 20;             // offline oracle training budget
  std::vector<std::uint64_t> seeds = {1};
  std::string output_dir = "out";

  // synthetic generator
  int synthetic_per_class = 500;
  double synthetic_mean_radius = 6.0;
  double synthetic_sigma = 1.5;

  AugmentConfig aug;
};

inline std::string to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::puridiver: return "puridiver";
    case SamplerKind::reservoir: return "reservoir";
    case SamplerKind::gbs: return "gbs";
  }
  return "?";
}

inline std::string to_string(NoiseType t) {
  return t == NoiseType::sym ? "sym" : "asym";
}

inline std::string to_string(RobustMode m) {
  switch (m) {
    case RobustMode::none: return "none";
    case RobustMode::relabel_only: return "relabel_only";
    case RobustMode::consistency_only: return "consistency_only";
    case RobustMode::full: return "full";
  }
  return "?";
}

inline std::string to_string(LrSchedule s) {
  return s == LrSchedule::constant ? "constant" : "cosine";
}

inline std::string alpha_mode_string(const ExperimentConfig& c) {
  if (c.alpha_mode == AlphaMode::adaptive) return "adaptive";
  std::ostringstream os;
  os << "fixed:" << c.alpha_value;
  return os.str();
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value);

template <>
inline int parse_number<int>(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
  }
}

template <>
inline double parse_number<double>(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

template <>
inline std::uint64_t parse_number<std::uint64_t>(const std::string& key,
                                                 const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + value +
                      "'");
  }
}

}  // namespace detail

inline void validate_config(const ExperimentConfig& c) {
  if (c.memory_size < 1) throw ConfigError("config: K must be >= 1");
  if (!(c.noise_ratio >= 0.0 && c.noise_ratio < 1.0)) {
    throw ConfigError("config: noise_ratio must lie in [0, 1)");
  }
  if (c.num_tasks < 1 || c.num_tasks > c.num_classes) {
    throw ConfigError("config: need 1 <= T <= C");
  }
  if (!(c.minor_share >= 0.0 && c.minor_share < 1.0)) {
    throw ConfigError("config: L must lie in [0, 1)");
  }
  if (c.alpha_mode == AlphaMode::fixed && !(c.alpha_value >= 0.0 && c.alpha_value <= 1.0)) {
    throw ConfigError("config: fixed alpha must lie in [0, 1]");
  }
  if (c.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (c.memory_epochs < 0) throw ConfigError("config: memory_epochs must be >= 0");
  if (c.hidden_dim < 1) throw ConfigError("config: H must be >= 1");
  if (c.dim < 1) throw ConfigError("config: D must be >= 1");
  if (c.num_classes < 2) throw ConfigError("config: C must be >= 2");
  if (c.lr <= 0.0) throw ConfigError("config: lr must be > 0");
  if (c.seeds.empty()) throw ConfigError("config: seeds must not be empty");
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
    }
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));

    if (key == "dataset") {
      c.dataset = value;
    } else if (key == "C") {
      c.num_classes = detail::parse_number<int>(key, value);
    } else if (key == "D") {
      c.dim = detail::parse_number<int>(key, value);
    } else if (key == "T") {
      c.num_tasks = detail::parse_number<int>(key, value);
    } else if (key == "L") {
      c.minor_share = detail::parse_number<double>(key, value);
    } else if (key == "noise_type") {
      if (value == "sym") c.noise_type = NoiseType::sym;
      else if (value == "asym") c.noise_type = NoiseType::asym;
      else throw ConfigError("config: noise_type must be sym or asym");
    } else if (key == "noise_ratio") {
      c.noise_ratio = detail::parse_number<double>(key, value);
    } else if (key == "K") {
      c.memory_size = detail::parse_number<int>(key, value);
    } else if (key == "batch_size") {
      c.batch_size = detail::parse_number<int>(key, value);
    } else if (key == "sampler") {
      if (value == "puridiver") c.sampler = SamplerKind::puridiver;
      else if (value == "reservoir") c.sampler = SamplerKind::reservoir;
      else if (value == "gbs") c.sampler = SamplerKind::gbs;
      else throw ConfigError("config: sampler must be puridiver, reservoir or gbs");
    } else if (key == "robust_mode") {
      if (value == "none") c.robust_mode = RobustMode::none;
      else if (value == "relabel_only") c.robust_mode = RobustMode::relabel_only;
      else if (value == "consistency_only") c.robust_mode = RobustMode::consistency_only;
      else if (value == "full") c.robust_mode = RobustMode::full;
      else throw ConfigError("config: unknown robust_mode '" + value + "'");
    } else if (key == "alpha_mode") {
      if (value == "adaptive") {
        c.alpha_mode = AlphaMode::adaptive;
      } else if (value.rfind("fixed:", 0) == 0) {
        c.alpha_mode = AlphaMode::fixed;
        c.alpha_value = detail::parse_number<double>(key, value.substr(6));
      } else {
        throw ConfigError("config: alpha_mode must be adaptive or fixed:<value>");
      }
    } else if (key == "eta") {
      c.eta = detail::parse_number<double>(key, value);
    } else if (key == "lr") {
      c.lr = detail::parse_number<double>(key, value);
    } else if (key == "lr_schedule") {
      if (value == "constant") c.lr_schedule = LrSchedule::constant;
      else if (value == "cosine") c.lr_schedule = LrSchedule::cosine;
      else throw ConfigError("config: lr_schedule must be constant or cosine");
    } else if (key == "memory_epochs") {
      c.memory_epochs = detail::parse_number<int>(key, value);
    } else if (key == "H") {
      c.hidden_dim = detail::parse_number<int>(key, value);
    } else if (key == "oracle_epochs") {
      c.oracle_epochs = detail::parse_number<int>(key, value);
    } else if (key == "seeds") {
      c.seeds.clear();
      std::stringstream list(value);
      std::string item;
      while (std::getline(list, item, ',')) {
        c.seeds.push_back(detail::parse_number<std::uint64_t>(key, detail::trim(item)));
      }
      if (c.seeds.empty()) throw ConfigError("config: seeds list is empty");
    } else if (key == "output_dir") {
      c.output_dir = value;
    } else if (key == "synthetic_n_per_class") {
      c.synthetic_per_class = detail::parse_number<int>(key, value);
    } else if (key == "synthetic_mean_radius") {
      c.synthetic_mean_radius = detail::parse_number<double>(key, value);
    } else if (key == "synthetic_sigma") {
      c.synthetic_sigma = detail::parse_number<double>(key, value);
    } else if (key == "aug_sigma_weak") {
      c.aug.sigma_weak = detail::parse_number<double>(key, value);
    } else if (key == "aug_dropout_p") {
      c.aug.dropout_p = detail::parse_number<double>(key, value);
    } else if (key == "aug_sigma_strong") {
      c.aug.sigma_strong = detail::parse_number<double>(key, value);
    } else {
      throw ConfigError("config: unknown key '" + key + "' at line " + std::to_string(line_no));
    }
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

// Resolved configuration in the same flat format, for provenance.
inline std::string config_echo(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "dataset = " << c.dataset << "\n";
  os << "C = " << c.num_classes << "\n";
  os << "D = " << c.dim << "\n";
  os << "T = " << c.num_tasks << "\n";
  os << "L = " << c.minor_share << "\n";
  os << "noise_type = " << to_string(c.noise_type) << "\n";
  os << "noise_ratio = " << c.noise_ratio << "\n";
  os << "K = " << c.memory_size << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "sampler = " << to_string(c.sampler) << "\n";
  os << "robust_mode = " << to_string(c.robust_mode) << "\n";
  os << "alpha_mode = " << alpha_mode_string(c) << "\n";
  os << "eta = " << c.eta << "\n";
  os << "lr = " << c.lr << "\n";
  os << "lr_schedule = " << to_string(c.lr_schedule) << "\n";
  os << "memory_epochs = " << c.memory_epochs << "\n";
  os << "H = " << c.hidden_dim << "\n";
  os << "oracle_epochs = " << c.oracle_epochs << "\n";
  os << "seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    if (i) os << ",";
    os << c.seeds[i];
  }
  os << "\n";
  os << "output_dir = " << c.output_dir << "\n";
  os << "synthetic_n_per_class = " << c.synthetic_per_class << "\n";
  os << "synthetic_mean_radius = " << c.synthetic_mean_radius << "\n";
  os << "synthetic_sigma = " << c.synthetic_sigma << "\n";
  os << "aug_sigma_weak = " << c.aug.sigma_weak << "\n";
  os << "aug_dropout_p = " << c.aug.dropout_p << "\n";
  os << "aug_sigma_strong = " << c.aug.sigma_strong << "\n";
  return os.str();
}

}  // namespace puridiver
