#pragma once

// Dataset CSV round-trip and the synthetic blob generator. CSV schema:
// header `id,label,f0,...,f{D-1}`, integer labels, floats written with 17
// significant digits so a write/load round-trip is bit-exact.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "puridiver/errors.hpp"
#include "puridiver/rng.hpp"
#include "puridiver/stream.hpp"

namespace puridiver {

struct SyntheticSpec {
  int num_classes = 10;
  int dim = 32;
  int per_class = 500;       // N examples per class
  double mean_radius = 6.0;  // class means sit on this shell
  double sigma = 1.5;        // isotropic within-class spread
};

// Class means are seeded random directions scaled to the shell radius;
// examples are isotropic Gaussians around them. Ids are sequential.
inline Dataset generate_synthetic_full(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.per_class < 2) throw ConfigError("generate_synthetic: need at least 2 per class");
  if (spec.num_classes < 2 || spec.dim < 1) {
    throw ConfigError("generate_synthetic: need C >= 2 and D >= 1");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset d;
  d.num_classes = spec.num_classes;
  d.dim = spec.dim;

  std::vector<std::vector<double>> means(spec.num_classes);
  for (auto& mean : means) {
    mean.resize(spec.dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : mean) {
        v = gauss(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : mean) v = v / norm * spec.mean_radius;
  }

  long long next_id = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int k = 0; k < spec.per_class; ++k) {
      Example ex;
      ex.id = next_id++;
      ex.true_label = c;
      ex.noisy_label = c;
      ex.x.resize(spec.dim);
      for (int dd = 0; dd < spec.dim; ++dd) {
        ex.x[dd] = means[c][dd] + spec.sigma * gauss(rng);
      }
      d.examples.push_back(std::move(ex));
    }
  }
  return d;
}

struct SplitDataset {
  Dataset train;
  Dataset test;
};

// Per-class shuffle, first `train_fraction` of each class to train.
inline SplitDataset stratified_split(const Dataset& d, double train_fraction,
                                     std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("stratified_split: fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> buckets(d.num_classes);
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    buckets[d.examples[i].true_label].push_back(i);
  }
  SplitDataset out;
  out.train.num_classes = out.test.num_classes = d.num_classes;
  out.train.dim = out.test.dim = d.dim;
  for (auto& bucket : buckets) {
    std::shuffle(bucket.begin(), bucket.end(), rng);
    const std::size_t n_train =
        static_cast<std::size_t>(train_fraction * static_cast<double>(bucket.size()));
    for (std::size_t k = 0; k < bucket.size(); ++k) {
      (k < n_train ? out.train : out.test).examples.push_back(d.examples[bucket[k]]);
    }
  }
  return out;
}

// Synthetic dataset with an 80/20 stratified train/test split.
inline SplitDataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  return stratified_split(generate_synthetic_full(spec, seed), 0.8,
                          derive_seed(seed, "synthetic-split"));
}

inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_dataset_csv: cannot open " + path);
  out << "id,label";
  for (int dd = 0; dd < d.dim; ++dd) out << ",f" << dd;
  out << "\n";
  char buf[64];
  for (const Example& ex : d.examples) {
    out << ex.id << ',' << ex.true_label;
    for (double v : ex.x) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

inline Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("load_dataset_csv: empty file " + path);

  std::size_t dim = 0;
  {
    std::stringstream header(line);
    std::string field;
    if (!std::getline(header, field, ',') || field != "id") {
      throw ConfigError("load_dataset_csv: header must start with id,label");
    }
    if (!std::getline(header, field, ',') || field != "label") {
      throw ConfigError("load_dataset_csv: header must start with id,label");
    }
    while (std::getline(header, field, ',')) ++dim;
    if (dim == 0) throw ConfigError("load_dataset_csv: no feature columns");
  }

  Dataset d;
  d.dim = static_cast<int>(dim);
  std::set<long long> seen_ids;
  int max_label = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string field;
    Example ex;
    const std::string where = " at line " + std::to_string(line_no);
    try {
      if (!std::getline(row, field, ',')) throw ConfigError("missing id");
      ex.id = std::stoll(field);
      if (!std::getline(row, field, ',')) throw ConfigError("missing label");
      ex.true_label = std::stoi(field);
      ex.noisy_label = ex.true_label;
      ex.x.reserve(dim);
      while (std::getline(row, field, ',')) ex.x.push_back(std::stod(field));
    } catch (const std::exception&) {
      throw ConfigError("load_dataset_csv: malformed row" + where);
    }
    if (ex.x.size() != dim) {
      throw ConfigError("load_dataset_csv: expected " + std::to_string(dim) + " features" +
                        where);
    }
    if (ex.true_label < 0) throw ConfigError("load_dataset_csv: negative label" + where);
    if (!seen_ids.insert(ex.id).second) {
      throw ConfigError("load_dataset_csv: duplicate id " + std::to_string(ex.id) + where);
    }
    max_label = std::max(max_label, ex.true_label);
    d.examples.push_back(std::move(ex));
  }
  if (d.examples.empty()) throw ConfigError("load_dataset_csv: no data rows in " + path);
  d.num_classes = max_label + 1;
  return d;
}

}  // namespace puridiver
