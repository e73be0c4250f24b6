#pragma once

// Contaminated blurry task streams. A dataset is split into tasks whose major
// classes are pairwise disjoint and jointly cover every class; each task also
// carries a minor-share fraction of examples from all other classes. Label
// noise is injected on the whole training set before splitting, and splitting
// keys on true labels.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "puridiver/errors.hpp"

namespace puridiver {

struct Example {
  long long id = 0;
  std::vector<double> x;
  int noisy_label = 0;  // what learners see
  int true_label = 0;   // hidden; used only by noise injection and metrics
};

struct Dataset {
  int num_classes = 0;
  int dim = 0;
  std::vector<Example> examples;
};

struct TaskStream {
  int task_id = 0;
  std::vector<Example> examples;   // stream order, fixed by the seeded shuffle
  std::vector<int> major_classes;  // sorted
  std::vector<int> minor_classes;  // sorted
};

namespace detail {

inline std::vector<std::vector<std::size_t>> bucket_by_true_label(const Dataset& d) {
  std::vector<std::vector<std::size_t>> buckets(d.num_classes);
  for (std::size_t i = 0; i < d.examples.size(); ++i) {
    const int y = d.examples[i].true_label;
    if (y < 0 || y >= d.num_classes) {
      throw ConfigError("dataset: true label " + std::to_string(y) + " out of range");
    }
    buckets[y].push_back(i);
  }
  return buckets;
}

}  // namespace detail

// Splits the dataset into `num_tasks` blurry tasks. Majors are assigned from a
// seeded class shuffle; when C % T != 0 the trailing tasks take the extra
// majors. Each task receives round(L * N_t) minor examples spread as evenly as
// possible over its minor classes, where N_t is its majors' example mass.
// Every example lands in exactly one task.
inline std::vector<TaskStream> split_blurry_tasks(const Dataset& dataset, int num_tasks,
                                                  double minor_share, std::uint64_t seed) {
  const int C = dataset.num_classes;
  if (num_tasks < 1) throw ConfigError("split_blurry_tasks: need at least one task");
  if (num_tasks > C) throw ConfigError("split_blurry_tasks: more tasks than classes");
  if (!(minor_share >= 0.0 && minor_share < 1.0)) {
    throw ConfigError("split_blurry_tasks: L must lie in [0, 1)");
  }

  std::mt19937_64 rng(seed);

  std::vector<int> class_order(C);
  std::iota(class_order.begin(), class_order.end(), 0);
  std::shuffle(class_order.begin(), class_order.end(), rng);

  const int T = num_tasks;
  const int base = C / T;
  const int extra = C % T;
  std::vector<std::vector<int>> majors(T);
  std::vector<int> owner(C, -1);
  int next = 0;
  for (int t = 0; t < T; ++t) {
    const int take = base + (t >= T - extra ? 1 : 0);
    for (int k = 0; k < take; ++k) {
      const int c = class_order[next++];
      majors[t].push_back(c);
      owner[c] = t;
    }
  }

  auto buckets = detail::bucket_by_true_label(dataset);
  for (auto& b : buckets) std::shuffle(b.begin(), b.end(), rng);

  // quota[t][c]: minor examples of class c placed into task t. Each task t
  // should receive m_t = L/(1-L) * keep_t minors, where keep_t is the mass its
  // major classes retain after their own gifts; quota and keep depend on each
  // other, so iterate the fixed point (contraction with ratio ~L).
  std::vector<std::vector<long long>> quota(T, std::vector<long long>(C, 0));
  if (T > 1 && minor_share > 0.0) {
    std::vector<std::vector<int>> minor_classes(T);
    for (int t = 0; t < T; ++t) {
      for (int c : class_order) {
        if (owner[c] != t) minor_classes[t].push_back(c);
      }
    }
    std::vector<long long> target(T, 0);
    for (int t = 0; t < T; ++t) {
      long long majors_mass = 0;
      for (int c : majors[t]) majors_mass += static_cast<long long>(buckets[c].size());
      target[t] = std::llround(minor_share * static_cast<double>(majors_mass));
    }
    const double gift_ratio = minor_share / (1.0 - minor_share);
    for (int iter = 0; iter < 16; ++iter) {
      for (int t = 0; t < T; ++t) {
        const long long per_class = target[t] / static_cast<long long>(minor_classes[t].size());
        long long remainder = target[t] % static_cast<long long>(minor_classes[t].size());
        for (int c : minor_classes[t]) {
          quota[t][c] = per_class + (remainder > 0 ? 1 : 0);
          if (remainder > 0) --remainder;
        }
      }
      std::vector<long long> keep(C, 0);
      for (int c = 0; c < C; ++c) {
        long long demand = 0;
        for (int t = 0; t < T; ++t) demand += quota[t][c];
        keep[c] = static_cast<long long>(buckets[c].size()) - demand;
        if (keep[c] < 0) {
          throw ConfigError("split_blurry_tasks: minor share L infeasible for class " +
                            std::to_string(c));
        }
      }
      bool stable = true;
      for (int t = 0; t < T; ++t) {
        long long keep_mass = 0;
        for (int c : majors[t]) keep_mass += keep[c];
        const long long next = std::llround(gift_ratio * static_cast<double>(keep_mass));
        if (next != target[t]) stable = false;
        target[t] = next;
      }
      if (stable) break;
    }
  }

  std::vector<TaskStream> tasks(T);
  for (int t = 0; t < T; ++t) {
    tasks[t].task_id = t;
    tasks[t].major_classes = majors[t];
    std::sort(tasks[t].major_classes.begin(), tasks[t].major_classes.end());
    if (T > 1 && minor_share > 0.0) {
      for (int c = 0; c < C; ++c) {
        if (owner[c] != t) tasks[t].minor_classes.push_back(c);
      }
    }
  }

  // Consume each class bucket: minor quotas first, remainder to the owner.
  for (int c = 0; c < C; ++c) {
    std::size_t pos = 0;
    for (int t = 0; t < T; ++t) {
      for (long long k = 0; k < quota[t][c]; ++k) {
        tasks[t].examples.push_back(dataset.examples[buckets[c][pos++]]);
      }
    }
    while (pos < buckets[c].size()) {
      tasks[owner[c]].examples.push_back(dataset.examples[buckets[c][pos++]]);
    }
  }

  for (auto& task : tasks) std::shuffle(task.examples.begin(), task.examples.end(), rng);
  return tasks;
}

// Flips each label with probability `ratio` to a uniformly chosen other class.
// Labels are flipped from the true label; features and true labels untouched.
inline Dataset inject_symmetric_noise(Dataset dataset, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ConfigError("inject_symmetric_noise: ratio must lie in [0, 1)");
  }
  if (dataset.num_classes < 2) return dataset;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(ratio);
  std::uniform_int_distribution<int> pick(0, dataset.num_classes - 2);
  for (Example& ex : dataset.examples) {
    ex.noisy_label = ex.true_label;
    if (ratio > 0.0 && flip(rng)) {
      const int k = pick(rng);
      ex.noisy_label = k >= ex.true_label ? k + 1 : k;
    }
  }
  return dataset;
}

// c -> (c + 1) mod C; the default asymmetric map for synthetic data.
inline std::vector<int> circular_shift_map(int num_classes) {
  std::vector<int> map(num_classes);
  for (int c = 0; c < num_classes; ++c) map[c] = (c + 1) % num_classes;
  return map;
}

// Flips each label with probability `ratio` to class_map[true_label].
inline Dataset inject_asymmetric_noise(Dataset dataset, double ratio,
                                       const std::vector<int>& class_map, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ConfigError("inject_asymmetric_noise: ratio must lie in [0, 1)");
  }
  if (static_cast<int>(class_map.size()) != dataset.num_classes) {
    throw ConfigError("inject_asymmetric_noise: class_map size mismatch");
  }
  for (int c = 0; c < dataset.num_classes; ++c) {
    if (class_map[c] == c) {
      throw ConfigError("inject_asymmetric_noise: class_map maps class " + std::to_string(c) +
                        " to itself");
    }
    if (class_map[c] < 0 || class_map[c] >= dataset.num_classes) {
      throw ConfigError("inject_asymmetric_noise: class_map target out of range");
    }
  }
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(ratio);
  for (Example& ex : dataset.examples) {
    ex.noisy_label = ex.true_label;
    if (ratio > 0.0 && flip(rng)) ex.noisy_label = class_map[ex.true_label];
  }
  return dataset;
}

// Consecutive mini-batches in stream order; the last batch may be short.
inline std::vector<std::span<const Example>> batches(const TaskStream& task, int batch_size) {
  if (batch_size < 1) throw ConfigError("batches: batch_size must be >= 1");
  std::vector<std::span<const Example>> out;
  const std::size_t n = task.examples.size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t len = std::min<std::size_t>(batch_size, n - start);
    out.emplace_back(task.examples.data() + start, len);
  }
  return out;
}

}  // namespace puridiver
