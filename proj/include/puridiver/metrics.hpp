#pragma once

// Evaluation metrics: memory purity (fraction of correctly labeled entries),
// memory diversity (mean per-true-class pairwise representation distance under
// an offline jointly trained model), and last test accuracy.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "puridiver/memory.hpp"
#include "puridiver/nnkit.hpp"
#include "puridiver/stream.hpp"

namespace puridiver {

struct RunRecord {
  int task_id = 0;
  double last_accuracy = 0.0;
  double memory_purity = 0.0;
  double memory_diversity = 0.0;
  double alpha_mean = 0.0;
  std::int64_t timestamp = 0;  // unix seconds at record creation
};

// Fraction of entries whose noisy label equals the true label.
inline double memory_purity(const EpisodicMemory& memory) {
  if (memory.size() == 0) throw std::invalid_argument("memory_purity: empty memory");
  std::size_t clean = 0;
  for (const MemoryEntry& e : memory.entries()) {
    if (e.example.noisy_label == e.example.true_label) ++clean;
  }
  return static_cast<double>(clean) / static_cast<double>(memory.size());
}

// Mean over true classes (with at least two members) of the mean pairwise L2
// distance between oracle representations. Entries group by true label.
inline double memory_diversity(const EpisodicMemory& memory, const Model& oracle) {
  std::map<int, std::vector<Vec>> reps;
  for (const MemoryEntry& e : memory.entries()) {
    reps[e.example.true_label].push_back(forward(oracle, e.example.x).representation);
  }
  double total = 0.0;
  std::size_t classes = 0;
  for (const auto& [label, vectors] : reps) {
    const std::size_t n = vectors.size();
    if (n < 2) continue;
    double class_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double sq = 0.0;
        for (std::size_t h = 0; h < vectors[i].size(); ++h) {
          const double d = vectors[i][h] - vectors[j][h];
          sq += d * d;
        }
        class_total += std::sqrt(sq);
      }
    }
    total += class_total / (static_cast<double>(n) * (n - 1) / 2.0);
    ++classes;
  }
  if (classes == 0) {
    std::cerr << "memory_diversity: no class with two members, returning 0\n";
    return 0.0;
  }
  return total / static_cast<double>(classes);
}

// Argmax with ties resolved to the lowest class index.
inline int argmax_lowest_tie(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax_lowest_tie: empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<int>(best);
}

// Fraction of argmax predictions matching true labels on a clean test set.
inline double evaluate_accuracy(const Model& m, std::span<const Example> test_set) {
  if (test_set.empty()) throw std::invalid_argument("evaluate_accuracy: empty test set");
  std::size_t correct = 0;
  for (const Example& ex : test_set) {
    if (argmax_lowest_tie(forward(m, ex.x).probs) == ex.true_label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

}  // namespace puridiver
