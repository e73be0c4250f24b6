#pragma once

// Capacity-bounded episodic memory plus three update policies: purity/diversity
// scored replacement with an adaptive balancing coefficient, reservoir
// sampling, and greedy class balancing. The scored policy keeps the sample
// whose removal best preserves low loss (purity) and low same-class
// representation similarity (diversity).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "puridiver/nnkit.hpp"
#include "puridiver/stream.hpp"

namespace puridiver {

struct MemoryEntry {
  Example example;
  std::uint64_t insert_seq = 0;
};

// Entries keep insertion order; the per-class index is keyed by noisy label.
// Size may transiently reach capacity+1 inside an update while the candidate
// is provisionally present.
class EpisodicMemory {
 public:
  explicit EpisodicMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity < 1) throw ConfigError("EpisodicMemory: capacity must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool full() const { return entries_.size() >= capacity_; }
  const std::vector<MemoryEntry>& entries() const { return entries_; }

  // Positions of same-noisy-label entries, in insertion order.
  std::span<const std::size_t> class_positions(int noisy_label) const {
    static const std::vector<std::size_t> kEmpty;
    auto it = by_class_.find(noisy_label);
    return it == by_class_.end() ? std::span<const std::size_t>(kEmpty)
                                 : std::span<const std::size_t>(it->second);
  }

  void insert(Example ex) {
    const int label = ex.noisy_label;
    entries_.push_back(MemoryEntry{std::move(ex), next_seq_++});
    by_class_[label].push_back(entries_.size() - 1);
  }

  void remove_at(std::size_t pos) {
    if (pos >= entries_.size()) throw std::invalid_argument("remove_at: out of range");
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(pos));
    for (auto it = by_class_.begin(); it != by_class_.end();) {
      auto& positions = it->second;
      positions.erase(std::remove(positions.begin(), positions.end(), pos), positions.end());
      for (std::size_t& p : positions) {
        if (p > pos) --p;
      }
      it = positions.empty() ? by_class_.erase(it) : std::next(it);
    }
  }

  // Per-class index matches entries and size respects capacity.
  bool consistent() const {
    if (entries_.size() > capacity_) return false;
    std::size_t indexed = 0;
    for (const auto& [label, positions] : by_class_) {
      indexed += positions.size();
      for (std::size_t p : positions) {
        if (p >= entries_.size() || entries_[p].example.noisy_label != label) return false;
      }
    }
    return indexed == entries_.size();
  }

 private:
  std::size_t capacity_;
  std::uint64_t next_seq_ = 0;
  std::vector<MemoryEntry> entries_;
  std::map<int, std::vector<std::size_t>> by_class_;
};

// Hidden units whose class-j classifier weight exceeds the mean weight over
// classes. The mask depends only on the model and j, never on the input.
inline std::vector<bool> relevance_mask(const Model& m, int class_j) {
  if (class_j < 0 || class_j >= m.num_classes) {
    throw std::invalid_argument("relevance_mask: class out of range");
  }
  std::vector<bool> mask(m.hidden_dim, false);
  for (int h = 0; h < m.hidden_dim; ++h) {
    double mean_w = 0.0;
    for (int c = 0; c < m.num_classes; ++c) mean_w += m.w2(c, h);
    mean_w /= static_cast<double>(m.num_classes);
    mask[h] = m.w2(class_j, h) > mean_w;
  }
  return mask;
}

namespace detail {

inline Vec apply_mask(const Vec& representation, const std::vector<bool>& mask) {
  Vec out;
  for (std::size_t h = 0; h < representation.size(); ++h) {
    if (mask[h]) out.push_back(representation[h]);
  }
  if (out.empty()) return representation;  // empty mask falls back to the full vector
  return out;
}

}  // namespace detail

// Representation restricted to the class-j relevance mask; falls back to the
// full representation when no unit passes the mask.
inline Vec relevant_representation(const Model& m, std::span<const double> x, int class_j) {
  return detail::apply_mask(forward(m, x).representation, relevance_mask(m, class_j));
}

// Cosine similarity; either vector being zero gives 0.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// alpha = 0.5 * min(1 / mean_loss, 1); a zero loss caps at 0.5.
inline double adaptive_alpha(double batch_mean_loss) {
  if (batch_mean_loss < 0.0) {
    throw std::invalid_argument("adaptive_alpha: negative mean loss");
  }
  if (batch_mean_loss == 0.0) return 0.5;
  return 0.5 * std::min(1.0 / batch_mean_loss, 1.0);
}

// score = (1-alpha) * loss + alpha * mean same-label cosine similarity.
// Lower is better to keep. `exclude_seq` drops one stored entry from the
// same-label set, so members never count themselves.
inline double sample_score(const Model& m, const EpisodicMemory& memory,
                           std::span<const double> x, int noisy_label, double alpha,
                           std::optional<std::uint64_t> exclude_seq = std::nullopt) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("sample_score: alpha must lie in [0, 1]");
  }
  const ForwardResult fwd = forward(m, x);
  const double loss = cross_entropy(fwd.probs, one_hot(m.num_classes, noisy_label));

  double diversity = 0.0;
  const auto positions = memory.class_positions(noisy_label);
  if (!positions.empty()) {
    const auto mask = relevance_mask(m, noisy_label);
    const Vec own = detail::apply_mask(fwd.representation, mask);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t pos : positions) {
      const MemoryEntry& entry = memory.entries()[pos];
      if (exclude_seq && entry.insert_seq == *exclude_seq) continue;
      const Vec other = detail::apply_mask(forward(m, entry.example.x).representation, mask);
      total += cosine(own, other);
      ++count;
    }
    if (count > 0) diversity = total / static_cast<double>(count);
  }
  return (1.0 - alpha) * loss + alpha * diversity;
}

// Index of the maximum score; ties resolve to the oldest insertion.
inline std::size_t argmax_oldest_tiebreak(std::span<const double> scores,
                                          std::span<const std::uint64_t> seqs) {
  if (scores.empty() || scores.size() != seqs.size()) {
    throw std::invalid_argument("argmax_oldest_tiebreak: bad inputs");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] && seqs[i] < seqs[best])) {
      best = i;
    }
  }
  return best;
}

// Scored replacement: insert the candidate, then when over capacity evict the
// argmax-score element over all members including the candidate. Each member
// is scored against its same-label peers excluding itself.
inline void puridiver_update(EpisodicMemory& memory, Example candidate, const Model& m,
                             double alpha) {
  memory.insert(std::move(candidate));
  if (memory.size() <= memory.capacity()) return;

  const auto& entries = memory.entries();
  const std::size_t n = entries.size();

  std::vector<ForwardResult> fwd(n);
  std::vector<double> losses(n);
  for (std::size_t i = 0; i < n; ++i) {
    fwd[i] = forward(m, entries[i].example.x);
    losses[i] =
        cross_entropy(fwd[i].probs, one_hot(m.num_classes, entries[i].example.noisy_label));
  }

  std::map<int, std::vector<bool>> masks;
  std::vector<Vec> rel(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = entries[i].example.noisy_label;
    auto it = masks.find(label);
    if (it == masks.end()) it = masks.emplace(label, relevance_mask(m, label)).first;
    rel[i] = detail::apply_mask(fwd[i].representation, it->second);
  }

  std::vector<double> scores(n);
  std::vector<std::uint64_t> seqs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = entries[i].example.noisy_label;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t pos : memory.class_positions(label)) {
      if (pos == i) continue;
      total += cosine(rel[i], rel[pos]);
      ++count;
    }
    const double diversity = count > 0 ? total / static_cast<double>(count) : 0.0;
    scores[i] = (1.0 - alpha) * losses[i] + alpha * diversity;
    seqs[i] = entries[i].insert_seq;
  }

  memory.remove_at(argmax_oldest_tiebreak(scores, seqs));
}

// Classic reservoir sampling: position j = uniform(0, n_seen-1) replaces slot
// j when j < K. `n_seen` counts every stream example so far, candidate
// included.
inline void reservoir_update(EpisodicMemory& memory, Example candidate, std::size_t n_seen,
                             std::mt19937_64& rng) {
  if (n_seen < 1) throw std::invalid_argument("reservoir_update: n_seen must count the candidate");
  if (!memory.full()) {
    memory.insert(std::move(candidate));
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(0, n_seen - 1);
  const std::size_t j = pick(rng);
  if (j < memory.capacity()) {
    memory.remove_at(j);
    memory.insert(std::move(candidate));
  }
}

// Greedy balancing: when full, the candidate is provisionally inserted and a
// uniformly random member of the then-largest noisy-label class (ties pooled,
// candidate included) is evicted. Keeps the class-count spread at most one
// under balanced flow.
inline void greedy_balanced_update(EpisodicMemory& memory, Example candidate,
                                   std::mt19937_64& rng) {
  const bool was_full = memory.full();
  memory.insert(std::move(candidate));
  if (!was_full) return;

  std::map<int, std::size_t> counts;
  for (const MemoryEntry& e : memory.entries()) ++counts[e.example.noisy_label];
  std::size_t max_count = 0;
  for (const auto& [label, count] : counts) max_count = std::max(max_count, count);

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    if (counts[memory.entries()[i].example.noisy_label] == max_count) pool.push_back(i);
  }
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  memory.remove_at(pool[pick(rng)]);
}

}  // namespace puridiver
