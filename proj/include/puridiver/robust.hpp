#pragma once

// Memory-usage phase. Each epoch the memory is split by training loss into a
// clean set and a noisy set; the noisy set is split again by predictive
// uncertainty into a re-label set (soft labels from the model) and an
// unlabeled set (consistency regularization between weak and strong feature
// augmentations). The epoch loss is l_cls(C u R) + eta * l_reg(U).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "puridiver/gmm.hpp"
#include "puridiver/memory.hpp"
#include "puridiver/nnkit.hpp"

namespace puridiver {

enum class RobustMode { none, relabel_only, consistency_only, full };

struct CleanNoisySplit {
  std::vector<std::size_t> clean;  // memory positions with posterior_small >= 0.5
  std::vector<std::size_t> noisy;
  std::vector<double> losses;      // aligned with memory entries
  GmmFit fit;
};

// Fits a GMM to per-entry training losses and keeps the small-loss side as
// clean. Degenerate fits (or fewer than two entries) treat everything as clean.
inline CleanNoisySplit split_clean_noisy(const EpisodicMemory& memory, const Model& m) {
  if (memory.size() == 0) throw std::invalid_argument("split_clean_noisy: empty memory");
  CleanNoisySplit out;
  const auto& entries = memory.entries();
  out.losses.resize(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto fwd = forward(m, entries[i].example.x);
    out.losses[i] = cross_entropy(fwd.probs, one_hot(m.num_classes, entries[i].example.noisy_label));
  }
  if (entries.size() < 2) {
    out.fit.degenerate = true;
  } else {
    out.fit = fit_gmm_1d(out.losses);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (posterior_small(out.fit, out.losses[i]) >= 0.5) {
      out.clean.push_back(i);
    } else {
      out.noisy.push_back(i);
    }
  }
  return out;
}

struct RelabelSplit {
  std::vector<std::size_t> relabel;    // noisy positions with low uncertainty
  std::vector<std::size_t> unlabeled;
  std::vector<double> relabel_posterior;  // p_u aligned with `relabel`
  GmmFit fit;
};

// Fits a GMM to the predictive uncertainty of the noisy set; the
// low-uncertainty side is re-labeled, the rest is treated as unlabeled.
// Fewer than two members (or a degenerate fit) sends everything to re-label.
inline RelabelSplit split_relabel_unlabeled(const EpisodicMemory& memory,
                                            std::span<const std::size_t> noisy,
                                            const Model& m) {
  RelabelSplit out;
  if (noisy.empty()) return out;

  std::vector<double> uncertainty(noisy.size());
  for (std::size_t k = 0; k < noisy.size(); ++k) {
    const auto fwd = forward(m, memory.entries()[noisy[k]].example.x);
    uncertainty[k] = predictive_uncertainty(fwd.probs);
  }
  if (noisy.size() < 2) {
    out.fit.degenerate = true;
  } else {
    out.fit = fit_gmm_1d(uncertainty);
  }
  for (std::size_t k = 0; k < noisy.size(); ++k) {
    const double p_u = posterior_small(out.fit, uncertainty[k]);
    if (p_u >= 0.5) {
      out.relabel.push_back(noisy[k]);
      out.relabel_posterior.push_back(p_u);
    } else {
      out.unlabeled.push_back(noisy[k]);
    }
  }
  return out;
}

// Soft label: p_u * model prediction + (1 - p_u) * one-hot noisy label.
inline Vec relabel(const Example& ex, const Model& m, double p_u) {
  if (!(p_u >= 0.0 && p_u <= 1.0)) throw std::invalid_argument("relabel: p_u must lie in [0, 1]");
  const auto fwd = forward(m, ex.x);
  Vec soft = one_hot(m.num_classes, ex.noisy_label);
  for (int c = 0; c < m.num_classes; ++c) {
    soft[c] = p_u * fwd.probs[c] + (1.0 - p_u) * soft[c];
  }
  return soft;
}

struct MemoryPartition {
  std::vector<std::size_t> clean;
  std::vector<std::size_t> relabel;
  std::vector<std::size_t> unlabeled;
  std::vector<double> relabel_posterior;  // aligned with `relabel`
  GmmFit loss_fit;
  GmmFit uncertainty_fit;
};

// Loss split followed by uncertainty split: C u R u U = memory, disjoint.
inline MemoryPartition partition_memory(const EpisodicMemory& memory, const Model& m) {
  MemoryPartition part;
  auto loss_split = split_clean_noisy(memory, m);
  part.clean = std::move(loss_split.clean);
  part.loss_fit = loss_split.fit;
  auto relabel_split = split_relabel_unlabeled(memory, loss_split.noisy, m);
  part.relabel = std::move(relabel_split.relabel);
  part.unlabeled = std::move(relabel_split.unlabeled);
  part.relabel_posterior = std::move(relabel_split.relabel_posterior);
  part.uncertainty_fit = relabel_split.fit;
  return part;
}

struct AugmentConfig {
  double sigma_weak = 0.05;   // weak: additive noise scale, per-feature std units
  double dropout_p = 0.2;     // strong: coordinate dropout probability
  double sigma_strong = 0.15; // strong: additive noise scale after dropout
};

// Per-coordinate standard deviation over the given examples.
inline Vec feature_std(std::span<const MemoryEntry> entries, int dim) {
  Vec mean(dim, 0.0), sq(dim, 0.0);
  if (entries.empty()) return Vec(dim, 0.0);
  for (const MemoryEntry& e : entries) {
    for (int d = 0; d < dim; ++d) {
      mean[d] += e.example.x[d];
      sq[d] += e.example.x[d] * e.example.x[d];
    }
  }
  Vec out(dim, 0.0);
  const double n = static_cast<double>(entries.size());
  for (int d = 0; d < dim; ++d) {
    const double v = sq[d] / n - (mean[d] / n) * (mean[d] / n);
    out[d] = v > 0.0 ? std::sqrt(v) : 0.0;
  }
  return out;
}

inline Vec weak_aug(std::span<const double> x, std::span<const double> std_per_dim,
                    const AugmentConfig& cfg, std::mt19937_64& rng) {
  Vec out(x.begin(), x.end());
  if (cfg.sigma_weak == 0.0) return out;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t d = 0; d < out.size(); ++d) {
    out[d] += cfg.sigma_weak * std_per_dim[d] * noise(rng);
  }
  return out;
}

// Coordinate dropout then additive noise.
inline Vec strong_aug(std::span<const double> x, std::span<const double> std_per_dim,
                      const AugmentConfig& cfg, std::mt19937_64& rng) {
  Vec out(x.begin(), x.end());
  if (cfg.dropout_p > 0.0) {
    std::bernoulli_distribution drop(cfg.dropout_p);
    for (double& v : out) {
      if (drop(rng)) v = 0.0;
    }
  }
  if (cfg.sigma_strong > 0.0) {
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t d = 0; d < out.size(); ++d) {
      out[d] += cfg.sigma_strong * std_per_dim[d] * noise(rng);
    }
  }
  return out;
}

// Mean L2 distance between predictions on strong and weak augmentations of
// each unlabeled example. Labels are never used.
inline double consistency_loss(const EpisodicMemory& memory,
                               std::span<const std::size_t> unlabeled, const Model& m,
                               const AugmentConfig& cfg, std::span<const double> std_per_dim,
                               std::mt19937_64& rng) {
  if (unlabeled.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t pos : unlabeled) {
    const auto& x = memory.entries()[pos].example.x;
    const Vec xs = strong_aug(x, std_per_dim, cfg, rng);
    const Vec xw = weak_aug(x, std_per_dim, cfg, rng);
    const Vec ps = forward(m, xs).probs;
    const Vec pw = forward(m, xw).probs;
    double sq = 0.0;
    for (std::size_t c = 0; c < ps.size(); ++c) sq += (ps[c] - pw[c]) * (ps[c] - pw[c]);
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(unlabeled.size());
}

// Mean cross-entropy over the clean set (hard noisy labels) and the re-label
// set (soft labels), normalized by |C u R|.
inline double classification_loss(const EpisodicMemory& memory,
                                  std::span<const std::size_t> clean,
                                  std::span<const std::size_t> relabel_set,
                                  std::span<const Vec> soft_labels, const Model& m) {
  const std::size_t n = clean.size() + relabel_set.size();
  if (n == 0) {
    std::cerr << "classification_loss: both sets empty, returning 0\n";
    return 0.0;
  }
  double total = 0.0;
  for (std::size_t pos : clean) {
    const auto& ex = memory.entries()[pos].example;
    total += cross_entropy(forward(m, ex.x).probs, one_hot(m.num_classes, ex.noisy_label));
  }
  for (std::size_t k = 0; k < relabel_set.size(); ++k) {
    const auto& ex = memory.entries()[relabel_set[k]].example;
    total += cross_entropy(forward(m, ex.x).probs, soft_labels[k]);
  }
  return total / static_cast<double>(n);
}

struct EpochAudit {
  std::size_t n_clean = 0;
  std::size_t n_relabel = 0;
  std::size_t n_unlabeled = 0;
  std::optional<double> purity_clean;
  std::optional<double> purity_relabel;
  std::optional<double> purity_unlabeled;
};

struct RobustTrainConfig {
  RobustMode mode = RobustMode::full;
  double eta = 1.0;
  double lr = 0.05;
  int batch_size = 16;
  AugmentConfig aug;
};

namespace detail {

inline std::optional<double> subset_purity(const EpisodicMemory& memory,
                                           std::span<const std::size_t> subset) {
  if (subset.empty()) return std::nullopt;
  std::size_t clean = 0;
  for (std::size_t pos : subset) {
    const auto& ex = memory.entries()[pos].example;
    if (ex.noisy_label == ex.true_label) ++clean;
  }
  return static_cast<double>(clean) / static_cast<double>(subset.size());
}

// Per-step draw count: ceil(batch_size * |set| / |memory|), capped by what is
// left in the queue.
inline std::size_t step_quota(std::size_t set_size, std::size_t memory_size, int batch_size,
                              std::size_t remaining) {
  if (set_size == 0 || remaining == 0) return 0;
  const std::size_t q =
      (static_cast<std::size_t>(batch_size) * set_size + memory_size - 1) / memory_size;
  return std::min(q, remaining);
}

}  // namespace detail

// One epoch of memory training. The partition is recomputed at entry per the
// configured mode; mini-batches are drawn co-indexed from the shuffled sets in
// proportion to their sizes, and each joint batch takes one SGD step on
// l_cls + eta * l_reg. Augmentation draws come from `aug_rng` only, so modes
// that skip the consistency term leave `shuffle_rng` consumption unchanged.
inline Model memory_train_epoch(const EpisodicMemory& memory, Model model,
                                const RobustTrainConfig& cfg, std::mt19937_64& shuffle_rng,
                                std::mt19937_64& aug_rng, EpochAudit* audit = nullptr) {
  if (memory.size() == 0) throw std::invalid_argument("memory_train_epoch: empty memory");

  std::vector<std::size_t> clean, relabel_set, unlabeled;
  std::vector<double> relabel_posterior;
  switch (cfg.mode) {
    case RobustMode::none: {
      clean.resize(memory.size());
      for (std::size_t i = 0; i < memory.size(); ++i) clean[i] = i;
      break;
    }
    case RobustMode::consistency_only: {
      auto split = split_clean_noisy(memory, model);
      clean = std::move(split.clean);
      unlabeled = std::move(split.noisy);
      break;
    }
    case RobustMode::relabel_only:
    case RobustMode::full: {
      auto part = partition_memory(memory, model);
      clean = std::move(part.clean);
      relabel_set = std::move(part.relabel);
      unlabeled = std::move(part.unlabeled);
      relabel_posterior = std::move(part.relabel_posterior);
      break;
    }
  }

  if (audit) {
    audit->n_clean = clean.size();
    audit->n_relabel = relabel_set.size();
    audit->n_unlabeled = unlabeled.size();
    audit->purity_clean = detail::subset_purity(memory, clean);
    audit->purity_relabel = detail::subset_purity(memory, relabel_set);
    audit->purity_unlabeled = detail::subset_purity(memory, unlabeled);
  }

  // Soft labels are fixed at epoch start.
  std::vector<Vec> soft_labels(relabel_set.size());
  for (std::size_t k = 0; k < relabel_set.size(); ++k) {
    soft_labels[k] =
        relabel(memory.entries()[relabel_set[k]].example, model, relabel_posterior[k]);
  }

  const bool use_consistency =
      (cfg.mode == RobustMode::consistency_only || cfg.mode == RobustMode::full) &&
      cfg.eta != 0.0;
  const Vec std_per_dim = feature_std(memory.entries(), model.input_dim);

  // Shuffle each set; relabel positions and soft labels move together.
  std::vector<std::size_t> order(relabel_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(clean.begin(), clean.end(), shuffle_rng);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  std::shuffle(unlabeled.begin(), unlabeled.end(), shuffle_rng);

  std::size_t ci = 0, ri = 0, ui = 0;
  while (ci < clean.size() || ri < relabel_set.size() ||
         (ui < unlabeled.size() && cfg.mode != RobustMode::relabel_only)) {
    const std::size_t nc =
        detail::step_quota(clean.size(), memory.size(), cfg.batch_size, clean.size() - ci);
    const std::size_t nr = detail::step_quota(relabel_set.size(), memory.size(), cfg.batch_size,
                                              relabel_set.size() - ri);
    const std::size_t nu =
        cfg.mode == RobustMode::relabel_only
            ? 0
            : detail::step_quota(unlabeled.size(), memory.size(), cfg.batch_size,
                                 unlabeled.size() - ui);
    if (nc + nr + nu == 0) break;

    Gradients grads(model);
    const std::size_t n_cls = nc + nr;
    const double cls_scale = n_cls > 0 ? 1.0 / static_cast<double>(n_cls) : 0.0;
    for (std::size_t k = 0; k < nc; ++k, ++ci) {
      const auto& ex = memory.entries()[clean[ci]].example;
      const auto fwd = forward(model, ex.x);
      accumulate_ce_gradient(model, ex.x, fwd, one_hot(model.num_classes, ex.noisy_label),
                             cls_scale, grads, ex.id);
    }
    for (std::size_t k = 0; k < nr; ++k, ++ri) {
      const std::size_t idx = order[ri];
      const auto& ex = memory.entries()[relabel_set[idx]].example;
      const auto fwd = forward(model, ex.x);
      accumulate_ce_gradient(model, ex.x, fwd, soft_labels[idx], cls_scale, grads, ex.id);
    }
    if (use_consistency && nu > 0) {
      const double reg_scale = cfg.eta / static_cast<double>(nu);
      for (std::size_t k = 0; k < nu; ++k, ++ui) {
        const auto& ex = memory.entries()[unlabeled[ui]].example;
        const Vec xs = strong_aug(ex.x, std_per_dim, cfg.aug, aug_rng);
        const Vec xw = weak_aug(ex.x, std_per_dim, cfg.aug, aug_rng);
        const auto fs = forward(model, xs);
        const auto fw = forward(model, xw);
        Vec diff(model.num_classes);
        double norm = 0.0;
        for (int c = 0; c < model.num_classes; ++c) {
          diff[c] = fs.probs[c] - fw.probs[c];
          norm += diff[c] * diff[c];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        // The weak view is the target: gradient flows through the strong
        // branch only, pulling it toward the anchored weak prediction.
        Vec dps(model.num_classes);
        for (int c = 0; c < model.num_classes; ++c) dps[c] = diff[c] / norm;
        accumulate_prob_gradient(model, xs, fs, dps, reg_scale, grads, ex.id);
      }
    } else {
      ui += nu;
    }
    apply_gradients(model, grads, cfg.lr);
  }
  return model;
}

}  // namespace puridiver
