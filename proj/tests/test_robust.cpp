#include "puridiver/robust.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "puridiver/rng.hpp"

namespace puridiver {
namespace {

Model zero_model(int d, int h, int c) {
  Model m;
  m.input_dim = d;
  m.hidden_dim = h;
  m.num_classes = c;
  m.w1 = Mat(h, d);
  m.b1.assign(h, 0.0);
  m.w2 = Mat(c, h);
  m.b2.assign(c, 0.0);
  return m;
}

Model separating_model() {
  Model m = zero_model(2, 2, 2);
  m.w1(0, 0) = 1.0;
  m.w1(1, 0) = -1.0;
  m.w2(0, 0) = 5.0;
  m.w2(0, 1) = -5.0;
  m.w2(1, 0) = -5.0;
  m.w2(1, 1) = 5.0;
  return m;
}

Example make_example(long long id, std::vector<double> x, int noisy, int true_label = -1) {
  Example ex;
  ex.id = id;
  ex.x = std::move(x);
  ex.noisy_label = noisy;
  ex.true_label = true_label < 0 ? noisy : true_label;
  return ex;
}

// 1-feature, 10-class model with logits (x, 0, ..., 0): picking x sets the
// top-class probability, hence the predictive uncertainty, exactly.
Model uncertainty_dial_model() {
  Model m = zero_model(1, 1, 10);
  m.w1(0, 0) = 1.0;
  m.w2(0, 0) = 1.0;
  return m;
}

double dial_input_for_uncertainty(double u) {
  // p0 = e^x / (e^x + 9) = 1 - u  =>  x = ln(9 (1 - u) / u)
  return std::log(9.0 * (1.0 - u) / u);
}

TEST(SplitCleanNoisy, BimodalLossesSeparate) {
  const Model m = separating_model();
  EpisodicMemory memory(40);
  long long id = 0;
  for (int i = 0; i < 30; ++i) {
    memory.insert(make_example(id++, {1.0 + 0.01 * i, 0.0}, 0));  // low loss
  }
  std::set<long long> flipped_ids;
  for (int i = 0; i < 10; ++i) {
    Example ex = make_example(id, {1.0 + 0.01 * i, 0.0}, 1, 0);  // mislabeled, high loss
    flipped_ids.insert(id++);
    memory.insert(std::move(ex));
  }
  const auto split = split_clean_noisy(memory, m);
  EXPECT_EQ(split.clean.size() + split.noisy.size(), memory.size());
  for (std::size_t pos : split.noisy) {
    EXPECT_TRUE(flipped_ids.count(memory.entries()[pos].example.id));
  }
  EXPECT_EQ(split.noisy.size(), 10u);
}

TEST(SplitCleanNoisy, IdenticalLossesAllClean) {
  const Model m = separating_model();
  EpisodicMemory memory(20);
  for (int i = 0; i < 10; ++i) memory.insert(make_example(i, {1.0, 0.0}, 0));
  const auto split = split_clean_noisy(memory, m);
  EXPECT_TRUE(split.fit.degenerate);
  EXPECT_EQ(split.clean.size(), 10u);
  EXPECT_TRUE(split.noisy.empty());
}

TEST(SplitCleanNoisy, PartitionIsTotalAndDisjoint) {
  auto rng = make_rng(101, "test");
  std::normal_distribution<double> gauss(0.0, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = make_model(3, 4, 4, rng);
    EpisodicMemory memory(25);
    std::uniform_int_distribution<int> label(0, 3);
    for (int i = 0; i < 25; ++i) {
      memory.insert(make_example(i, {gauss(rng), gauss(rng), gauss(rng)}, label(rng)));
    }
    const auto split = split_clean_noisy(memory, m);
    std::set<std::size_t> seen(split.clean.begin(), split.clean.end());
    for (std::size_t pos : split.noisy) EXPECT_TRUE(seen.insert(pos).second);
    EXPECT_EQ(seen.size(), memory.size());
  }
}

TEST(SplitRelabelUnlabeled, EmptyNoisySetGivesEmptySplits) {
  const Model m = separating_model();
  EpisodicMemory memory(4);
  memory.insert(make_example(0, {1.0, 0.0}, 0));
  const std::vector<std::size_t> noisy;
  const auto split = split_relabel_unlabeled(memory, noisy, m);
  EXPECT_TRUE(split.relabel.empty());
  EXPECT_TRUE(split.unlabeled.empty());
}

TEST(SplitRelabelUnlabeled, LowUncertaintyClusterLandsInRelabel) {
  const Model m = uncertainty_dial_model();
  EpisodicMemory memory(30);
  std::vector<std::size_t> noisy;
  long long id = 0;
  const double x_low = dial_input_for_uncertainty(0.05);
  const double x_high = dial_input_for_uncertainty(0.85);
  for (int i = 0; i < 10; ++i) {
    memory.insert(make_example(id, {x_low + 0.001 * i}, 3));
    noisy.push_back(static_cast<std::size_t>(id++));
  }
  for (int i = 0; i < 10; ++i) {
    memory.insert(make_example(id, {x_high + 0.001 * i}, 3));
    noisy.push_back(static_cast<std::size_t>(id++));
  }
  const auto split = split_relabel_unlabeled(memory, noisy, m);
  EXPECT_EQ(split.relabel.size(), 10u);
  EXPECT_EQ(split.unlabeled.size(), 10u);
  for (std::size_t pos : split.relabel) EXPECT_LT(pos, 10u);       // low-uncertainty entries
  for (std::size_t pos : split.unlabeled) EXPECT_GE(pos, 10u);    // high-uncertainty entries
  for (double p : split.relabel_posterior) EXPECT_GE(p, 0.5);
}

TEST(SplitRelabelUnlabeled, SingletonNoisySetGoesToRelabel) {
  const Model m = separating_model();
  EpisodicMemory memory(4);
  memory.insert(make_example(0, {1.0, 0.0}, 1, 0));
  const std::vector<std::size_t> noisy = {0};
  const auto split = split_relabel_unlabeled(memory, noisy, m);
  EXPECT_EQ(split.relabel.size(), 1u);
  EXPECT_TRUE(split.unlabeled.empty());
  EXPECT_DOUBLE_EQ(split.relabel_posterior[0], 1.0);
}

TEST(PartitionMemory, TotalDisjointUnion) {
  auto rng = make_rng(107, "test");
  std::normal_distribution<double> gauss(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = make_model(3, 5, 5, rng);
    EpisodicMemory memory(30);
    std::uniform_int_distribution<int> label(0, 4);
    for (int i = 0; i < 30; ++i) {
      memory.insert(make_example(i, {gauss(rng), gauss(rng), gauss(rng)}, label(rng)));
    }
    const auto part = partition_memory(memory, m);
    std::set<std::size_t> seen(part.clean.begin(), part.clean.end());
    for (std::size_t pos : part.relabel) EXPECT_TRUE(seen.insert(pos).second);
    for (std::size_t pos : part.unlabeled) EXPECT_TRUE(seen.insert(pos).second);
    EXPECT_EQ(seen.size(), memory.size());
    EXPECT_EQ(part.relabel.size(), part.relabel_posterior.size());
  }
}

TEST(Relabel, FullTrustGivesModelPrediction) {
  const Model m = separating_model();
  const Example ex = make_example(0, {0.3, 0.0}, 1, 0);
  const Vec soft = relabel(ex, m, 1.0);
  const Vec probs = forward(m, ex.x).probs;
  for (std::size_t c = 0; c < soft.size(); ++c) EXPECT_DOUBLE_EQ(soft[c], probs[c]);
}

TEST(Relabel, NoTrustKeepsNoisyLabel) {
  const Model m = separating_model();
  const Example ex = make_example(0, {0.3, 0.0}, 1, 0);
  const Vec soft = relabel(ex, m, 0.0);
  EXPECT_DOUBLE_EQ(soft[1], 1.0);
  EXPECT_DOUBLE_EQ(soft[0], 0.0);
}

TEST(Relabel, HalfMixWithUniformPrediction) {
  const Model m = zero_model(2, 3, 10);  // uniform prediction
  const Example ex = make_example(0, {1.0, 1.0}, 3);
  const Vec soft = relabel(ex, m, 0.5);
  for (int c = 0; c < 10; ++c) {
    EXPECT_NEAR(soft[c], c == 3 ? 0.55 : 0.05, 1e-12);
  }
}

TEST(Relabel, AlwaysOnSimplex) {
  auto rng = make_rng(109, "test");
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::uniform_real_distribution<double> pu(0.0, 1.0);
  const Model m = make_model(2, 4, 6, rng);
  for (int trial = 0; trial < 200; ++trial) {
    const Example ex = make_example(trial, {gauss(rng), gauss(rng)}, trial % 6);
    const Vec soft = relabel(ex, m, pu(rng));
    double sum = 0.0;
    for (double v : soft) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-12);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Augmentations, ZeroParametersAreIdentity) {
  AugmentConfig cfg;
  cfg.sigma_weak = 0.0;
  cfg.dropout_p = 0.0;
  cfg.sigma_strong = 0.0;
  auto rng = make_rng(113, "test");
  const Vec x = {1.0, -2.0, 3.0};
  const Vec stds = {1.0, 1.0, 1.0};
  EXPECT_EQ(weak_aug(x, stds, cfg, rng), x);
  EXPECT_EQ(strong_aug(x, stds, cfg, rng), x);
}

TEST(Augmentations, WeakNoiseIsZeroMean) {
  AugmentConfig cfg;  // sigma_weak = 0.05
  auto rng = make_rng(127, "test");
  const Vec x = {2.0};
  const Vec stds = {1.0};
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += weak_aug(x, stds, cfg, rng)[0];
  const double mean = sum / n;
  // 3 sigma / sqrt(n) with per-draw sigma 0.05
  EXPECT_NEAR(mean, 2.0, 3.0 * 0.05 / std::sqrt(static_cast<double>(n)));
}

TEST(Augmentations, StrongDropoutZeroesExpectedFraction) {
  AugmentConfig cfg;
  cfg.sigma_strong = 0.0;  // isolate the dropout
  auto rng = make_rng(131, "test");
  const Vec x(50, 1.0);
  const Vec stds(50, 1.0);
  const int n = 1000;
  std::size_t zeros = 0;
  for (int i = 0; i < n; ++i) {
    for (double v : strong_aug(x, stds, cfg, rng)) {
      if (v == 0.0) ++zeros;
    }
  }
  const double fraction = static_cast<double>(zeros) / (50.0 * n);
  EXPECT_NEAR(fraction, 0.2, 3.0 * std::sqrt(0.2 * 0.8 / (50.0 * n)));
}

TEST(ConsistencyLoss, EmptyUnlabeledSetIsZero) {
  const Model m = separating_model();
  EpisodicMemory memory(4);
  memory.insert(make_example(0, {1.0, 0.0}, 0));
  auto rng = make_rng(137, "test");
  const Vec stds = {1.0, 1.0};
  const std::vector<std::size_t> empty;
  EXPECT_DOUBLE_EQ(consistency_loss(memory, empty, m, AugmentConfig{}, stds, rng), 0.0);
}

TEST(ConsistencyLoss, IdentityAugmentationsGiveZero) {
  const Model m = separating_model();
  EpisodicMemory memory(4);
  memory.insert(make_example(0, {1.0, 0.0}, 0));
  AugmentConfig cfg;
  cfg.sigma_weak = cfg.dropout_p = cfg.sigma_strong = 0.0;
  auto rng = make_rng(139, "test");
  const Vec stds = {1.0, 1.0};
  const std::vector<std::size_t> unlabeled = {0};
  EXPECT_DOUBLE_EQ(consistency_loss(memory, unlabeled, m, cfg, stds, rng), 0.0);
}

TEST(ConsistencyLoss, ConstantModelGivesZero) {
  const Model m = zero_model(2, 3, 4);  // uniform output everywhere
  EpisodicMemory memory(4);
  memory.insert(make_example(0, {1.0, 0.5}, 0));
  memory.insert(make_example(1, {-2.0, 0.25}, 1));
  auto rng = make_rng(149, "test");
  const Vec stds = {1.0, 1.0};
  const std::vector<std::size_t> unlabeled = {0, 1};
  EXPECT_NEAR(consistency_loss(memory, unlabeled, m, AugmentConfig{}, stds, rng), 0.0, 1e-12);
}

TEST(ClassificationLoss, EmptyRelabelReducesToCleanMean) {
  const Model m = separating_model();
  EpisodicMemory memory(4);
  memory.insert(make_example(0, {1.0, 0.0}, 0));
  memory.insert(make_example(1, {-1.0, 0.0}, 1));
  const std::vector<std::size_t> clean = {0, 1};
  const std::vector<std::size_t> none;
  const double expected =
      0.5 * (cross_entropy(forward(m, memory.entries()[0].example.x).probs, one_hot(2, 0)) +
             cross_entropy(forward(m, memory.entries()[1].example.x).probs, one_hot(2, 1)));
  EXPECT_NEAR(classification_loss(memory, clean, none, {}, m), expected, 1e-12);
}

TEST(ClassificationLoss, MixedSetsAverageOverUnion) {
  const Model m = separating_model();
  EpisodicMemory memory(4);
  memory.insert(make_example(0, {1.0, 0.0}, 0));
  memory.insert(make_example(1, {1.0, 0.0}, 1, 0));  // mislabeled, re-labeled below
  const std::vector<std::size_t> clean = {0};
  const std::vector<std::size_t> rel = {1};
  const std::vector<Vec> soft = {relabel(memory.entries()[1].example, m, 1.0)};
  const double a =
      cross_entropy(forward(m, memory.entries()[0].example.x).probs, one_hot(2, 0));
  const double b = cross_entropy(forward(m, memory.entries()[1].example.x).probs, soft[0]);
  EXPECT_NEAR(classification_loss(memory, clean, rel, soft, m), (a + b) / 2.0, 1e-12);
}

EpisodicMemory bimodal_memory(std::size_t n_clean, std::size_t n_flipped) {
  EpisodicMemory memory(n_clean + n_flipped);
  long long id = 0;
  for (std::size_t i = 0; i < n_clean; ++i) {
    const int cls = static_cast<int>(i % 2);
    const double sign = cls == 0 ? 1.0 : -1.0;
    memory.insert(make_example(id++, {sign * (1.0 + 0.01 * static_cast<double>(i)), 0.0}, cls));
  }
  for (std::size_t i = 0; i < n_flipped; ++i) {
    const int true_cls = static_cast<int>(i % 2);
    const double sign = true_cls == 0 ? 1.0 : -1.0;
    memory.insert(make_example(
        id++, {sign * (1.0 + 0.01 * static_cast<double>(i)), 0.0}, 1 - true_cls, true_cls));
  }
  return memory;
}

TEST(MemoryTrainEpoch, AllCleanMemoryMatchesPlainReplay) {
  // Identical per-class losses make the loss fit degenerate: everything lands
  // in the clean set and the full mode reduces to plain supervised replay.
  EpisodicMemory memory(20);
  for (int i = 0; i < 10; ++i) {
    memory.insert(make_example(2 * i, {1.0, 0.0}, 0));
    memory.insert(make_example(2 * i + 1, {-1.0, 0.0}, 1));
  }
  const Model start = separating_model();

  RobustTrainConfig full_cfg;
  full_cfg.mode = RobustMode::full;
  RobustTrainConfig none_cfg;
  none_cfg.mode = RobustMode::none;

  EpochAudit audit;
  auto s1 = make_rng(151, "shuffle");
  auto a1 = make_rng(151, "aug");
  const Model via_full = memory_train_epoch(memory, start, full_cfg, s1, a1, &audit);
  EXPECT_EQ(audit.n_clean, memory.size());
  EXPECT_EQ(audit.n_relabel, 0u);
  EXPECT_EQ(audit.n_unlabeled, 0u);

  auto s2 = make_rng(151, "shuffle");
  auto a2 = make_rng(151, "aug");
  const Model via_none = memory_train_epoch(memory, start, none_cfg, s2, a2, nullptr);
  EXPECT_EQ(via_full.w1.data, via_none.w1.data);
  EXPECT_EQ(via_full.w2.data, via_none.w2.data);
  EXPECT_EQ(via_full.b1, via_none.b1);
  EXPECT_EQ(via_full.b2, via_none.b2);
}

TEST(MemoryTrainEpoch, ZeroEtaMatchesRelabelOnlyTrajectory) {
  EpisodicMemory memory = bimodal_memory(24, 8);
  const Model start = separating_model();

  RobustTrainConfig full_cfg;
  full_cfg.mode = RobustMode::full;
  full_cfg.eta = 0.0;
  RobustTrainConfig relabel_cfg;
  relabel_cfg.mode = RobustMode::relabel_only;

  Model a = start, b = start;
  auto sa = make_rng(157, "shuffle");
  auto aa = make_rng(157, "aug");
  auto sb = make_rng(157, "shuffle");
  auto ab = make_rng(157, "aug");
  for (int epoch = 0; epoch < 3; ++epoch) {
    a = memory_train_epoch(memory, std::move(a), full_cfg, sa, aa, nullptr);
    b = memory_train_epoch(memory, std::move(b), relabel_cfg, sb, ab, nullptr);
  }
  EXPECT_EQ(a.w1.data, b.w1.data);
  EXPECT_EQ(a.b1, b.b1);
  EXPECT_EQ(a.w2.data, b.w2.data);
  EXPECT_EQ(a.b2, b.b2);
}

TEST(MemoryTrainEpoch, AuditSetsSumToMemory) {
  EpisodicMemory memory = bimodal_memory(20, 10);
  Model model = separating_model();
  RobustTrainConfig cfg;
  cfg.mode = RobustMode::full;
  auto srng = make_rng(163, "shuffle");
  auto arng = make_rng(163, "aug");
  for (int epoch = 0; epoch < 4; ++epoch) {
    EpochAudit audit;
    model = memory_train_epoch(memory, std::move(model), cfg, srng, arng, &audit);
    EXPECT_EQ(audit.n_clean + audit.n_relabel + audit.n_unlabeled, memory.size());
  }
}

TEST(MemoryTrainEpoch, RelabelPrecisionOnSeparableMemory) {
  // 30% flips under a converged separating model: the re-label set must get
  // argmax-correct soft labels at least 90% of the time.
  EpisodicMemory memory = bimodal_memory(70, 30);
  const Model m = separating_model();
  const auto part = partition_memory(memory, m);
  ASSERT_FALSE(part.relabel.empty());
  std::size_t correct = 0;
  for (std::size_t k = 0; k < part.relabel.size(); ++k) {
    const Example& ex = memory.entries()[part.relabel[k]].example;
    const Vec soft = relabel(ex, m, part.relabel_posterior[k]);
    const int arg = static_cast<int>(
        std::max_element(soft.begin(), soft.end()) - soft.begin());
    if (arg == ex.true_label) ++correct;
  }
  const double precision =
      static_cast<double>(correct) / static_cast<double>(part.relabel.size());
  EXPECT_GE(precision, 0.9);
}

}  // namespace
}  // namespace puridiver
