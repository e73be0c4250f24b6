#pragma once

// Two-layer softmax classifier with manual backpropagation. Exposes the
// post-activation hidden layer (the representation vector) and the final
// fully-connected weights, which the memory scoring policies consume.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "puridiver/errors.hpp"

namespace puridiver {

using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Floor inside log; keeps losses finite on saturated predictions.
inline constexpr double kProbFloor = 1e-12;

struct ForwardResult {
  Vec representation;  // post-ReLU hidden activations (H)
  Vec logits;          // C
  Vec probs;           // softmax(logits), a distribution (C)
};

struct Model {
  int input_dim = 0;   // D
  int hidden_dim = 0;  // H
  int num_classes = 0; // C
  Mat w1;              // H x D
  Vec b1;              // H
  Mat w2;              // C x H
  Vec b2;              // C
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline Model make_model(int input_dim, int hidden_dim, int num_classes,
                        std::mt19937_64& rng) {
  if (input_dim < 1 || hidden_dim < 1 || num_classes < 2) {
    throw ConfigError("make_model: need D >= 1, H >= 1, C >= 2");
  }
  Model m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.num_classes = num_classes;
  m.w1 = Mat(hidden_dim, input_dim);
  m.b1.assign(hidden_dim, 0.0);
  m.w2 = Mat(num_classes, hidden_dim);
  m.b2.assign(num_classes, 0.0);

  const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  std::uniform_real_distribution<double> u1(-bound1, bound1);
  std::uniform_real_distribution<double> u2(-bound2, bound2);
  for (double& w : m.w1.data) w = u1(rng);
  for (double& b : m.b1) b = u1(rng);
  for (double& w : m.w2.data) w = u2(rng);
  for (double& b : m.b2) b = u2(rng);
  return m;
}

inline Vec softmax(const Vec& logits) {
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  Vec probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

inline ForwardResult forward(const Model& m, std::span<const double> x) {
  if (static_cast<int>(x.size()) != m.input_dim) {
    throw std::invalid_argument("forward: input has length " + std::to_string(x.size()) +
                                ", model expects " + std::to_string(m.input_dim));
  }
  ForwardResult out;
  out.representation.assign(m.hidden_dim, 0.0);
  for (int h = 0; h < m.hidden_dim; ++h) {
    double z = m.b1[h];
    for (int d = 0; d < m.input_dim; ++d) z += m.w1(h, d) * x[d];
    out.representation[h] = z > 0.0 ? z : 0.0;
  }
  out.logits.assign(m.num_classes, 0.0);
  for (int c = 0; c < m.num_classes; ++c) {
    double z = m.b2[c];
    for (int h = 0; h < m.hidden_dim; ++h) z += m.w2(c, h) * out.representation[h];
    out.logits[c] = z;
  }
  out.probs = softmax(out.logits);
  return out;
}

inline Vec one_hot(int num_classes, int c) {
  if (c < 0 || c >= num_classes) {
    throw std::invalid_argument("one_hot: class " + std::to_string(c) + " out of range");
  }
  Vec v(num_classes, 0.0);
  v[c] = 1.0;
  return v;
}

// -sum_c target[c] * log(probs[c]), in nats. Supports soft targets.
inline double cross_entropy(std::span<const double> probs, std::span<const double> target) {
  if (probs.size() != target.size()) {
    throw std::invalid_argument("cross_entropy: probs/target size mismatch");
  }
  double loss = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    if (target[c] != 0.0) {
      loss -= target[c] * std::log(std::max(probs[c], kProbFloor));
    }
  }
  return loss;
}

// 1 - max_c probs[c]; in [0, 1 - 1/C] for a valid distribution.
inline double predictive_uncertainty(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("predictive_uncertainty: empty distribution");
  return 1.0 - *std::max_element(probs.begin(), probs.end());
}

struct TrainExample {
  std::span<const double> x;
  std::span<const double> target;  // distribution over classes
  double weight = 1.0;
  long long id = -1;
};

struct Gradients {
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;

  explicit Gradients(const Model& m)
      : w1(m.hidden_dim, m.input_dim), b1(m.hidden_dim, 0.0),
        w2(m.num_classes, m.hidden_dim), b2(m.num_classes, 0.0) {}
};

namespace detail {

// Backprop from dL/dlogits, scaled. Shared by the cross-entropy and
// probability-seeded paths.
inline void backprop_from_logits(const Model& m, std::span<const double> x,
                                 const ForwardResult& fwd, const Vec& dlogits,
                                 double scale, Gradients& g, long long id) {
  for (double v : dlogits) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite gradient at example id " + std::to_string(id));
    }
  }
  Vec dhidden(m.hidden_dim, 0.0);
  for (int c = 0; c < m.num_classes; ++c) {
    const double dc = scale * dlogits[c];
    g.b2[c] += dc;
    for (int h = 0; h < m.hidden_dim; ++h) {
      g.w2(c, h) += dc * fwd.representation[h];
      dhidden[h] += m.w2(c, h) * dlogits[c];
    }
  }
  for (int h = 0; h < m.hidden_dim; ++h) {
    if (fwd.representation[h] <= 0.0) continue;  // ReLU gate
    const double dh = scale * dhidden[h];
    g.b1[h] += dh;
    for (int d = 0; d < m.input_dim; ++d) g.w1(h, d) += dh * x[d];
  }
}

}  // namespace detail

// Gradient of cross_entropy(softmax(logits), target): dlogits = probs - target.
inline void accumulate_ce_gradient(const Model& m, std::span<const double> x,
                                   const ForwardResult& fwd, std::span<const double> target,
                                   double scale, Gradients& g, long long id = -1) {
  Vec dlogits(m.num_classes);
  for (int c = 0; c < m.num_classes; ++c) dlogits[c] = fwd.probs[c] - target[c];
  detail::backprop_from_logits(m, x, fwd, dlogits, scale, g, id);
}

// Backprop an arbitrary dL/dprobs seed through the softmax Jacobian.
inline void accumulate_prob_gradient(const Model& m, std::span<const double> x,
                                     const ForwardResult& fwd, std::span<const double> dprobs,
                                     double scale, Gradients& g, long long id = -1) {
  double dot = 0.0;
  for (int c = 0; c < m.num_classes; ++c) dot += dprobs[c] * fwd.probs[c];
  Vec dlogits(m.num_classes);
  for (int c = 0; c < m.num_classes; ++c) dlogits[c] = fwd.probs[c] * (dprobs[c] - dot);
  detail::backprop_from_logits(m, x, fwd, dlogits, scale, g, id);
}

inline void apply_gradients(Model& m, const Gradients& g, double lr) {
  for (std::size_t i = 0; i < m.w1.data.size(); ++i) m.w1.data[i] -= lr * g.w1.data[i];
  for (std::size_t i = 0; i < m.b1.size(); ++i) m.b1[i] -= lr * g.b1[i];
  for (std::size_t i = 0; i < m.w2.data.size(); ++i) m.w2.data[i] -= lr * g.w2.data[i];
  for (std::size_t i = 0; i < m.b2.size(); ++i) m.b2[i] -= lr * g.b2[i];
}

// Mean weighted cross-entropy of the batch under the current parameters.
inline double batch_mean_loss(const Model& m, std::span<const TrainExample> batch) {
  if (batch.empty()) throw std::invalid_argument("batch_mean_loss: empty batch");
  double total = 0.0;
  for (const TrainExample& ex : batch) {
    total += ex.weight * cross_entropy(forward(m, ex.x).probs, ex.target);
  }
  return total / static_cast<double>(batch.size());
}

// One SGD step on the mean weighted loss (1/n) * sum_i w_i * CE_i.
inline Model sgd_step(Model m, std::span<const TrainExample> batch, double lr) {
  if (batch.empty()) throw std::invalid_argument("sgd_step: empty batch");
  if (!(lr >= 0.0)) throw std::invalid_argument("sgd_step: negative learning rate");
  Gradients g(m);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const TrainExample& ex : batch) {
    const ForwardResult fwd = forward(m, ex.x);
    accumulate_ce_gradient(m, ex.x, fwd, ex.target, scale * ex.weight, g, ex.id);
  }
  apply_gradients(m, g, lr);
  return m;
}

}  // namespace puridiver
