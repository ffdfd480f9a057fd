#pragma once

// Binary probes trained on one model's representations and transferred to
// another's. Two architectures: logistic regression and a one-hidden-layer
// ReLU MLP, both trained by full-batch gradient descent on mean binary
// cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "reef/error.hpp"
#include "reef/matrix.hpp"
#include "reef/rng.hpp"
#include "reef/tensor_store.hpp"

namespace reef {

struct SplitRatio {
  std::uint32_t train = 4;
  std::uint32_t test = 1;
};

struct ProbeDataset {
  Matrix train_x;
  std::vector<int> train_y;
  Matrix test_x;
  std::vector<int> test_y;
  SplitRatio ratio;
  // Row indices into the stacked [pos; neg] sample list.
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> test_index;
};

namespace detail {

inline Matrix gather_rows(const Matrix& pos, const Matrix& neg, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), pos.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t i = idx[r];
    const auto src = i < pos.rows() ? pos.row(i) : neg.row(i - pos.rows());
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

inline std::vector<int> labels_for(const std::vector<std::size_t>& idx, std::size_t n_pos) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (std::size_t i : idx) y.push_back(i < n_pos ? 1 : 0);
  return y;
}

}  // namespace detail

// Positives are labelled 1, negatives 0. Each class is shuffled and split
// train:test by `ratio` separately, so both splits stay class-balanced.
inline ProbeDataset build_probe_dataset(const ActivationMatrix& pos, const ActivationMatrix& neg, SplitRatio ratio,
                                        std::uint64_t seed) {
  if (pos.p() != neg.p()) {
    throw Error("dimension mismatch: pos p=" + std::to_string(pos.p()) + " vs neg p=" + std::to_string(neg.p()));
  }
  if (ratio.train == 0 || ratio.test == 0) throw Error("split ratio parts must be positive");
  const double train_frac = static_cast<double>(ratio.train) / static_cast<double>(ratio.train + ratio.test);

  Rng rng(seed);
  ProbeDataset d;
  d.ratio = ratio;
  const std::size_t n_pos = pos.m();
  const auto split_class = [&](std::size_t offset, std::size_t count) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), offset);
    rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(count)));
    n_train = std::clamp<std::size_t>(n_train, 1, count - 1);
    d.train_index.insert(d.train_index.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    d.test_index.insert(d.test_index.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  };
  split_class(0, n_pos);
  split_class(n_pos, neg.m());
  rng.shuffle(d.train_index);
  rng.shuffle(d.test_index);

  d.train_x = detail::gather_rows(pos.data(), neg.data(), d.train_index);
  d.test_x = detail::gather_rows(pos.data(), neg.data(), d.test_index);
  d.train_y = detail::labels_for(d.train_index, n_pos);
  d.test_y = detail::labels_for(d.test_index, n_pos);
  return d;
}

// Re-applies an existing split to another model's representations of the
// same samples. The new matrices may have a different width.
inline ProbeDataset apply_split(const ProbeDataset& split, const ActivationMatrix& pos, const ActivationMatrix& neg) {
  if (pos.p() != neg.p()) {
    throw Error("dimension mismatch: pos p=" + std::to_string(pos.p()) + " vs neg p=" + std::to_string(neg.p()));
  }
  const std::size_t total = pos.m() + neg.m();
  for (std::size_t i : split.train_index)
    if (i >= total) throw Error("split index out of range");
  for (std::size_t i : split.test_index)
    if (i >= total) throw Error("split index out of range");
  ProbeDataset d = split;
  d.train_x = detail::gather_rows(pos.data(), neg.data(), split.train_index);
  d.test_x = detail::gather_rows(pos.data(), neg.data(), split.test_index);
  d.train_y = detail::labels_for(split.train_index, pos.m());
  d.test_y = detail::labels_for(split.test_index, pos.m());
  return d;
}

enum class ProbeArch { Linear, Mlp };

inline constexpr std::size_t kMlpHidden = 64;

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::uint32_t epochs = 200;
  double learning_rate = 0.01;
  // Gradient steps actually taken; fewer than `epochs` when the loss rose.
  std::uint32_t epochs_run = 0;

  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct ProbeModel {
  ProbeArch arch = ProbeArch::Linear;
  std::size_t input_dim = 0;
  // Linear: weights (p) and bias. MLP: hidden_weights (h×p), hidden_bias (h),
  // weights (h) and bias for the output unit.
  Matrix hidden_weights;
  std::vector<double> hidden_bias;
  std::vector<double> weights;
  double bias = 0.0;
  TrainingMeta meta;

  friend bool operator==(const ProbeModel&, const ProbeModel&) = default;
};

namespace detail {

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Binary cross-entropy from the logit, stable for large |z|.
inline double bce_from_logit(double z, int y) noexcept {
  return std::max(z, 0.0) - z * static_cast<double>(y) + std::log1p(std::exp(-std::abs(z)));
}

inline double hidden_unit(const ProbeModel& p, std::span<const double> x, std::size_t k) noexcept {
  return std::max(0.0, dot(p.hidden_weights.row(k), x) + p.hidden_bias[k]);
}

inline double probe_logit(const ProbeModel& p, std::span<const double> x) {
  if (p.arch == ProbeArch::Linear) return dot(p.weights, x) + p.bias;
  double z = p.bias;
  for (std::size_t k = 0; k < p.hidden_bias.size(); ++k) z += p.weights[k] * hidden_unit(p, x, k);
  return z;
}

// Mean loss and its gradient, stored in a ProbeModel-shaped accumulator.
inline double loss_and_gradient(const ProbeModel& p, const Matrix& x, const std::vector<int>& y, ProbeModel& grad) {
  const std::size_t n = x.rows();
  const std::size_t h = p.hidden_bias.size();
  grad.hidden_weights = Matrix(p.hidden_weights.rows(), p.hidden_weights.cols());
  grad.hidden_bias.assign(h, 0.0);
  grad.weights.assign(p.weights.size(), 0.0);
  grad.bias = 0.0;
  double loss = 0.0;
  std::vector<double> act(h);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    double z = p.bias;
    if (p.arch == ProbeArch::Linear) {
      z += dot(p.weights, xi);
    } else {
      for (std::size_t k = 0; k < h; ++k) {
        act[k] = hidden_unit(p, xi, k);
        z += p.weights[k] * act[k];
      }
    }
    loss += bce_from_logit(z, y[i]);
    const double dz = sigmoid(z) - static_cast<double>(y[i]);
    grad.bias += dz;
    if (p.arch == ProbeArch::Linear) {
      for (std::size_t j = 0; j < xi.size(); ++j) grad.weights[j] += dz * xi[j];
    } else {
      for (std::size_t k = 0; k < h; ++k) {
        grad.weights[k] += dz * act[k];
        if (act[k] <= 0.0) continue;
        const double dh = dz * p.weights[k];
        grad.hidden_bias[k] += dh;
        auto gw = grad.hidden_weights.row(k);
        for (std::size_t j = 0; j < xi.size(); ++j) gw[j] += dh * xi[j];
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  grad.bias *= inv_n;
  for (double& g : grad.weights) g *= inv_n;
  for (double& g : grad.hidden_bias) g *= inv_n;
  for (double& g : grad.hidden_weights.values()) g *= inv_n;
  return loss * inv_n;
}

inline void descend(ProbeModel& p, const ProbeModel& grad, double lr) {
  p.bias -= lr * grad.bias;
  for (std::size_t k = 0; k < p.weights.size(); ++k) p.weights[k] -= lr * grad.weights[k];
  for (std::size_t k = 0; k < p.hidden_bias.size(); ++k) p.hidden_bias[k] -= lr * grad.hidden_bias[k];
  auto w = p.hidden_weights.values();
  auto g = grad.hidden_weights.values();
  for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
}

}  // namespace detail

// Full-batch gradient descent. Training stops early, keeping the previous
// parameters, as soon as a step would raise the loss. A non-finite loss
// throws with the epoch number.
inline ProbeModel train_probe(const ProbeDataset& d, ProbeArch arch, TrainingMeta hyper) {
  const std::size_t n = d.train_x.rows();
  const std::size_t p = d.train_x.cols();
  if (n == 0 || d.train_y.size() != n) throw Error("probe dataset: train rows and labels disagree");
  for (int y : d.train_y)
    if (y != 0 && y != 1) throw Error("probe labels must be 0 or 1");
  if (!(hyper.learning_rate > 0.0)) throw Error("learning rate must be > 0");

  ProbeModel model;
  model.arch = arch;
  model.input_dim = p;
  Rng rng(hyper.seed);
  if (arch == ProbeArch::Linear) {
    model.weights.assign(p, 0.0);
  } else {
    model.hidden_weights = Matrix(kMlpHidden, p);
    const double s1 = std::sqrt(2.0 / static_cast<double>(p));
    for (double& w : model.hidden_weights.values()) w = s1 * rng.normal();
    model.hidden_bias.assign(kMlpHidden, 0.0);
    model.weights.resize(kMlpHidden);
    const double s2 = std::sqrt(1.0 / static_cast<double>(kMlpHidden));
    for (double& w : model.weights) w = s2 * rng.normal();
  }

  hyper.epochs_run = 0;
  ProbeModel grad;
  ProbeModel previous = model;
  double previous_loss = std::numeric_limits<double>::infinity();
  for (std::uint32_t epoch = 0;; ++epoch) {
    const double loss = detail::loss_and_gradient(model, d.train_x, d.train_y, grad);
    if (!std::isfinite(loss)) throw Error("divergence: non-finite loss at epoch " + std::to_string(epoch));
    if (loss > previous_loss) {
      model = std::move(previous);
      break;
    }
    if (epoch == hyper.epochs) break;
    previous = model;
    previous_loss = loss;
    detail::descend(model, grad, hyper.learning_rate);
    hyper.epochs_run = epoch + 1;
  }
  model.meta = hyper;
  return model;
}

inline double probe_score(const ProbeModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim) {
    throw Error("input-dim mismatch: probe expects " + std::to_string(model.input_dim) + ", got " +
                std::to_string(x.size()));
  }
  return detail::sigmoid(detail::probe_logit(model, x));
}

// Accuracy at threshold 0.5.
inline double eval_probe(const ProbeModel& model, const Matrix& x, const std::vector<int>& labels) {
  if (x.cols() != model.input_dim) {
    throw Error("input-dim mismatch: probe expects " + std::to_string(model.input_dim) + ", got " +
                std::to_string(x.cols()));
  }
  if (x.rows() != labels.size()) throw Error("label count does not match rows");
  if (labels.empty()) throw Error("no samples to evaluate");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const int predicted = probe_score(model, x.row(i)) >= 0.5 ? 1 : 0;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

inline double eval_probe(const ProbeModel& model, const ActivationMatrix& x, const std::vector<int>& labels) {
  return eval_probe(model, x.data(), labels);
}

// Probes live in a REEF container. dataset_tag carries the arch tag and
// training metadata; the payload packs parameters:
//   linear: 1×(p+1)      [w_0..w_{p-1}, b]
//   mlp:    (h+1)×(p+2)  row k<h: [W1_k, b1_k, w2_k]; row h: [b2, 0, ...]
inline void save_probe(const ProbeModel& model, const std::filesystem::path& path) {
  const std::size_t p = model.input_dim;
  Matrix packed;
  if (model.arch == ProbeArch::Linear) {
    packed = Matrix(1, p + 1);
    for (std::size_t j = 0; j < p; ++j) packed(0, j) = model.weights[j];
    packed(0, p) = model.bias;
  } else {
    const std::size_t h = model.hidden_bias.size();
    packed = Matrix(h + 1, p + 2);
    for (std::size_t k = 0; k < h; ++k) {
      for (std::size_t j = 0; j < p; ++j) packed(k, j) = model.hidden_weights(k, j);
      packed(k, p) = model.hidden_bias[k];
      packed(k, p + 1) = model.weights[k];
    }
    packed(h, 0) = model.bias;
  }
  char lr[32];
  std::snprintf(lr, sizeof lr, "%.17g", model.meta.learning_rate);
  std::ostringstream tag;
  tag << "probe arch=" << (model.arch == ProbeArch::Linear ? "linear" : "mlp") << " seed=" << model.meta.seed
      << " epochs=" << model.meta.epochs << " lr=" << lr << " epochs_run=" << model.meta.epochs_run;
  write_tensor(path, Tensor{"probe", tag.str(), 0, std::move(packed)});
}

inline ProbeModel load_probe(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  std::istringstream tag(t.dataset_tag);
  std::string word;
  tag >> word;
  if (word != "probe") throw Error("not a probe file: " + path.string());
  ProbeModel model;
  bool have_arch = false;
  while (tag >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = word.substr(0, eq);
    const std::string value = word.substr(eq + 1);
    if (key == "arch") {
      if (value == "linear") {
        model.arch = ProbeArch::Linear;
      } else if (value == "mlp") {
        model.arch = ProbeArch::Mlp;
      } else {
        throw Error("unknown probe arch '" + value + "'");
      }
      have_arch = true;
    } else if (key == "seed") {
      model.meta.seed = std::stoull(value);
    } else if (key == "epochs") {
      model.meta.epochs = static_cast<std::uint32_t>(std::stoul(value));
    } else if (key == "lr") {
      model.meta.learning_rate = std::stod(value);
    } else if (key == "epochs_run") {
      model.meta.epochs_run = static_cast<std::uint32_t>(std::stoul(value));
    }
  }
  if (!have_arch) throw Error("probe file lacks an arch tag");
  const Matrix& packed = t.data;
  if (model.arch == ProbeArch::Linear) {
    if (packed.rows() != 1 || packed.cols() < 2) throw Error("linear probe payload has wrong shape");
    model.input_dim = packed.cols() - 1;
    model.weights.assign(packed.row(0).begin(), packed.row(0).end() - 1);
    model.bias = packed(0, model.input_dim);
  } else {
    if (packed.rows() < 2 || packed.cols() < 3) throw Error("mlp probe payload has wrong shape");
    const std::size_t h = packed.rows() - 1;
    const std::size_t p = packed.cols() - 2;
    model.input_dim = p;
    model.hidden_weights = Matrix(h, p);
    model.hidden_bias.resize(h);
    model.weights.resize(h);
    for (std::size_t k = 0; k < h; ++k) {
      for (std::size_t j = 0; j < p; ++j) model.hidden_weights(k, j) = packed(k, j);
      model.hidden_bias[k] = packed(k, p);
      model.weights[k] = packed(k, p + 1);
    }
    model.bias = packed(h, 0);
  }
  return model;
}

}  // namespace reef
