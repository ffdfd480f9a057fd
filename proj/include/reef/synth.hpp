#pragma once

// Seeded synthetic model families for desk-scale fingerprinting experiments.
//
// A "model" is a stack of layers h_l = tanh(h_{l-1} · W_l) applied to latent
// inputs Z, with W_l ~ N(0, 1/fan_in). The derived model reuses the victim's
// weights perturbed by relative Gaussian drift and sees the same Z; the
// unrelated model draws fresh weights and a fresh latent Z'.
//
// Sample i carries label i % 2. When class_shift > 0 the victim/derived latent
// rows are offset by ±class_shift/2 along a seeded unit direction, giving the
// probe module something to learn. Z' has no class structure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "reef/error.hpp"
#include "reef/matrix.hpp"
#include "reef/rng.hpp"
#include "reef/tensor_store.hpp"
#include "reef/transforms.hpp"

namespace reef {

struct FamilyConfig {
  std::size_t m = 300;
  std::size_t d_latent = 32;
  std::vector<std::size_t> layer_dims{64, 64, 64};
  // 0 means layer_dims.size(); a single width with n_layers > 1 is repeated.
  std::size_t n_layers = 0;
  double drift_tau = 0.1;
  std::uint64_t seed = 0;
  double class_shift = 0.0;

  [[nodiscard]] std::vector<std::size_t> widths() const {
    const std::size_t n = n_layers == 0 ? layer_dims.size() : n_layers;
    if (layer_dims.size() == 1 && n > 1) return std::vector<std::size_t>(n, layer_dims.front());
    if (layer_dims.size() != n) {
      throw Error("n_layers=" + std::to_string(n) + " but " + std::to_string(layer_dims.size()) + " layer widths");
    }
    return layer_dims;
  }

  void validate() const {
    if (m < 2) throw Error("m must be ≥ 2");
    if (d_latent == 0) throw Error("d_latent must be positive");
    const auto w = widths();
    if (w.empty()) throw Error("family needs at least one layer");
    for (std::size_t d : w)
      if (d == 0) throw Error("layer widths must be positive");
    if (!(drift_tau >= 0.0) || !std::isfinite(drift_tau)) throw Error("drift_tau must be ≥ 0");
    if (!(class_shift >= 0.0) || !std::isfinite(class_shift)) throw Error("class_shift must be ≥ 0");
  }
};

struct SyntheticFamily {
  std::vector<ActivationMatrix> victim;
  std::vector<ActivationMatrix> derived;
  std::vector<ActivationMatrix> unrelated;
  std::vector<int> labels;
  FamilyConfig provenance;
};

namespace detail {

enum SynthStream : std::uint64_t { kLatent = 0, kVictimWeights = 1, kDrift = 2, kUnrelatedLatent = 3,
                                   kUnrelatedWeights = 4, kClassDirection = 5 };

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double scale, std::uint64_t seed) {
  Rng rng(seed);
  Matrix out(rows, cols);
  for (double& v : out.values()) v = scale * rng.normal();
  return out;
}

// fan_in × fan_out weights per layer.
inline std::vector<Matrix> layer_weights(std::size_t d_latent, const std::vector<std::size_t>& widths,
                                         std::uint64_t seed) {
  std::vector<Matrix> ws;
  std::size_t fan_in = d_latent;
  for (std::size_t l = 0; l < widths.size(); ++l) {
    ws.push_back(gaussian_matrix(fan_in, widths[l], 1.0 / std::sqrt(static_cast<double>(fan_in)), mix_seed(seed, l)));
    fan_in = widths[l];
  }
  return ws;
}

inline std::vector<Matrix> forward_layers(const Matrix& z, const std::vector<Matrix>& ws) {
  std::vector<Matrix> out;
  const Matrix* input = &z;
  for (const Matrix& w : ws) {
    Matrix h(input->rows(), w.cols());
    for (std::size_t i = 0; i < input->rows(); ++i) {
      for (std::size_t k = 0; k < input->cols(); ++k) {
        const double a = (*input)(i, k);
        for (std::size_t j = 0; j < w.cols(); ++j) h(i, j) += a * w(k, j);
      }
    }
    for (double& v : h.values()) v = std::tanh(v);
    out.push_back(std::move(h));
    input = &out.back();
  }
  return out;
}

inline std::vector<ActivationMatrix> wrap_layers(std::vector<Matrix> layers, const std::string& model,
                                                 const std::string& tag) {
  std::vector<ActivationMatrix> out;
  out.reserve(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.emplace_back(model, static_cast<std::uint32_t>(l), std::move(layers[l]), tag);
  }
  return out;
}

}  // namespace detail

inline SyntheticFamily gen_family(const FamilyConfig& cfg) {
  cfg.validate();
  const auto widths = cfg.widths();
  const std::uint64_t s = cfg.seed;

  Matrix z = detail::gaussian_matrix(cfg.m, cfg.d_latent, 1.0, mix_seed(s, detail::kLatent));
  std::vector<int> labels(cfg.m);
  for (std::size_t i = 0; i < cfg.m; ++i) labels[i] = static_cast<int>(i % 2);
  if (cfg.class_shift > 0.0) {
    Matrix dir = detail::gaussian_matrix(1, cfg.d_latent, 1.0, mix_seed(s, detail::kClassDirection));
    const double norm = std::sqrt(dot(dir.row(0), dir.row(0)));
    for (std::size_t i = 0; i < cfg.m; ++i) {
      const double sign = labels[i] == 1 ? 0.5 : -0.5;
      for (std::size_t k = 0; k < cfg.d_latent; ++k) z(i, k) += sign * cfg.class_shift * dir(0, k) / norm;
    }
  }

  const auto victim_w = detail::layer_weights(cfg.d_latent, widths, mix_seed(s, detail::kVictimWeights));
  std::vector<Matrix> derived_w;
  derived_w.reserve(victim_w.size());
  for (std::size_t l = 0; l < victim_w.size(); ++l) {
    derived_w.push_back(add_noise(victim_w[l], cfg.drift_tau, mix_seed(mix_seed(s, detail::kDrift), l)));
  }

  const Matrix z_other = detail::gaussian_matrix(cfg.m, cfg.d_latent, 1.0, mix_seed(s, detail::kUnrelatedLatent));
  const auto unrelated_w = detail::layer_weights(cfg.d_latent, widths, mix_seed(s, detail::kUnrelatedWeights));

  const std::string tag = "synth(seed=" + std::to_string(s) + ",m=" + std::to_string(cfg.m) + ")";
  SyntheticFamily fam;
  fam.victim = detail::wrap_layers(detail::forward_layers(z, victim_w), "victim", tag);
  fam.derived = detail::wrap_layers(detail::forward_layers(z, derived_w), "derived", tag);
  fam.unrelated = detail::wrap_layers(detail::forward_layers(z_other, unrelated_w), "unrelated", tag);
  fam.labels = std::move(labels);
  fam.provenance = cfg;
  return fam;
}

enum class VariantOp { Permute, Scale, Subsample, Noise };

// Applies one transform to every derived layer; the victim is untouched.
// `param` is the scale factor, keep ratio or noise tau (ignored for Permute).
inline SyntheticFamily derive_variant(const SyntheticFamily& fam, VariantOp op, double param, std::uint64_t seed) {
  SyntheticFamily out = fam;
  out.derived.clear();
  for (std::size_t l = 0; l < fam.derived.size(); ++l) {
    const ActivationMatrix& src = fam.derived[l];
    const std::uint64_t layer_seed = mix_seed(seed, l);
    switch (op) {
      case VariantOp::Permute:
        out.derived.push_back(permute_columns(src, std::nullopt, layer_seed));
        break;
      case VariantOp::Scale:
        out.derived.push_back(scale_matrix(src, param));
        break;
      case VariantOp::Subsample:
        out.derived.push_back(subsample_columns(src, param, layer_seed));
        break;
      case VariantOp::Noise:
        out.derived.push_back(add_noise(src, param, layer_seed));
        break;
    }
  }
  return out;
}

// Rows of `x` whose label is 1 and 0, respectively.
inline std::pair<ActivationMatrix, ActivationMatrix> split_by_label(const ActivationMatrix& x,
                                                                    const std::vector<int>& labels) {
  if (labels.size() != x.m()) throw Error("label count does not match rows");
  std::vector<double> pos;
  std::vector<double> neg;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < x.m(); ++i) {
    auto& dst = labels[i] == 1 ? pos : neg;
    if (labels[i] == 1) ++n_pos;
    dst.insert(dst.end(), x.data().row(i).begin(), x.data().row(i).end());
  }
  return {x.with_data(Matrix(n_pos, x.p(), std::move(pos)), x.model_id()),
          x.with_data(Matrix(x.m() - n_pos, x.p(), std::move(neg)), x.model_id())};
}

// Writes <role>_L<idx>.reef for every layer, a <role>.txt manifest per
// member (one file per line, in layer order) and labels.txt.
inline void export_family(const SyntheticFamily& fam, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto dump = [&](const std::vector<ActivationMatrix>& layers, const std::string& role) {
    std::string manifest;
    for (const auto& a : layers) {
      const std::string name = role + "_L" + std::to_string(a.layer_index()) + ".reef";
      save_activations(a, dir / name);
      manifest += name + "\n";
    }
    atomic_write(dir / (role + ".txt"), manifest);
  };
  dump(fam.victim, "victim");
  dump(fam.derived, "derived");
  dump(fam.unrelated, "unrelated");
  std::string labels;
  for (int y : fam.labels) labels += std::to_string(y) + "\n";
  atomic_write(dir / "labels.txt", labels);
}

}  // namespace reef
