#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "reef/error.hpp"
#include "reef/matrix.hpp"
#include "reef/rng.hpp"
#include "reef/tensor_store.hpp"

namespace reef {

// Bijection on {0, ..., p-1}.
class Permutation {
 public:
  explicit Permutation(std::vector<std::size_t> mapping) : mapping_(std::move(mapping)) {
    std::vector<bool> seen(mapping_.size(), false);
    for (std::size_t v : mapping_) {
      if (v >= mapping_.size() || seen[v]) throw Error("permutation is not a bijection");
      seen[v] = true;
    }
  }

  static Permutation identity(std::size_t p) {
    std::vector<std::size_t> m(p);
    std::iota(m.begin(), m.end(), std::size_t{0});
    return Permutation(std::move(m));
  }

  static Permutation random(std::size_t p, std::uint64_t seed) {
    std::vector<std::size_t> m(p);
    std::iota(m.begin(), m.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(m);
    return Permutation(std::move(m));
  }

  [[nodiscard]] Permutation inverse() const {
    std::vector<std::size_t> inv(mapping_.size());
    for (std::size_t j = 0; j < mapping_.size(); ++j) inv[mapping_[j]] = j;
    return Permutation(std::move(inv));
  }

  [[nodiscard]] std::size_t size() const noexcept { return mapping_.size(); }
  [[nodiscard]] std::size_t operator[](std::size_t j) const noexcept { return mapping_[j]; }
  [[nodiscard]] const std::vector<std::size_t>& mapping() const noexcept { return mapping_; }

 private:
  std::vector<std::size_t> mapping_;
};

// Output column j is input column perm[j].
inline Matrix permute_columns(const Matrix& x, const Permutation& perm) {
  if (perm.size() != x.cols()) {
    throw Error("size mismatch: permutation of " + std::to_string(perm.size()) + " for " +
                std::to_string(x.cols()) + " columns");
  }
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, perm[j]);
  return out;
}

// Applies `perm`, or a uniformly random permutation drawn from `seed` when
// `perm` is absent.
inline ActivationMatrix permute_columns(const ActivationMatrix& x, const std::optional<Permutation>& perm,
                                        std::optional<std::uint64_t> seed = std::nullopt) {
  if (!perm && !seed) throw Error("permute_columns needs a permutation or a seed");
  const Permutation p = perm ? *perm : Permutation::random(x.p(), *seed);
  std::string tag = x.model_id() + "|permute";
  if (!perm) tag += "(seed=" + std::to_string(*seed) + ")";
  return x.with_data(permute_columns(x.data(), p), std::move(tag));
}

inline Matrix scale_matrix(const Matrix& x, double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw Error("scale factor must be > 0, got " + std::to_string(c));
  Matrix out = x;
  for (double& v : out.values()) v *= c;
  return out;
}

inline ActivationMatrix scale_matrix(const ActivationMatrix& x, double c) {
  return x.with_data(scale_matrix(x.data(), c), x.model_id() + "|scale(" + std::to_string(c) + ")");
}

// Keeps max(1, floor(keep_ratio·p)) columns chosen uniformly at random, in
// their original order.
inline std::vector<std::size_t> sample_columns(std::size_t p, double keep_ratio, std::uint64_t seed) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw Error("keep_ratio must be in (0,1], got " + std::to_string(keep_ratio));
  }
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(keep_ratio * static_cast<double>(p))));
  std::vector<std::size_t> idx(p);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (keep == p) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(p - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline Matrix select_columns(const Matrix& x, const std::vector<std::size_t>& cols) {
  Matrix out(x.rows(), cols.size());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = x(i, cols[j]);
  return out;
}

inline ActivationMatrix subsample_columns(const ActivationMatrix& x, double keep_ratio, std::uint64_t seed) {
  const auto cols = sample_columns(x.p(), keep_ratio, seed);
  return x.with_data(select_columns(x.data(), cols), x.model_id() + "|subsample(" + std::to_string(keep_ratio) + ")");
}

// Population standard deviation over all entries.
inline double entry_stddev(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

// X + tau·std(X)·N with N seeded standard Gaussian. tau = 0 returns X unchanged.
inline Matrix add_noise(const Matrix& x, double tau, std::uint64_t seed) {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw Error("tau must be ≥ 0");
  if (tau == 0.0) return x;
  const double scale = tau * entry_stddev(x.values());
  Rng rng(seed);
  Matrix out = x;
  for (double& v : out.values()) v += scale * rng.normal();
  return out;
}

inline ActivationMatrix add_noise(const ActivationMatrix& x, double tau, std::uint64_t seed) {
  if (tau == 0.0) return x;
  return x.with_data(add_noise(x.data(), tau, seed), x.model_id() + "|noise(" + std::to_string(tau) + ")");
}

}  // namespace reef
