#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "reef/error.hpp"
#include "reef/matrix.hpp"
#include "reef/tensor_store.hpp"

namespace reef {

enum class KernelKind { Linear, Rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  // RBF bandwidth as a fraction of the median pairwise distance.
  double alpha = 0.5;
  std::optional<double> sigma_override;

  static KernelSpec linear() { return {}; }
  static KernelSpec rbf(double alpha = 0.5) { return {KernelKind::Rbf, alpha, std::nullopt}; }
  static KernelSpec rbf_fixed(double sigma) { return {KernelKind::Rbf, 0.5, sigma}; }

  void validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw Error("alpha must be > 0");
    if (sigma_override && (!(*sigma_override > 0.0) || !std::isfinite(*sigma_override))) {
      throw Error("sigma must be > 0");
    }
  }

  [[nodiscard]] std::string describe() const {
    if (kind == KernelKind::Linear) return "linear";
    char buf[64];
    if (sigma_override) {
      std::snprintf(buf, sizeof buf, "rbf(sigma=%g)", *sigma_override);
    } else {
      std::snprintf(buf, sizeof buf, "rbf(alpha=%g)", alpha);
    }
    return buf;
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

// m×m kernel matrix over the samples of one activation matrix.
struct GramMatrix {
  Matrix values;
  KernelSpec kernel;
  bool centered = false;
  // Bandwidth actually used (RBF only).
  std::optional<double> sigma;

  [[nodiscard]] std::size_t size() const noexcept { return values.rows(); }
};

inline GramMatrix gram_linear(const Matrix& x) {
  const std::size_t m = x.rows();
  Matrix k(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      const double v = dot(x.row(i), x.row(j));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return {std::move(k), KernelSpec::linear(), false, std::nullopt};
}

inline GramMatrix gram_linear(const ActivationMatrix& x) { return gram_linear(x.data()); }

namespace detail {

inline std::vector<double> pairwise_distances(const Matrix& x) {
  const std::size_t m = x.rows();
  std::vector<double> d;
  d.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) d.push_back(std::sqrt(squared_distance(x.row(i), x.row(j))));
  return d;
}

// Median with the even-count midpoint convention. Reorders `v`.
inline double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

// Median of the m(m-1)/2 off-diagonal Euclidean distances. Returns 0 only
// when every row is identical.
inline double median_pairwise_distance(const Matrix& x) {
  if (x.rows() < 2) throw Error("m must be ≥ 2");
  auto d = detail::pairwise_distances(x);
  return detail::median_of(d);
}

inline double median_pairwise_distance(const ActivationMatrix& x) { return median_pairwise_distance(x.data()); }

// Bandwidth rule: override, else alpha * median distance, else alpha * mean
// distance when the median is zero.
inline double rbf_bandwidth(const Matrix& x, const KernelSpec& spec) {
  spec.validate();
  if (spec.sigma_override) return *spec.sigma_override;
  if (x.rows() < 2) throw Error("m must be ≥ 2");
  auto d = detail::pairwise_distances(x);
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double sigma = spec.alpha * detail::median_of(d);
  if (!(sigma > 0.0)) sigma = spec.alpha * mean;
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DegenerateError("degenerate input: all rows identical");
  return sigma;
}

inline GramMatrix gram_rbf(const Matrix& x, const KernelSpec& spec) {
  if (spec.kind != KernelKind::Rbf) throw Error("gram_rbf requires an RBF kernel spec");
  const double sigma = rbf_bandwidth(x, spec);
  const double scale = -1.0 / (2.0 * sigma * sigma);
  const std::size_t m = x.rows();
  Matrix k(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    k(i, i) = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) {
      const double v = std::exp(squared_distance(x.row(i), x.row(j)) * scale);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return {std::move(k), spec, false, sigma};
}

inline GramMatrix gram_rbf(const ActivationMatrix& x, const KernelSpec& spec) { return gram_rbf(x.data(), spec); }

inline GramMatrix make_gram(const Matrix& x, const KernelSpec& spec) {
  return spec.kind == KernelKind::Linear ? gram_linear(x) : gram_rbf(x, spec);
}

inline GramMatrix make_gram(const ActivationMatrix& x, const KernelSpec& spec) { return make_gram(x.data(), spec); }

// H·K·H with H = I - 11ᵀ/m, evaluated as
// K_ij - rowmean_i - colmean_j + grandmean.
inline GramMatrix center(const GramMatrix& k) {
  if (k.centered) throw Error("gram matrix is already centered");
  const std::size_t m = k.size();
  const Matrix& v = k.values;
  std::vector<double> row_mean(m, 0.0);
  std::vector<double> col_mean(m, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      row_mean[i] += v(i, j);
      col_mean[j] += v(i, j);
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    grand += row_mean[i];
    row_mean[i] *= inv_m;
    col_mean[i] *= inv_m;
  }
  grand *= inv_m * inv_m;
  Matrix out(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = v(i, j) - row_mean[i] - col_mean[j] + grand;
  return {std::move(out), k.kernel, true, k.sigma};
}

}  // namespace reef
