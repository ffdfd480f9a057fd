#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "reef/error.hpp"
#include "reef/kernel.hpp"
#include "reef/matrix.hpp"
#include "reef/tensor_store.hpp"

namespace reef {

namespace detail {

inline void require_comparable(std::size_t ma, std::size_t mb) {
  if (ma != mb) throw IncomparableError("incomparable: m=" + std::to_string(ma) + " vs m=" + std::to_string(mb));
}

// Σ_ij a_ij b_ji, i.e. tr(A·B).
inline double trace_product(const Matrix& a, const Matrix& b) {
  const std::size_t m = a.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < m; ++j) row += a(i, j) * b(j, i);
    s += row;
  }
  return s;
}

inline double hsic_centered(const Matrix& cx, const Matrix& cy) {
  const double denom = static_cast<double>(cx.rows() - 1);
  return trace_product(cx, cy) / (denom * denom);
}

}  // namespace detail

// Biased estimator tr(K_X H K_Y H) / (m-1)². Uncentered inputs are centered here.
inline double hsic(const GramMatrix& kx, const GramMatrix& ky) {
  if (kx.size() != ky.size()) {
    throw Error("size mismatch: " + std::to_string(kx.size()) + " vs " + std::to_string(ky.size()));
  }
  if (kx.size() < 2) throw Error("m must be ≥ 2");
  const GramMatrix cx = kx.centered ? kx : center(kx);
  const GramMatrix cy = ky.centered ? ky : center(ky);
  return detail::hsic_centered(cx.values, cy.values);
}

// Centered Gram of one representation with its self-HSIC, reused across
// every comparison that representation takes part in.
class PreparedGram {
 public:
  PreparedGram(const Matrix& x, const KernelSpec& spec) {
    if (x.rows() < 2) throw Error("m must be ≥ 2");
    GramMatrix raw = make_gram(x, spec);
    double energy = 0.0;
    for (double v : raw.values.values()) energy += v * v;
    centered_ = center(raw);
    self_hsic_ = detail::hsic_centered(centered_.values, centered_.values);
    const double denom = static_cast<double>(x.rows() - 1);
    // Rounding residue of centering a constant Gram sits near 1e-32 relative
    // to the raw energy; anything at or below 1e-20 carries no signal.
    degenerate_ = !(self_hsic_ > 1e-20 * energy / (denom * denom));
  }

  PreparedGram(const ActivationMatrix& x, const KernelSpec& spec) : PreparedGram(x.data(), spec) {}

  [[nodiscard]] std::size_t m() const noexcept { return centered_.size(); }
  [[nodiscard]] const GramMatrix& centered() const noexcept { return centered_; }
  [[nodiscard]] double self_hsic() const noexcept { return self_hsic_; }
  [[nodiscard]] bool degenerate() const noexcept { return degenerate_; }

 private:
  GramMatrix centered_;
  double self_hsic_ = 0.0;
  bool degenerate_ = false;
};

inline double cka(const PreparedGram& a, const PreparedGram& b) {
  detail::require_comparable(a.m(), b.m());
  if (a.degenerate() || b.degenerate()) throw DegenerateError("zero self-similarity");
  const double cross = detail::hsic_centered(a.centered().values, b.centered().values);
  return cross / std::sqrt(a.self_hsic() * b.self_hsic());
}

inline double cka(const Matrix& x, const Matrix& y, const KernelSpec& kernel) {
  detail::require_comparable(x.rows(), y.rows());
  return cka(PreparedGram(x, kernel), PreparedGram(y, kernel));
}

// Centered kernel alignment HSIC(X,Y) / sqrt(HSIC(X,X)·HSIC(Y,Y)).
// Throws IncomparableError on differing m and DegenerateError when either
// side has zero self-similarity.
inline double cka(const ActivationMatrix& x, const ActivationMatrix& y, const KernelSpec& kernel) {
  return cka(x.data(), y.data(), kernel);
}

struct SimilarityHeatmap {
  std::string model_a;
  std::string model_b;
  std::vector<std::uint32_t> layers_a;
  std::vector<std::uint32_t> layers_b;
  KernelSpec kernel;
  // scores[i][j]; nullopt marks a degenerate cell.
  std::vector<std::vector<std::optional<double>>> scores;
  std::size_t m = 0;

  [[nodiscard]] std::optional<std::size_t> position_a(std::uint32_t layer) const {
    const auto it = std::find(layers_a.begin(), layers_a.end(), layer);
    if (it == layers_a.end()) return std::nullopt;
    return static_cast<std::size_t>(it - layers_a.begin());
  }
  [[nodiscard]] std::optional<std::size_t> position_b(std::uint32_t layer) const {
    const auto it = std::find(layers_b.begin(), layers_b.end(), layer);
    if (it == layers_b.end()) return std::nullopt;
    return static_cast<std::size_t>(it - layers_b.begin());
  }
};

namespace detail {

// Runs `work(i)` for i in [0, n) on up to `jobs` threads. Each index writes
// only its own slot, so results do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& work) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (unsigned t = 0; t < jobs; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < n; i = next++) work(i);
      } catch (...) {
        errors[t] = std::current_exception();
        next = n;
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

// CKA over every (layer_a, layer_b) pair. Grams are built once per layer.
inline SimilarityHeatmap cka_layer_grid(const std::vector<ActivationMatrix>& layers_a,
                                        const std::vector<ActivationMatrix>& layers_b, const KernelSpec& kernel,
                                        unsigned jobs = 1) {
  if (layers_a.empty() || layers_b.empty()) throw Error("empty layer list");
  kernel.validate();
  const std::size_t m = layers_a.front().m();
  for (const auto& l : layers_a) detail::require_comparable(m, l.m());
  for (const auto& l : layers_b) detail::require_comparable(m, l.m());

  const std::size_t la = layers_a.size();
  const std::size_t lb = layers_b.size();
  std::vector<std::optional<PreparedGram>> grams(la + lb);
  std::vector<std::exception_ptr> gram_errors(la + lb);
  detail::parallel_for(la + lb, jobs, [&](std::size_t i) {
    const ActivationMatrix& src = i < la ? layers_a[i] : layers_b[i - la];
    try {
      grams[i].emplace(src, kernel);
    } catch (const DegenerateError&) {
      // RBF bandwidth unobtainable; the whole row/column is missing.
    }
  });

  SimilarityHeatmap h;
  h.model_a = layers_a.front().model_id();
  h.model_b = layers_b.front().model_id();
  for (const auto& l : layers_a) h.layers_a.push_back(l.layer_index());
  for (const auto& l : layers_b) h.layers_b.push_back(l.layer_index());
  h.kernel = kernel;
  h.m = m;
  h.scores.assign(la, std::vector<std::optional<double>>(lb));
  detail::parallel_for(la * lb, jobs, [&](std::size_t cell) {
    const std::size_t i = cell / lb;
    const std::size_t j = cell % lb;
    const auto& ga = grams[i];
    const auto& gb = grams[la + j];
    if (!ga || !gb || ga->degenerate() || gb->degenerate()) return;
    h.scores[i][j] = cka(*ga, *gb);
  });
  return h;
}

struct SummaryStats {
  // Mean of corresponding-layer cells; only when both sides have equal depth.
  std::optional<double> diag_mean;
  std::optional<double> full_mean;
  std::optional<double> pivot_layer_score;
};

// Missing cells are skipped by the means.
inline SummaryStats summarize(const SimilarityHeatmap& h, std::uint32_t pivot_a, std::uint32_t pivot_b) {
  const auto pa = h.position_a(pivot_a);
  const auto pb = h.position_b(pivot_b);
  if (!pa || !pb) {
    throw Error("pivot not in grid: " + std::to_string(pivot_a) + ":" + std::to_string(pivot_b));
  }
  SummaryStats s;
  double full = 0.0;
  std::size_t n_full = 0;
  for (const auto& row : h.scores)
    for (const auto& c : row)
      if (c) {
        full += *c;
        ++n_full;
      }
  if (n_full > 0) s.full_mean = full / static_cast<double>(n_full);
  if (h.layers_a.size() == h.layers_b.size()) {
    double diag = 0.0;
    std::size_t n_diag = 0;
    for (std::size_t i = 0; i < h.layers_a.size(); ++i)
      if (h.scores[i][i]) {
        diag += *h.scores[i][i];
        ++n_diag;
      }
    if (n_diag > 0) s.diag_mean = diag / static_cast<double>(n_diag);
  }
  s.pivot_layer_score = h.scores[*pa][*pb];
  return s;
}

struct SweepPoint {
  std::size_t n_samples = 0;
  std::optional<double> score;
};

// CKA over the first n samples for n = step, 2·step, ... up to m (m itself is
// always the last point). Prefixes shorter than 2 samples are skipped.
inline std::vector<SweepPoint> cka_sample_sweep(const ActivationMatrix& x, const ActivationMatrix& y,
                                                const KernelSpec& kernel, std::size_t step) {
  detail::require_comparable(x.m(), y.m());
  const std::size_t m = x.m();
  if (step == 0) throw Error("step must be ≥ 1");
  if (step > m) throw Error("step " + std::to_string(step) + " exceeds m=" + std::to_string(m));
  std::vector<std::size_t> sizes;
  for (std::size_t n = step; n <= m; n += step)
    if (n >= 2) sizes.push_back(n);
  if (sizes.empty() || sizes.back() != m) sizes.push_back(m);

  std::vector<SweepPoint> out;
  out.reserve(sizes.size());
  for (std::size_t n : sizes) {
    SweepPoint pt{n, std::nullopt};
    try {
      pt.score = cka(x.data().top_rows(n), y.data().top_rows(n), kernel);
    } catch (const DegenerateError&) {
    }
    out.push_back(pt);
  }
  return out;
}

}  // namespace reef
