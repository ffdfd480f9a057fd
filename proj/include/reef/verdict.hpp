#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string_view>
#include <string>
#include <utility>

#include "reef/cka.hpp"
#include "reef/error.hpp"
#include "reef/tensor_store.hpp"
#include "reef/version.hpp"

namespace reef {

enum class VerdictLabel { Unrelated, Ambiguous, Derived, Undecidable };

inline const char* to_string(VerdictLabel l) noexcept {
  switch (l) {
    case VerdictLabel::Derived: return "Derived";
    case VerdictLabel::Ambiguous: return "Ambiguous";
    case VerdictLabel::Unrelated: return "Unrelated";
    case VerdictLabel::Undecidable: return "Undecidable";
  }
  return "Undecidable";
}

struct Thresholds {
  double hi = 0.8;
  double lo = 0.5;

  void validate() const {
    if (!(0.0 <= lo && lo < hi && hi <= 1.0)) {
      throw Error("thresholds must satisfy 0 <= lo < hi <= 1, got hi=" + std::to_string(hi) +
                  " lo=" + std::to_string(lo));
    }
  }
};

struct Verdict {
  VerdictLabel label = VerdictLabel::Undecidable;
  std::optional<double> score;
  Thresholds thresholds;
  std::string basis;
};

// score > hi: Derived; lo <= score <= hi: Ambiguous; score < lo: Unrelated.
// Missing or non-finite scores are Undecidable.
inline Verdict classify(std::optional<double> score, Thresholds t = {}, std::string basis = "score") {
  t.validate();
  Verdict v{VerdictLabel::Undecidable, score, t, std::move(basis)};
  if (!score || !std::isfinite(*score)) return v;
  if (*score > t.hi) {
    v.label = VerdictLabel::Derived;
  } else if (*score >= t.lo) {
    v.label = VerdictLabel::Ambiguous;
  } else {
    v.label = VerdictLabel::Unrelated;
  }
  return v;
}

inline Verdict classify(double score, double hi = 0.8, double lo = 0.5) {
  return classify(std::optional<double>(score), Thresholds{hi, lo});
}

inline std::string format_score(std::optional<double> s) {
  if (!s) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *s);
  return buf;
}

// Header row holds layer_b indices, first column layer_a indices.
inline std::string heatmap_csv(const SimilarityHeatmap& h) {
  std::string out = "layer_a\\layer_b";
  for (auto b : h.layers_b) out += "," + std::to_string(b);
  out += "\n";
  for (std::size_t i = 0; i < h.layers_a.size(); ++i) {
    out += std::to_string(h.layers_a[i]);
    for (const auto& cell : h.scores[i]) out += "," + format_score(cell);
    out += "\n";
  }
  return out;
}

struct Rgb {
  int r = 0;
  int g = 0;
  int b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Three-stop ramp: 0 blue, 0.5 white, 1 red. Scores outside [0,1] clamp;
// missing cells are black.
inline Rgb ramp_color(std::optional<double> score) {
  if (!score || !std::isfinite(*score)) return {0, 0, 0};
  const double s = std::clamp(*score, 0.0, 1.0);
  if (s <= 0.5) {
    const int c = static_cast<int>(std::lround(255.0 * s / 0.5));
    return {c, c, 255};
  }
  const int c = static_cast<int>(std::lround(255.0 * (1.0 - s) / 0.5));
  return {255, c, c};
}

// Plain-text P3 image, L2·zoom wide and L1·zoom tall.
inline std::string heatmap_ppm(const SimilarityHeatmap& h, unsigned zoom = 1) {
  if (zoom == 0) throw Error("zoom must be ≥ 1");
  const std::size_t width = h.layers_b.size() * zoom;
  const std::size_t height = h.layers_a.size() * zoom;
  std::string out = "P3\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (std::size_t y = 0; y < height; ++y) {
    const auto& row = h.scores[y / zoom];
    for (std::size_t x = 0; x < width; ++x) {
      const Rgb c = ramp_color(row[x / zoom]);
      if (x > 0) out += " ";
      out += std::to_string(c.r) + " " + std::to_string(c.g) + " " + std::to_string(c.b);
    }
    out += "\n";
  }
  return out;
}

// Writes <base>.csv and <base>.ppm.
inline void render_heatmap(const SimilarityHeatmap& h, const std::filesystem::path& base, unsigned zoom = 1) {
  if (h.layers_a.empty() || h.layers_b.empty()) throw Error("empty heatmap");
  auto csv = base;
  csv += ".csv";
  auto ppm = base;
  ppm += ".ppm";
  atomic_write(csv, heatmap_csv(h));
  atomic_write(ppm, heatmap_ppm(h, zoom));
}

struct FingerprintReport {
  SimilarityHeatmap heatmap;
  SummaryStats stats;
  Verdict verdict;
  std::pair<std::uint32_t, std::uint32_t> pivot;
  KernelSpec kernel;
  std::string tool_version = kToolVersion;
};

// floor(0.56·L) as a position in the layer list, per model.
inline std::pair<std::uint32_t, std::uint32_t> default_pivot(const SimilarityHeatmap& h) {
  if (h.layers_a.empty() || h.layers_b.empty()) throw Error("empty heatmap");
  const auto pick = [](const std::vector<std::uint32_t>& layers) {
    auto pos = static_cast<std::size_t>(std::floor(0.56 * static_cast<double>(layers.size())));
    return layers[std::min(pos, layers.size() - 1)];
  };
  return {pick(h.layers_a), pick(h.layers_b)};
}

// The verdict is taken on the pivot-layer score.
inline FingerprintReport report(const SimilarityHeatmap& h, std::pair<std::uint32_t, std::uint32_t> pivot,
                                Thresholds t = {}) {
  FingerprintReport r;
  r.stats = summarize(h, pivot.first, pivot.second);
  r.verdict = classify(r.stats.pivot_layer_score, t,
                       "pivot " + std::to_string(pivot.first) + ":" + std::to_string(pivot.second));
  r.heatmap = h;
  r.pivot = pivot;
  r.kernel = h.kernel;
  return r;
}

inline std::string serialize_report(const FingerprintReport& r) {
  char thr[64];
  std::snprintf(thr, sizeof thr, "hi=%.6f lo=%.6f", r.verdict.thresholds.hi, r.verdict.thresholds.lo);
  std::string out;
  out += "model_a: " + r.heatmap.model_a + "\n";
  out += "model_b: " + r.heatmap.model_b + "\n";
  out += "kernel: " + r.kernel.describe() + "\n";
  out += "m: " + std::to_string(r.heatmap.m) + "\n";
  out += "pivot: " + std::to_string(r.pivot.first) + ":" + std::to_string(r.pivot.second) + "\n";
  out += "score: " + format_score(r.verdict.score) + "\n";
  out += std::string("verdict: ") + to_string(r.verdict.label) + "\n";
  out += "thresholds: " + std::string(thr) + "\n";
  out += "diag_mean: " + format_score(r.stats.diag_mean) + "\n";
  out += "full_mean: " + format_score(r.stats.full_mean) + "\n";
  out += "tool_version: " + r.tool_version + "\n";
  out += "\n";
  out += heatmap_csv(r.heatmap);
  return out;
}

// Reads the `score:` line back from a serialized report.
inline std::optional<double> report_score(std::string_view text) {
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    if (line.empty()) break;
    if (line.starts_with("score: ")) {
      const std::string value(line.substr(7));
      if (value == "NA") return std::nullopt;
      try {
        return std::stod(value);
      } catch (const std::exception&) {
        throw Error("report has malformed score '" + value + "'");
      }
    }
    start = end + 1;
  }
  throw Error("report has no score line");
}

}  // namespace reef
