#pragma once

// Weight- and output-space fingerprints used as comparison points:
// parameter cosine (PCS), invariant-term cosine (ICS) and logits similarity.
//
// Incompatible shapes do not throw: the score is 0.0 and `flag` names the
// reason, so callers can tabulate the outcome alongside valid scores.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "reef/error.hpp"
#include "reef/matrix.hpp"
#include "reef/tensor_store.hpp"

namespace reef {

struct WeightBundle {
  std::string model_id;
  std::vector<Matrix> matrices;
  // (A: p×h, B: q×h) sharing the hidden dimension h.
  std::optional<std::pair<Matrix, Matrix>> last_pair;

  void validate() const {
    for (const auto& m : matrices)
      if (!all_finite(m)) throw Error("non-finite weight in bundle " + model_id);
    if (last_pair) {
      if (last_pair->first.cols() != last_pair->second.cols()) {
        throw Error("last pair hidden dims differ: " + std::to_string(last_pair->first.cols()) + " vs " +
                    std::to_string(last_pair->second.cols()));
      }
      if (!all_finite(last_pair->first) || !all_finite(last_pair->second)) {
        throw Error("non-finite weight in bundle " + model_id);
      }
    }
  }

  [[nodiscard]] std::vector<double> flattened() const {
    std::vector<double> flat;
    for (const auto& m : matrices) flat.insert(flat.end(), m.values().begin(), m.values().end());
    return flat;
  }
};

struct LogitsMatrix {
  std::string model_id;
  Matrix values;  // m×v

  [[nodiscard]] std::size_t m() const noexcept { return values.rows(); }
  [[nodiscard]] std::size_t vocab() const noexcept { return values.cols(); }
};

struct BaselineScore {
  double value = 0.0;
  std::optional<std::string> flag;
};

inline BaselineScore pcs(const WeightBundle& a, const WeightBundle& b) {
  a.validate();
  b.validate();
  const auto fa = a.flattened();
  const auto fb = b.flattened();
  if (fa.size() != fb.size() || fa.empty()) return {0.0, "shape-incompatible"};
  return {cosine(fa, fb), std::nullopt};
}

// Invariant term M = A·Bᵀ; a hidden-dimension permutation P applied to both
// A and B cancels.
inline Matrix invariant_term(const std::pair<Matrix, Matrix>& pair) {
  return multiply_transposed(pair.first, pair.second);
}

inline BaselineScore ics(const WeightBundle& a, const WeightBundle& b) {
  if (!a.last_pair || !b.last_pair) throw Error("ics requires a last-layer pair in both bundles");
  a.validate();
  b.validate();
  const Matrix ma = invariant_term(*a.last_pair);
  const Matrix mb = invariant_term(*b.last_pair);
  if (ma.rows() != mb.rows() || ma.cols() != mb.cols()) return {0.0, "shape-incompatible"};
  return {cosine(ma.values(), mb.values()), std::nullopt};
}

// Mean over samples of per-sample cosine between logit vectors.
inline BaselineScore logits_similarity(const LogitsMatrix& a, const LogitsMatrix& b) {
  if (a.m() != b.m()) {
    throw IncomparableError("incomparable: m=" + std::to_string(a.m()) + " vs m=" + std::to_string(b.m()));
  }
  if (a.m() == 0) throw Error("logits matrix has no samples");
  if (!all_finite(a.values) || !all_finite(b.values)) throw Error("non-finite logits");
  if (a.vocab() != b.vocab()) return {0.0, "vocab-incompatible"};
  double total = 0.0;
  for (std::size_t i = 0; i < a.m(); ++i) total += cosine(a.values.row(i), b.values.row(i));
  return {total / static_cast<double>(a.m()), std::nullopt};
}

// Bundle manifest: UTF-8 text, one `key=value` per line, '#' comments.
//   model_id=<name>
//   matrix=<file.reef>      (repeatable, flatten order)
//   last_a=<file.reef>
//   last_b=<file.reef>
// Relative paths resolve against the manifest's directory.
inline WeightBundle load_weight_bundle(const std::filesystem::path& manifest) {
  const std::string text = read_file(manifest);
  const auto base = manifest.parent_path();
  WeightBundle bundle;
  std::optional<Matrix> last_a;
  std::optional<Matrix> last_b;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("manifest line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const auto resolve = [&](const std::string& v) { return read_tensor(base / v).data; };
    if (key == "model_id") {
      bundle.model_id = value;
    } else if (key == "matrix") {
      bundle.matrices.push_back(resolve(value));
    } else if (key == "last_a") {
      last_a = resolve(value);
    } else if (key == "last_b") {
      last_b = resolve(value);
    } else {
      throw Error("manifest line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (last_a.has_value() != last_b.has_value()) throw Error("manifest names only one of last_a/last_b");
  if (last_a) bundle.last_pair = std::make_pair(std::move(*last_a), std::move(*last_b));
  bundle.validate();
  return bundle;
}

inline LogitsMatrix load_logits(const std::filesystem::path& path) {
  Tensor t = read_tensor(path);
  return {std::move(t.model_id), std::move(t.data)};
}

}  // namespace reef
