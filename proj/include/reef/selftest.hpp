#pragma once

// Invariance checks runnable from the command line on seeded random inputs.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "reef/cka.hpp"
#include "reef/kernel.hpp"
#include "reef/rng.hpp"
#include "reef/transforms.hpp"

namespace reef {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // largest observed deviation
  double bound = 0.0;
};

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix out(rows, cols);
  for (double& v : out.values()) v = rng.normal();
  return out;
}

inline std::vector<CheckResult> run_selftest(std::uint64_t seed, std::size_t trials = 50) {
  const KernelSpec kernels[] = {KernelSpec::linear(), KernelSpec::rbf()};
  std::vector<CheckResult> results;
  for (const auto& k : kernels) {
    const std::string kname = k.describe();
    CheckResult self{"self-similarity [" + kname + "]", true, 0.0, 1e-10};
    CheckResult perm{"permutation invariance [" + kname + "]", true, 0.0, 1e-8};
    CheckResult scale{"scaling invariance [" + kname + "]", true, 0.0, 1e-8};
    CheckResult sym{"symmetry [" + kname + "]", true, 0.0, 1e-10};
    CheckResult range{"range [0,1] [" + kname + "]", true, 0.0, 1e-9};
    Rng rng(mix_seed(seed, k.kind == KernelKind::Linear ? 0 : 1));
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t m = 4 + rng.below(29);
      const Matrix x = random_matrix(m, 1 + rng.below(24), rng);
      const Matrix y = random_matrix(m, 1 + rng.below(24), rng);
      const double base = cka(x, y, k);
      self.worst = std::max(self.worst, std::abs(cka(x, x, k) - 1.0));
      const Matrix xp = permute_columns(x, Permutation::random(x.cols(), rng.next()));
      const Matrix yp = permute_columns(y, Permutation::random(y.cols(), rng.next()));
      perm.worst = std::max(perm.worst, std::abs(cka(xp, yp, k) - base));
      const double c1 = 0.01 + 10.0 * rng.uniform();
      const double c2 = 0.01 + 10.0 * rng.uniform();
      scale.worst = std::max(scale.worst, std::abs(cka(scale_matrix(x, c1), scale_matrix(y, c2), k) - base));
      sym.worst = std::max(sym.worst, std::abs(cka(y, x, k) - base));
      range.worst = std::max({range.worst, -base, base - 1.0});
    }
    for (CheckResult* r : {&self, &perm, &scale, &sym, &range}) {
      r->passed = r->worst <= r->bound;
      results.push_back(*r);
    }
  }
  return results;
}

inline std::string format_check(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s %s (worst %.3g, bound %.3g)", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                r.worst, r.bound);
  return buf;
}

}  // namespace reef
