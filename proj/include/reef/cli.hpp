#pragma once

// Command-line front end. `dispatch` is the whole program minus main(), so
// tests can drive it with argument vectors and captured streams.
//
// Exit codes: 0 success, 1 domain error (one `error: ...` line on the
// diagnostic stream), 2 usage error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reef/baselines.hpp"
#include "reef/cka.hpp"
#include "reef/error.hpp"
#include "reef/kernel.hpp"
#include "reef/probe.hpp"
#include "reef/selftest.hpp"
#include "reef/synth.hpp"
#include "reef/tensor_store.hpp"
#include "reef/transforms.hpp"
#include "reef/verdict.hpp"
#include "reef/version.hpp"

namespace reef::cli {

namespace fs = std::filesystem;

// One path per line, relative to the manifest's directory; blank lines and
// '#' comments are ignored.
inline std::vector<fs::path> read_layer_manifest(const fs::path& manifest) {
  std::istringstream in(read_file(manifest));
  std::vector<fs::path> paths;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    fs::path p(line);
    paths.push_back(p.is_absolute() ? p : manifest.parent_path() / p);
  }
  if (paths.empty()) throw Error("empty layer list: " + manifest.string());
  return paths;
}

inline std::vector<int> read_labels(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<int> labels;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line != "0" && line != "1") throw Error("label line " + std::to_string(n) + " is not 0 or 1");
    labels.push_back(line == "1" ? 1 : 0);
  }
  return labels;
}

inline std::string labels_text(const std::vector<int>& labels) {
  std::string out;
  for (int y : labels) out += y == 1 ? "1\n" : "0\n";
  return out;
}

inline std::pair<std::uint32_t, std::uint32_t> parse_pivot(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument(text);
    return {static_cast<std::uint32_t>(std::stoul(text.substr(0, colon))),
            static_cast<std::uint32_t>(std::stoul(text.substr(colon + 1)))};
  } catch (const std::logic_error&) {
    throw CLI::ValidationError("--pivot", "expected <layer_a>:<layer_b>, got '" + text + "'");
  }
}

inline SplitRatio parse_ratio(const std::string& text) {
  const auto [a, b] = parse_pivot(text);
  return {a, b};
}

inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string baseline_line(const BaselineScore& s) {
  return fixed6(s.value) + (s.flag ? " " + *s.flag : std::string());
}

struct KernelFlags {
  std::string kind = "linear";
  double alpha = 0.5;
  std::optional<double> sigma;

  void attach(CLI::App* app) {
    app->add_option("--kernel", kind, "Kernel: linear or rbf")
        ->check(CLI::IsMember({"linear", "rbf"}))
        ->capture_default_str();
    app->add_option("--alpha", alpha, "RBF bandwidth as a fraction of the median distance")->capture_default_str();
    app->add_option("--sigma", sigma, "Fixed RBF bandwidth (overrides --alpha)");
  }

  [[nodiscard]] KernelSpec spec() const {
    KernelSpec k = kind == "rbf" ? KernelSpec::rbf(alpha) : KernelSpec::linear();
    k.sigma_override = sigma;
    k.validate();
    return k;
  }
};

inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Representation fingerprinting with centered kernel alignment", "reef"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // cka
  auto* cka_cmd = app.add_subcommand("cka", "CKA score between two activation files");
  std::string cka_a, cka_b;
  KernelFlags cka_k;
  cka_cmd->add_option("a", cka_a)->required()->check(CLI::ExistingFile);
  cka_cmd->add_option("b", cka_b)->required()->check(CLI::ExistingFile);
  cka_k.attach(cka_cmd);

  // grid
  auto* grid_cmd = app.add_subcommand("grid", "Layer-pair heatmap, report and verdict from two layer manifests");
  std::string grid_a, grid_b, grid_out, grid_pivot;
  KernelFlags grid_k;
  Thresholds grid_t;
  unsigned grid_jobs = 1;
  unsigned grid_zoom = 1;
  grid_cmd->add_option("manifest_a", grid_a)->required()->check(CLI::ExistingFile);
  grid_cmd->add_option("manifest_b", grid_b)->required()->check(CLI::ExistingFile);
  grid_cmd->add_option("--out", grid_out, "Output directory")->required();
  grid_cmd->add_option("--pivot", grid_pivot, "Pivot layers a:b (default floor(0.56·L))");
  grid_cmd->add_option("--hi", grid_t.hi)->capture_default_str();
  grid_cmd->add_option("--lo", grid_t.lo)->capture_default_str();
  grid_cmd->add_option("--jobs", grid_jobs)->check(CLI::PositiveNumber)->capture_default_str();
  grid_cmd->add_option("--zoom", grid_zoom, "Pixels per heatmap cell")->check(CLI::PositiveNumber);
  grid_k.attach(grid_cmd);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "CKA over growing sample prefixes");
  std::string sweep_a, sweep_b, sweep_out;
  std::size_t sweep_step = 10;
  KernelFlags sweep_k;
  sweep_cmd->add_option("a", sweep_a)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("b", sweep_b)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--step", sweep_step)->capture_default_str();
  sweep_cmd->add_option("--out", sweep_out, "Also write sweep.csv into this directory");
  sweep_k.attach(sweep_cmd);

  // verdict
  auto* verdict_cmd = app.add_subcommand("verdict", "Label a score or a saved report");
  std::optional<double> verdict_score;
  std::string verdict_report;
  Thresholds verdict_t;
  auto* score_opt = verdict_cmd->add_option("--score", verdict_score);
  auto* report_opt = verdict_cmd->add_option("--report", verdict_report)->check(CLI::ExistingFile);
  score_opt->excludes(report_opt);
  verdict_cmd->add_option("--hi", verdict_t.hi)->capture_default_str();
  verdict_cmd->add_option("--lo", verdict_t.lo)->capture_default_str();

  // baseline
  auto* baseline_cmd = app.add_subcommand("baseline", "Weight/logit baseline fingerprints");
  baseline_cmd->require_subcommand(1);
  std::string base_a, base_b;
  auto* pcs_cmd = baseline_cmd->add_subcommand("pcs", "Parameter cosine similarity of two bundle manifests");
  auto* ics_cmd = baseline_cmd->add_subcommand("ics", "Invariant-term cosine similarity of two bundle manifests");
  auto* logits_cmd = baseline_cmd->add_subcommand("logits", "Mean per-sample logit cosine of two logit files");
  for (auto* sub : {pcs_cmd, ics_cmd, logits_cmd}) {
    sub->add_option("a", base_a)->required()->check(CLI::ExistingFile);
    sub->add_option("b", base_b)->required()->check(CLI::ExistingFile);
  }

  // transform
  auto* transform_cmd = app.add_subcommand("transform", "Rewrite an activation file");
  transform_cmd->require_subcommand(1);
  std::string tr_in, tr_out;
  std::optional<std::uint64_t> tr_seed;
  double tr_factor = 1.0, tr_ratio = 1.0, tr_tau = 0.0;
  auto* permute_cmd = transform_cmd->add_subcommand("permute", "Seeded random column permutation");
  auto* scale_cmd = transform_cmd->add_subcommand("scale", "Uniform positive scaling");
  auto* subsample_cmd = transform_cmd->add_subcommand("subsample", "Keep a seeded random subset of columns");
  auto* noise_cmd = transform_cmd->add_subcommand("noise", "Add relative Gaussian noise");
  for (auto* sub : {permute_cmd, scale_cmd, subsample_cmd, noise_cmd}) {
    sub->add_option("input", tr_in)->required()->check(CLI::ExistingFile);
    sub->add_option("output", tr_out)->required();
  }
  for (auto* sub : {permute_cmd, subsample_cmd, noise_cmd}) sub->add_option("--seed", tr_seed)->required();
  scale_cmd->add_option("--factor", tr_factor)->required();
  subsample_cmd->add_option("--ratio", tr_ratio)->required();
  noise_cmd->add_option("--tau", tr_tau)->required();

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "Binary probes on representations");
  probe_cmd->require_subcommand(1);
  auto* pbuild_cmd = probe_cmd->add_subcommand("build", "Split positive/negative activations into train/test");
  std::string pb_pos, pb_neg, pb_out, pb_ratio = "4:1";
  std::uint64_t pb_seed = 0;
  pbuild_cmd->add_option("pos", pb_pos)->required()->check(CLI::ExistingFile);
  pbuild_cmd->add_option("neg", pb_neg)->required()->check(CLI::ExistingFile);
  pbuild_cmd->add_option("--seed", pb_seed)->required();
  pbuild_cmd->add_option("--ratio", pb_ratio)->capture_default_str();
  pbuild_cmd->add_option("--out", pb_out)->required();
  auto* ptrain_cmd = probe_cmd->add_subcommand("train", "Train a probe on a built dataset directory");
  std::string pt_dir, pt_out, pt_arch = "linear";
  TrainingMeta pt_meta;
  ptrain_cmd->add_option("dataset", pt_dir)->required()->check(CLI::ExistingDirectory);
  ptrain_cmd->add_option("--arch", pt_arch)->check(CLI::IsMember({"linear", "mlp"}))->capture_default_str();
  ptrain_cmd->add_option("--seed", pt_meta.seed)->required();
  ptrain_cmd->add_option("--epochs", pt_meta.epochs)->capture_default_str();
  ptrain_cmd->add_option("--lr", pt_meta.learning_rate)->capture_default_str();
  ptrain_cmd->add_option("--out", pt_out, "Probe file to write")->required();
  auto* peval_cmd = probe_cmd->add_subcommand("eval", "Accuracy of a probe on labelled activations");
  std::string pe_probe, pe_data, pe_labels;
  peval_cmd->add_option("probe", pe_probe)->required()->check(CLI::ExistingFile);
  peval_cmd->add_option("data", pe_data)->required()->check(CLI::ExistingFile);
  peval_cmd->add_option("labels", pe_labels)->required()->check(CLI::ExistingFile);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded synthetic victim/derived/unrelated family");
  FamilyConfig synth_cfg;
  std::string synth_out;
  synth_cmd->add_option("--m", synth_cfg.m)->capture_default_str();
  synth_cmd->add_option("--d-latent", synth_cfg.d_latent)->capture_default_str();
  synth_cmd->add_option("--dims", synth_cfg.layer_dims, "Per-layer widths")->delimiter(',');
  synth_cmd->add_option("--layers", synth_cfg.n_layers, "Layer count (repeats a single --dims width)");
  synth_cmd->add_option("--tau", synth_cfg.drift_tau, "Derived-model weight drift")->capture_default_str();
  synth_cmd->add_option("--class-shift", synth_cfg.class_shift)->capture_default_str();
  synth_cmd->add_option("--seed", synth_cfg.seed)->required();
  synth_cmd->add_option("--out", synth_out)->required();

  // selftest
  auto* selftest_cmd = app.add_subcommand("selftest", "Run the invariance property suite");
  std::uint64_t st_seed = 0;
  std::size_t st_trials = 50;
  selftest_cmd->add_option("--seed", st_seed)->required();
  selftest_cmd->add_option("--trials", st_trials)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*cka_cmd) {
      out << fixed6(cka(load_activations(cka_a), load_activations(cka_b), cka_k.spec())) << "\n";
    } else if (*grid_cmd) {
      grid_t.validate();
      std::vector<ActivationMatrix> la, lb;
      for (const auto& p : read_layer_manifest(grid_a)) la.push_back(load_activations(p));
      for (const auto& p : read_layer_manifest(grid_b)) lb.push_back(load_activations(p));
      const SimilarityHeatmap h = cka_layer_grid(la, lb, grid_k.spec(), grid_jobs);
      const auto pivot = grid_pivot.empty() ? default_pivot(h) : parse_pivot(grid_pivot);
      const FingerprintReport r = report(h, pivot, grid_t);
      const std::string text = serialize_report(r);
      const std::string ppm = heatmap_ppm(h, grid_zoom);
      fs::create_directories(grid_out);
      atomic_write(fs::path(grid_out) / "heatmap.csv", heatmap_csv(h));
      atomic_write(fs::path(grid_out) / "heatmap.ppm", ppm);
      atomic_write(fs::path(grid_out) / "report.txt", text);
      out << text;
    } else if (*sweep_cmd) {
      const auto series = cka_sample_sweep(load_activations(sweep_a), load_activations(sweep_b), sweep_k.spec(),
                                           sweep_step);
      std::string csv = "n_samples,score\n";
      for (const auto& pt : series) csv += std::to_string(pt.n_samples) + "," + format_score(pt.score) + "\n";
      if (!sweep_out.empty()) {
        fs::create_directories(sweep_out);
        atomic_write(fs::path(sweep_out) / "sweep.csv", csv);
      }
      out << csv;
    } else if (*verdict_cmd) {
      std::optional<double> score = verdict_score;
      if (!verdict_report.empty()) {
        score = report_score(read_file(verdict_report));
      } else if (!score) {
        throw CLI::RequiredError("verdict needs --score or --report");
      }
      out << to_string(classify(score, verdict_t).label) << "\n";
    } else if (*baseline_cmd) {
      if (*pcs_cmd) {
        out << baseline_line(pcs(load_weight_bundle(base_a), load_weight_bundle(base_b))) << "\n";
      } else if (*ics_cmd) {
        out << baseline_line(ics(load_weight_bundle(base_a), load_weight_bundle(base_b))) << "\n";
      } else {
        out << baseline_line(logits_similarity(load_logits(base_a), load_logits(base_b))) << "\n";
      }
    } else if (*transform_cmd) {
      const ActivationMatrix in = load_activations(tr_in);
      std::optional<ActivationMatrix> result;
      if (*permute_cmd) {
        result = permute_columns(in, std::nullopt, *tr_seed);
      } else if (*scale_cmd) {
        result = scale_matrix(in, tr_factor);
      } else if (*subsample_cmd) {
        result = subsample_columns(in, tr_ratio, *tr_seed);
      } else {
        result = add_noise(in, tr_tau, *tr_seed);
      }
      save_activations(*result, tr_out);
      out << tr_out << " " << result->m() << "x" << result->p() << "\n";
    } else if (*probe_cmd) {
      if (*pbuild_cmd) {
        const ProbeDataset d =
            build_probe_dataset(load_activations(pb_pos), load_activations(pb_neg), parse_ratio(pb_ratio), pb_seed);
        const fs::path dir(pb_out);
        fs::create_directories(dir);
        save_activations(ActivationMatrix("probe-train", 0, d.train_x, pb_pos), dir / "train.reef");
        save_activations(ActivationMatrix("probe-test", 0, d.test_x, pb_pos), dir / "test.reef");
        atomic_write(dir / "train_labels.txt", labels_text(d.train_y));
        atomic_write(dir / "test_labels.txt", labels_text(d.test_y));
        out << d.train_y.size() << " train / " << d.test_y.size() << " test\n";
      } else if (*ptrain_cmd) {
        const fs::path dir(pt_dir);
        ProbeDataset d;
        d.train_x = load_activations(dir / "train.reef").data();
        d.train_y = read_labels(dir / "train_labels.txt");
        const ProbeModel model =
            train_probe(d, pt_arch == "mlp" ? ProbeArch::Mlp : ProbeArch::Linear, pt_meta);
        save_probe(model, pt_out);
        out << "train_accuracy " << fixed6(eval_probe(model, d.train_x, d.train_y)) << " epochs_run "
            << model.meta.epochs_run << "\n";
      } else {
        const ProbeModel model = load_probe(pe_probe);
        out << fixed6(eval_probe(model, load_activations(pe_data), read_labels(pe_labels))) << "\n";
      }
    } else if (*synth_cmd) {
      const SyntheticFamily fam = gen_family(synth_cfg);
      export_family(fam, synth_out);
      out << "wrote " << fam.victim.size() << " layers x 3 models to " << synth_out << "\n";
    } else if (*selftest_cmd) {
      bool all = true;
      for (const auto& r : run_selftest(st_seed, st_trials)) {
        out << format_check(r) << "\n";
        all = all && r.passed;
      }
      return all ? 0 : 1;
    }
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace reef::cli
