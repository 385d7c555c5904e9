#pragma once

#include "blockpd/metrics.hpp"
#include "blockpd/problems.hpp"
#include "blockpd/solvers.hpp"
#include "blockpd/variant.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace blockpd {

enum class Resolution { lo, hi };
std::string to_string(Resolution r);
Resolution parse_resolution(std::string const &name);

struct InstanceConfig {
  ProblemKind problem = ProblemKind::tgv2_denoise;
  Resolution resolution = Resolution::lo;
  std::string image;  // PNG or PGM; the synthetic scene when empty
  std::optional<double> alpha, beta, noise_std;
  std::uint64_t noise_seed = 1;
};

struct Instance {
  Image clean;
  Corrupted data;
  double alpha = 0.0;
  double beta = 0.0;  // TGV2 only
  std::shared_ptr<SaddleProblem const> problem;
};

Instance build_instance(InstanceConfig const &cfg);

// Parameters of the block variants; unset values take the per-problem defaults.
struct VariantSettings {
  std::optional<double> p;            // overrides the variant's B/I letter
  double delta = 0.01;
  std::optional<double> rho;          // acceleration offset per primal block (default 5)
  std::optional<double> gamma_tilde;  // fraction of gamma_j used as gamma-tilde (default 0.5)
  double perp_alpha = 0.225;          // proportional rule of the doubly-stochastic variants
  double relax = 1.5;                 // inertial parameter of Relax
  double gamma_bar_margin = 0.99;     // deterministic rule uses this fraction of the largest feasible gamma-bar
};

std::unique_ptr<Solver> make_solver(Variant const &variant, std::shared_ptr<SaddleProblem const> problem,
                                    VariantSettings const &settings, std::uint64_t seed, SolverOptions opts = {});

struct ExperimentConfig {
  InstanceConfig instance;
  std::vector<std::string> variants = {"PDHGM"};
  std::size_t iters = 5000;
  std::size_t seeds = 1;
  std::size_t stride = 10;
  std::uint64_t seed = 1;
  VariantSettings settings;
  std::size_t target_iters = 200000;
  std::string cache_dir;  // target cache; none when empty
  std::string out_dir;    // no files when empty
  std::vector<double> thresholds;  // dB levels of the summary table; default -40 and -60 (-50 at hi)
  bool ergodic_gap = false;         // also report the gap at the ergodic averages
};

struct TraceRow {
  MetricRow m;
  double ergodic_gap_db = 0.0;  // only with ergodic_gap
};

struct RunTrace {
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double seconds_per_iter = 0.0;
  double update_fraction = 1.0;
  double max_x_norm = 0.0;
  SolverDiagnostics diagnostics;
  std::vector<TraceRow> rows;
};

struct ThresholdHit {
  std::optional<std::size_t> iter;
  std::optional<double> expected_full_updates;
  std::optional<double> seconds;
};

struct SummaryRow {
  std::string variant;
  std::uint64_t seed = 0;
  double threshold = 0.0;
  ThresholdHit gap, target, value;
};

// C_x is the largest |x^i| over all iterations of all runs; gaps are evaluated with it once every
// run has finished (from stored snapshots, or by a second identical pass for problems with many
// distinct data weights).
struct ExperimentResult {
  Instance instance;
  Target target;
  double cx = 0.0;
  double gap0 = 0.0;
  std::vector<RunTrace> runs;
  std::vector<SummaryRow> summary;
};

ExperimentResult run_experiment(ExperimentConfig const &cfg);

// First row at or below `threshold` for each metric
SummaryRow threshold_row(RunTrace const &run, double threshold);

// Aligned plain-text threshold table
std::string summary_table(std::vector<SummaryRow> const &rows);

// Writers; all floats with 17 significant digits.
void write_trace_csv(RunTrace const &run, std::string const &path);
void write_summary(std::vector<SummaryRow> const &rows, std::string const &txt_path, std::string const &csv_path);
void write_bands_csv(std::vector<RunTrace const *> const &runs, std::string const &path, double level = 0.90);
void write_gnuplot(ExperimentResult const &res, std::string const &dir, std::string const &stem);

// Writes every artifact of `res` into cfg.out_dir.
void write_artifacts(ExperimentConfig const &cfg, ExperimentResult const &res);

std::string trace_file_name(ExperimentConfig const &cfg, std::string const &variant, std::uint64_t seed);

}  // namespace blockpd
