#include "blockpd/experiment.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <exception>
#include <optional>
#include <string>
#include <vector>

namespace {

template <class T>
void set_opt(std::optional<T> &dst, CLI::Option const *opt, T value) {
  if (opt->count() > 0) { dst = value; }
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Block-proximal primal-dual experiments"};
  app.set_config("--config", "", "key = value configuration file; command-line flags override it");

  std::string problem = "tgv2", resolution = "lo", out_dir = "results", image, cache_dir;
  std::vector<std::string> variants{"PDHGM"};
  std::size_t iters = 5000, seeds = 1, stride = 10, target_iters = 200000;
  std::uint64_t seed = 1, noise_seed = 1;
  double p = 0.5, delta = 0.01, alpha = 0.0, beta = 0.0, rho = 5.0, gamma_tilde = 0.5, noise_std = 0.0;
  double relax = 1.5, perp_alpha = 0.225;
  std::vector<double> thresholds;
  bool ergodic_gap = false, quiet = false;

  app.add_option("--problem", problem, "tgv2, tv, deblur or undim")->check(CLI::IsMember({"tgv2", "tv", "deblur", "undim"}));
  app.add_option("--variant", variants, "PDHGM, Relax or A-XYZW; repeat or separate with commas")->delimiter(',');
  app.add_option("--resolution", resolution, "lo (192x128) or hi (768x512)")->check(CLI::IsMember({"lo", "hi"}));
  app.add_option("--iters", iters, "iterations per run")->check(CLI::PositiveNumber);
  app.add_option("--seeds", seeds, "runs per stochastic variant")->check(CLI::PositiveNumber);
  app.add_option("--stride", stride, "metric stride")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "first sampler seed");
  app.add_option("--out-dir", out_dir, "output directory");
  auto *o_p = app.add_option("--p", p, "exponent of the psi rule (0.5 or 1); overrides the variant letter")
                  ->check(CLI::IsMember({0.5, 1.0}));
  app.add_option("--delta", delta, "step-length slack in (0, 1)");
  auto *o_alpha = app.add_option("--alpha", alpha, "regularisation weight alpha");
  auto *o_beta = app.add_option("--beta", beta, "TGV2 second-order weight beta");
  auto *o_rho = app.add_option("--rho", rho, "acceleration offset rho_j of the phi rules");
  auto *o_gt = app.add_option("--gamma-tilde", gamma_tilde, "gamma-tilde as a fraction of gamma_j");
  app.add_option("--image", image, "PNG or PGM input (synthetic scene when omitted)")->check(CLI::ExistingFile);
  auto *o_noise = app.add_option("--noise-std", noise_std, "noise standard deviation");
  app.add_option("--noise-seed", noise_seed, "seed of the corruption noise");
  app.add_option("--target-iters", target_iters, "PDHGM iterations for the target solution");
  app.add_option("--cache-dir", cache_dir, "target cache directory (default OUT_DIR/cache)");
  app.add_option("--relax", relax, "inertial parameter of Relax");
  app.add_option("--perp-alpha", perp_alpha, "proportional coupling factor of the B-variants");
  app.add_option("--thresholds", thresholds, "dB levels of the summary table")->delimiter(',');
  app.add_flag("--ergodic-gap", ergodic_gap, "also report the gap at the ergodic averages");
  app.add_flag("--quiet", quiet, "do not print the summary table");

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const &e) {
    return app.exit(e);
  }

  blockpd::ExperimentConfig cfg;
  try {
    cfg.instance.problem = blockpd::parse_problem_kind(problem);
    cfg.instance.resolution = blockpd::parse_resolution(resolution);
    cfg.instance.image = image;
    cfg.instance.noise_seed = noise_seed;
    set_opt(cfg.instance.alpha, o_alpha, alpha);
    set_opt(cfg.instance.beta, o_beta, beta);
    set_opt(cfg.instance.noise_std, o_noise, noise_std);
    cfg.variants = variants;
    for (auto const &v : variants) { blockpd::parse_variant(v); }
    cfg.iters = iters;
    cfg.seeds = seeds;
    cfg.stride = stride;
    cfg.seed = seed;
    cfg.settings.delta = delta;
    set_opt(cfg.settings.p, o_p, p);
    set_opt(cfg.settings.rho, o_rho, rho);
    set_opt(cfg.settings.gamma_tilde, o_gt, gamma_tilde);
    cfg.settings.relax = relax;
    cfg.settings.perp_alpha = perp_alpha;
    cfg.target_iters = target_iters;
    cfg.out_dir = out_dir;
    cfg.cache_dir = cache_dir.empty() ? out_dir + "/cache" : cache_dir;
    cfg.thresholds = thresholds;
    cfg.ergodic_gap = ergodic_gap;
  } catch (std::invalid_argument const &e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return 2;
  }

  try {
    auto const res = blockpd::run_experiment(cfg);
    if (!quiet) {
      fmt::print("C_x = {:.6g}, initial gap = {:.6g}, target stabilization {:.1f} dB\n", res.cx, res.gap0,
                 res.target.stabilization_db);
      fmt::print("{}", blockpd::summary_table(res.summary));
    }
  } catch (std::invalid_argument const &e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return 2;
  } catch (std::exception const &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
