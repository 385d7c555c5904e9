// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any fails.
#include "CLI11.hpp"

#include "blockpd/experiment.hpp"
#include "blockpd/image_io.hpp"
#include "blockpd/kappa.hpp"
#include "blockpd/metrics.hpp"
#include "blockpd/sampling.hpp"
#include "blockpd/stats.hpp"
#include "fixtures.hpp"
#include "support.hpp"

#include <fmt/format.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

using namespace blockpd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  std::string cache_dir;
  std::string out_dir;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::optional<std::size_t> first_iter(RunTrace const &run, double level, double MetricRow::*field) {
  for (auto const &r : run.rows) {
    if (r.m.*field <= level) { return r.m.iter; }
  }
  return std::nullopt;
}

std::string iter_text(std::optional<std::size_t> i) { return i ? std::to_string(*i) : std::string("never"); }

// 1: adjoint pairs

Outcome adjoints(Context const &) {
  auto const t0 = std::chrono::steady_clock::now();
  auto const f = testing::noisy_scene(48, 32, 6.15);
  auto const g = f.grid;
  auto const blur = make_gaussian_factors(g, 1.0);
  FourierBasis basis(g);

  std::vector<std::pair<std::string, LinearMap>> maps;
  maps.emplace_back("gradient", gradient_map(g));
  maps.emplace_back("symmetrised gradient", sym_gradient_map(g));
  maps.emplace_back("fourier blur", LinearMap{g.pixels(), g.pixels(),
                                              [&](std::span<double const> u, std::span<double> v) {
                                                auto const b = fourier_blur(u, blur);
                                                std::copy(b.begin(), b.end(), v.begin());
                                              },
                                              [&](std::span<double const> u, std::span<double> v) {
                                                auto const b = fourier_blur(u, blur);
                                                std::copy(b.begin(), b.end(), v.begin());
                                              }});
  maps.emplace_back("fourier basis", LinearMap{g.pixels(), g.pixels(),
                                               [&](std::span<double const> c, std::span<double> u) { basis.to_image(c, u); },
                                               [&](std::span<double const> u, std::span<double> c) { basis.to_coords(u, c); }});
  auto const tgv = build_tgv2_denoise(f, 4.0, 4.4);
  auto const tv = build_tv_denoise(f, 4.0);
  auto const deb = build_tv_deblur(f, 0.4, blur);
  auto const und = build_tv_undim(f, 0.4, make_dimming_mask(g));
  maps.emplace_back("K tgv2", tgv.K.as_map());
  maps.emplace_back("K tv", tv.K.as_map());
  maps.emplace_back("K deblur", deb.K.as_map());
  maps.emplace_back("K undim", und.K.as_map());

  double worst = 0.0;
  std::string worst_name;
  std::uint64_t seed = 100;
  for (auto const &[name, map] : maps) {
    double const e = testing::worst_adjoint_error(map, 1000, seed++);
    if (e >= worst) {
      worst = e;
      worst_name = name;
    }
  }
  double const secs = seconds_since(t0);
  return {worst < 1e-10 && secs < 10.0,
          fmt::format("{} pairs x 1000 trials, worst relative error {:.2e} ({}), {:.1f} s", maps.size(), worst,
                      worst_name, secs)};
}

// 2: single-block constant rule against PDHGM

Outcome reduction(Context const &) {
  auto const P = testing::single_block_tv(testing::noisy_scene(32, 32, 6.15), 4.0);
  auto const steps = default_scalar_steps(kGradientNormSq, 0.01);
  PdhgmSolver ref(P, steps.tau, steps.sigma);
  auto blk = make_solver(parse_variant("A-DCBM"), P, {}, 1);
  auto const &alg2 = dynamic_cast<Alg2Solver const &>(*blk);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    ref.step();
    blk->step();
    worst = std::max({worst, testing::max_rel_diff(ref.x(), blk->x()), testing::max_rel_diff(ref.y(), blk->y())});
  }
  double const prod = alg2.last_tau()[0] * alg2.last_sigma()[0] * kGradientNormSq;
  return {worst <= 1e-12,
          fmt::format("max relative iterate difference {:.2e} over 100 iterations, tau sigma |K|^2 = {:.15g}", worst,
                      prod)};
}

// 3: accelerated step sequence

Outcome acceleration(Context const &) {
  auto const P = testing::single_block_tv(testing::noisy_scene(32, 32, 6.15), 4.0);
  auto sampler = make_deterministic_sampler(P->K.connectivity());
  auto const probs = sampler->probabilities();
  auto const w = CouplingWeights::from_probabilities(probs.pi_hat, probs.nu_hat, true);
  auto const steps = default_scalar_steps(kGradientNormSq, 0.01);
  StepConfig cfg;
  cfg.phi_rule = PhiRule::accel_full;
  cfg.perp_rule = PerpRule::full_dual;
  cfg.p = 0.5;
  cfg.eta0 = 1.0 / steps.tau;
  cfg.phi0 = {cfg.eta0 / steps.tau};
  double const gamma = P->gamma[0];
  cfg.gamma_bar = {gamma};
  cfg.gamma_tilde = {gamma};
  cfg.psi0 = consistent_psi0(*P->kappa_worst, w, cfg.phi0, cfg.eta0, cfg.p, cfg.delta);
  StepController ctl(cfg, probs, P->kappa_worst, w);
  Alg2Solver s(P, std::move(sampler), std::move(ctl));
  double ref = steps.tau, worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    s.step();
    worst = std::max(worst, std::abs(s.last_tau()[0] - ref) / ref);
    ref /= std::sqrt(1.0 + 2.0 * gamma * ref);
  }
  return {worst <= 1e-12, fmt::format("max relative deviation from tau_(i+1) = tau_i / sqrt(1 + 2 gamma tau_i): "
                                      "{:.2e} over 1000 steps, final tau {:.4e}",
                                      worst, s.last_tau()[0])};
}

// 4: kappa checker

Outcome kappa_suite(Context const &) {
  auto const f = testing::noisy_scene(16, 12, 6.15);
  auto const small = testing::noisy_scene(8, 8, 0.5);
  auto const tgv = build_tgv2_denoise(f, 4.0, 4.4);
  auto const deb = build_tv_deblur(small, 0.4, make_gaussian_factors(small.grid, 1.0));
  auto const und = build_tv_undim(small, 0.4, make_dimming_mask(small.grid));
  struct Case {
    std::string name;
    BlockOperator const *K;
    KappaFamily const *kappa;
  };
  std::vector<Case> cases{{"tgv2 worst-case", &tgv.K, tgv.kappa_worst.get()},
                          {"tgv2 balanced", &tgv.K, tgv.kappa_balanced.get()},
                          {"deblur worst-case", &deb.K, deb.kappa_worst.get()},
                          {"undim worst-case", &und.K, und.kappa_worst.get()}};
  bool ok = true;
  std::string detail;
  std::uint64_t seed = 7;
  for (auto const &c : cases) {
    auto const r = check_kappa_estimate(*c.K, *c.kappa, 1000, seed++);
    ok = ok && r.pass;
    detail += fmt::format("{} {}/1000 ok (worst ratio {:.4f}); ", c.name, r.trials - r.failures, r.worst_ratio);
  }
  auto const bad = scaled_kappa(tgv.kappa_balanced, 0.5);
  auto const r = check_kappa_estimate(tgv.K, *bad, 1000, seed);
  ok = ok && !r.pass;
  detail += fmt::format("scaled-down balanced rejected in {}/1000 trials", r.failures);
  return {ok, detail};
}

// 5: coupling identities

Outcome coupling(Context const &) {
  auto const P = std::make_shared<SaddleProblem const>(build_tgv2_denoise(testing::noisy_scene(32, 32, 6.15), 4.0, 4.4));
  SolverOptions opts;
  opts.check_coupling = true;
  auto alg2 = make_solver(parse_variant("A-PDBO"), P, {}, 1, opts);
  for (int i = 0; i < 10000; ++i) { alg2->step(); }
  auto const &d = alg2->diagnostics();
  double const ulps = d.worst_alg2_error / std::numeric_limits<double>::epsilon();
  bool const ok2 = d.coupling_failures == 0 && ulps <= 4.0;

  auto alg1 = make_solver(parse_variant("A-BCBO"), P, {}, 2);
  auto const &a1 = dynamic_cast<Alg1Solver const &>(*alg1);
  double const eta = a1.controller().state().eta;
  std::size_t const N = 10000;
  double sum[2] = {0, 0}, sum2[2] = {0, 0};
  for (std::size_t i = 0; i < N; ++i) {
    alg1->step();
    for (std::size_t j = 0; j < 2; ++j) {
      double const v = a1.last_omega()[j];
      sum[j] += v;
      sum2[j] += v * v;
    }
  }
  bool ok1 = true;
  std::string detail = fmt::format("primal-randomized: tau phi pi vs eta within {:.1f} ulp over 10^4 steps, {} kappa "
                                   "failures; doubly-stochastic constant rule:",
                                   ulps, d.coupling_failures);
  for (std::size_t j = 0; j < 2; ++j) {
    double const mean = sum[j] / N;
    double const se = std::sqrt((sum2[j] - N * mean * mean) / (N - 1) / N);
    double const z = (mean - eta) / se;
    ok1 = ok1 && std::abs(z) <= 3.0;
    detail += fmt::format(" block {} mean/eta = {:.5f} ({:+.2f} SE)", j, mean / eta, z);
  }
  return {ok1 && ok2, detail};
}

// 6: largest feasible gamma-bar on lo-res TGV2

Outcome init_bound(Context const &) {
  InstanceConfig ic;
  auto const inst = build_instance(ic);
  VariantSettings vs;
  vs.gamma_bar_margin = 1.0;
  auto gb = [&](char const *name) {
    auto s = make_solver(parse_variant(name), inst.problem, vs, 1);
    return dynamic_cast<Alg2Solver &>(*s).controller().config().gamma_bar[0];
  };
  double const half = gb("A-DDBO"), one = gb("A-DDIO");
  bool const ok = std::abs(half - 0.0105) <= 0.0005 && std::abs(one - 0.0090) <= 0.0005;
  return {ok, fmt::format("max feasible gamma-bar_1: p=1/2 {:.5f} (want 0.0105), p=1 {:.5f} (want 0.0090)", half, one)};
}

// 7: lo-res TGV2 iteration counts

Outcome table(Context const &ctx) {
  auto const t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg;
  cfg.variants = {"PDHGM", "Relax", "A-DDBO", "A-DDIO"};
  cfg.iters = 1200;
  cfg.stride = 10;
  cfg.cache_dir = ctx.cache_dir;
  cfg.out_dir = ctx.out_dir.empty() ? std::string() : (fs::path(ctx.out_dir) / "criterion7").string();
  auto const res = run_experiment(cfg);
  double const secs = seconds_since(t0);
  bool ok = secs < 300.0;
  std::string detail;
  for (auto const &run : res.runs) {
    auto const g = first_iter(run, -60.0, &MetricRow::gap_db);
    auto const t = first_iter(run, -60.0, &MetricRow::target_db);
    ok = ok && g && *g <= 120 && t && *t <= 1200;
    detail += fmt::format("{} gap {} target {}; ", run.variant, iter_text(g), iter_text(t));
  }
  detail += fmt::format("{:.0f} s{}", secs, res.target.from_cache ? " (cached target)" : "");
  return {ok, detail};
}

// 8: ergodic rate of the unaccelerated method

Outcome rate(Context const &ctx) {
  ExperimentConfig cfg;
  cfg.instance.problem = ProblemKind::tv_denoise;
  cfg.variants = {"PDHGM"};
  cfg.iters = 5000;
  cfg.stride = 10;
  cfg.ergodic_gap = true;
  cfg.target_iters = 10000;  // the target is not used here
  cfg.cache_dir = ctx.cache_dir;
  auto const res = run_experiment(cfg);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (auto const &r : res.runs.front().rows) {
    if (r.m.iter < 100 || r.m.iter > 5000) { continue; }
    double const x = std::log10(static_cast<double>(r.m.iter)), y = r.ergodic_gap_db / 20.0;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1;
  }
  double const slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {slope <= -0.8, fmt::format("log-log slope of the ergodic gap over iterations 100-5000: {:.3f} ({} points)",
                                     slope, static_cast<int>(n))};
}

// 9: accelerated vs unaccelerated distance to target

Outcome mixed_rate(Context const &ctx) {
  ExperimentConfig cfg;
  cfg.variants = {"A-DDBO", "A-DCBO"};
  cfg.iters = 5000;
  cfg.stride = 100;
  cfg.cache_dir = ctx.cache_dir;
  auto const res = run_experiment(cfg);
  double const acc = res.runs[0].rows.back().m.target_db, plain = res.runs[1].rows.back().m.target_db;
  return {acc <= plain - 10.0,
          fmt::format("target dB at 5000: A-DDBO {:.1f}, A-DCBO {:.1f}, difference {:.1f} dB", acc, plain, plain - acc)};
}

// 10: 50-seed bands and reproducibility

std::string slurp(fs::path const &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility(Context const &ctx) {
  auto const base = fs::path(ctx.out_dir.empty() ? fs::temp_directory_path().string() : ctx.out_dir) / "criterion10";
  ExperimentConfig cfg;
  cfg.variants = {"A-PDBO"};
  cfg.seeds = 50;
  cfg.stride = 10;
  cfg.cache_dir = ctx.cache_dir;
  // expected full updates per iteration is 3/4 for this sampler
  InstanceConfig ic;
  auto const probe = make_solver(parse_variant("A-PDBO"), build_instance(ic).problem, {}, 1);
  cfg.iters = static_cast<std::size_t>(std::ceil(5000.0 / probe->update_fraction()));

  cfg.out_dir = (base / "a").string();
  fs::remove_all(cfg.out_dir);
  auto const res = run_experiment(cfg);
  std::vector<double> at;
  for (auto const &run : res.runs) {
    for (auto const &r : run.rows) {
      if (r.m.expected_full_updates >= 5000.0) {
        at.push_back(r.m.gap_db);
        break;
      }
    }
  }
  auto const band = t_interval(at, 0.90);
  bool const narrow = at.size() == 50 && band.half_width < 0.2 * std::abs(band.mean);

  cfg.out_dir = (base / "b").string();
  fs::remove_all(cfg.out_dir);
  run_experiment(cfg);
  std::size_t same = 0, total = 0;
  for (std::uint64_t s = 1; s <= 50; ++s) {
    auto const name = trace_file_name(cfg, "A-PDBO", s);
    ++total;
    auto const a = slurp(base / "a" / name);
    if (!a.empty() && a == slurp(base / "b" / name)) { ++same; }
  }
  return {narrow && same == total,
          fmt::format("{} iterations; gap dB at expected iteration 5000: mean {:.2f}, 90% half-width {:.3f} ({:.2f}% "
                      "of |mean|); {}/{} trace CSVs byte-identical on rerun",
                      cfg.iters, band.mean, band.half_width, 100.0 * band.half_width / std::abs(band.mean), same, total)};
}

// 11: frozen-block and nesting fuzz

std::unique_ptr<Solver> fuzz_solver(std::shared_ptr<SaddleProblem const> P, int kind, std::uint64_t seed) {
  auto const &conn = P->K.connectivity();
  std::unique_ptr<Sampler> sampler;
  bool alg1 = false;
  switch (kind) {
    case 0: sampler = make_deterministic_sampler(conn); break;
    case 1: sampler = make_fixed_m_sampler(conn, 1, seed); break;
    case 2: sampler = make_independent_sampler(conn, {0.3, 0.8}, seed); break;
    case 3:
      sampler = make_alternating_sampler(conn, 0.5, SubsetRule::fixed(1), SubsetRule::fixed(1), seed);
      alg1 = true;
      break;
    case 4:
      sampler = make_alternating_sampler(conn, 0.5, SubsetRule::independent_probs({0.5, 0.5}),
                                         SubsetRule::independent_probs({0.5, 0.5}), seed);
      alg1 = true;
      break;
    default:
      sampler = make_alternating_sampler(conn, 0.4, SubsetRule::fixed(1), SubsetRule::independent_probs({0.6, 0.6}),
                                         seed);
      alg1 = true;
      break;
  }
  auto const probs = sampler->probabilities();
  auto const w = CouplingWeights::from_probabilities(probs.pi_hat, probs.nu_hat, true);
  auto const steps = default_scalar_steps(kTgv2NormSq);
  StepConfig cfg;
  cfg.phi_rule = kind % 2 ? PhiRule::random : PhiRule::deterministic;
  cfg.p = kind % 3 == 0 ? 1.0 : 0.5;
  cfg.perp_rule = alg1 ? PerpRule::proportional : PerpRule::full_dual;
  if (alg1) {
    double margin = 1.0;
    for (std::size_t j = 0; j < probs.pi.size(); ++j) { margin = std::min(margin, probs.pi[j] - probs.pi_hat[j]); }
    for (std::size_t l = 0; l < probs.nu.size(); ++l) { margin = std::min(margin, probs.nu[l] - probs.nu_hat[l]); }
    cfg.alpha = 0.9 * margin;
  }
  cfg.eta0 = 1.0 / steps.tau;
  cfg.phi0 = {cfg.eta0 / steps.tau, cfg.eta0 / (8.0 * steps.tau)};
  cfg.rho = {5.0, 5.0};
  cfg.gamma_tilde = {0.5, 0.0};
  cfg.gamma_bar = {0.0, 0.0};
  cfg.psi0 = consistent_psi0(*P->kappa_balanced, w, cfg.phi0, cfg.eta0, cfg.p, cfg.delta);
  if (cfg.phi_rule == PhiRule::deterministic) {
    cfg.gamma_bar[0] = 0.99 * check_init_bound(cfg, *P->kappa_balanced, w).max_gamma_bar[0];
  }
  StepController ctl(std::move(cfg), probs, P->kappa_balanced, w);
  SolverOptions opts;
  opts.check_frozen = opts.check_nesting = opts.check_coupling = true;
  opts.ergodic = false;
  if (alg1) { return std::make_unique<Alg1Solver>(P, std::move(sampler), std::move(ctl), opts); }
  return std::make_unique<Alg2Solver>(P, std::move(sampler), std::move(ctl), opts);
}

Outcome fuzz(Context const &) {
  auto const P = std::make_shared<SaddleProblem const>(build_tgv2_denoise(testing::noisy_scene(16, 16, 6.15), 4.0, 4.4));
  std::size_t const total = 100000, chunk = 500;
  std::size_t frozen = 0, nesting = 0, couplings = 0, done = 0;
  std::uint64_t seed = 1;
  std::vector<std::string> first;
  // fresh solver of a rotating sampler kind every chunk
  for (int round = 0; done < total; ++round) {
    auto s = fuzz_solver(P, round % 6, seed++);
    for (std::size_t i = 0; i < chunk; ++i) { s->step(); }
    done += chunk;
    auto const &d = s->diagnostics();
    frozen += d.frozen_violations;
    nesting += d.nesting_violations;
    couplings += d.coupling_failures;
    if (first.empty() && !d.messages.empty()) { first.push_back(d.messages.front()); }
  }
  std::string detail = fmt::format("{} iterations over 6 sampler kinds: {} frozen-block and {} nesting violations, {} "
                                   "kappa-condition failures",
                                   done, frozen, nesting, couplings);
  if (!first.empty()) { detail += "; first: " + first.front(); }
  return {frozen == 0 && nesting == 0, detail};
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"blockpd acceptance checks"};
  std::vector<int> which;
  Context ctx;
  app.add_option("--criterion", which, "criteria to run (default all)")->check(CLI::Range(1, 11))->delimiter(',');
  app.add_option("--cache-dir", ctx.cache_dir, "target cache directory");
  app.add_option("--out-dir", ctx.out_dir, "directory for experiment artifacts");
  CLI11_PARSE(app, argc, argv);
  if (which.empty()) {
    for (int k = 1; k <= 11; ++k) { which.push_back(k); }
  }

  std::vector<std::pair<std::string, std::function<Outcome(Context const &)>>> const criteria{
      {"adjoint suite", adjoints},
      {"reduction to PDHGM", reduction},
      {"acceleration sequence", acceleration},
      {"kappa suite", kappa_suite},
      {"coupling identities", coupling},
      {"initialization bound", init_bound},
      {"lo-res TGV2 iteration counts", table},
      {"ergodic rate", rate},
      {"accelerated vs unaccelerated", mixed_rate},
      {"50-seed bands and reproducibility", reproducibility},
      {"frozen-block and nesting fuzz", fuzz},
  };
  int failed = 0;
  for (int k : which) {
    auto const &[name, fn] = criteria[static_cast<std::size_t>(k - 1)];
    Outcome o;
    try {
      o = fn(ctx);
    } catch (std::exception const &e) {
      o = {false, std::string("error: ") + e.what()};
    }
    fmt::print("{} {:>2} {}: {}\n", o.pass ? "PASS" : "FAIL", k, name, o.detail);
    std::fflush(stdout);
    if (!o.pass) { ++failed; }
  }
  return failed == 0 ? 0 : 1;
}
