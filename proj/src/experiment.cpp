#include "blockpd/experiment.hpp"

#include "blockpd/stats.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace blockpd {

namespace {

constexpr std::size_t kMaxSnapshotGroups = 16384;

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::ofstream open_out(std::string const &path) {
  auto const parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) { std::filesystem::create_directories(parent); }
  std::ofstream out(path, std::ios::trunc);
  if (!out) { throw std::runtime_error(fmt::format("cannot write {}", path)); }
  return out;
}

double norm_of(std::span<double const> v) {
  double s = 0.0;
  for (double a : v) { s += a * a; }
  return std::sqrt(s);
}

}  // namespace

std::string to_string(Resolution r) { return r == Resolution::lo ? "lo" : "hi"; }

Resolution parse_resolution(std::string const &name) {
  if (name == "lo") { return Resolution::lo; }
  if (name == "hi") { return Resolution::hi; }
  throw ConfigError("resolution must be 'lo' or 'hi', got '" + name + "'");
}

Instance build_instance(InstanceConfig const &cfg) {
  Instance inst;
  Image full = cfg.image.empty() ? synthetic_test_image(768, 512) : load_image(cfg.image);
  inst.clean = cfg.resolution == Resolution::lo ? downscale(full, 4) : std::move(full);
  bool const lo = cfg.resolution == Resolution::lo;

  CorruptionSpec spec;
  spec.seed = cfg.noise_seed;
  switch (cfg.problem) {
    case ProblemKind::tgv2_denoise:
    case ProblemKind::tv_denoise:
      spec.kind = CorruptionSpec::Kind::gaussian_noise;
      spec.noise_std = cfg.noise_std.value_or(lo ? 6.15 : 29.6);
      break;
    case ProblemKind::tv_deblur:
      spec.kind = CorruptionSpec::Kind::blur;
      spec.blur_std = lo ? 1.0 : 4.0;
      spec.noise_std = cfg.noise_std.value_or(lo ? 0.52 : 2.5);
      break;
    case ProblemKind::tv_undim:
      spec.kind = CorruptionSpec::Kind::dim;
      spec.noise_std = cfg.noise_std.value_or(lo ? 0.52 : 2.5);
      break;
  }
  inst.data = corrupt(inst.clean, spec);

  SaddleProblem P;
  switch (cfg.problem) {
    case ProblemKind::tgv2_denoise:
      inst.alpha = cfg.alpha.value_or(lo ? 4.0 : 16.0);
      inst.beta = cfg.beta.value_or(lo ? 4.4 : 4.4 * 16.0);
      P = build_tgv2_denoise(inst.data.image, inst.alpha, inst.beta);
      break;
    case ProblemKind::tv_denoise:
      inst.alpha = cfg.alpha.value_or(lo ? 4.0 : 16.0);
      P = build_tv_denoise(inst.data.image, inst.alpha);
      break;
    case ProblemKind::tv_deblur:
      inst.alpha = cfg.alpha.value_or(lo ? 2.55 * 0.15 : 2.55);
      P = build_tv_deblur(inst.data.image, inst.alpha, *inst.data.blur);
      break;
    case ProblemKind::tv_undim:
      inst.alpha = cfg.alpha.value_or(lo ? 2.55 * 0.15 : 2.55);
      P = build_tv_undim(inst.data.image, inst.alpha, inst.data.mask);
      break;
  }
  inst.problem = std::make_shared<SaddleProblem const>(std::move(P));
  return inst;
}

std::unique_ptr<Solver> make_solver(Variant const &variant, std::shared_ptr<SaddleProblem const> problem,
                                    VariantSettings const &settings, std::uint64_t seed, SolverOptions opts) {
  auto const &P = *problem;
  double const L = P.K.global_norm_bound();
  auto const steps = default_scalar_steps(L * L, settings.delta);
  if (variant.family == Variant::Family::pdhgm) {
    return std::make_unique<PdhgmSolver>(problem, steps.tau, steps.sigma, 1.0, opts.ergodic);
  }
  if (variant.family == Variant::Family::relax) {
    return std::make_unique<PdhgmSolver>(problem, steps.tau, steps.sigma, settings.relax, opts.ergodic);
  }

  auto const m = P.primal_blocks(), n = P.dual_blocks();
  auto const &conn = P.K.connectivity();
  double const tau0 = steps.tau;
  double const eta0 = 1.0 / tau0;
  bool const increasing = variant.psi_rule == 'I';

  std::vector<double> tau_init(m);
  if (P.kind == ProblemKind::tgv2_denoise) {
    tau_init = {tau0, (increasing ? 3.0 : 8.0) * tau0};
  } else {
    double const lambda = increasing ? 0.1 : 0.01;
    for (std::size_t j = 0; j < m; ++j) { tau_init[j] = tau0 / (lambda + (1.0 - lambda) * P.gamma[j]); }
  }

  std::shared_ptr<KappaFamily const> kappa;
  if (variant.kappa == 'O') {
    if (!P.kappa_balanced) {
      throw VariantError(fmt::format("variant {}: the balanced kappa is only available for TGV2 denoising",
                                     variant.name()));
    }
    kappa = P.kappa_balanced;
  } else {
    kappa = P.kappa_worst;
  }

  std::unique_ptr<Sampler> sampler;
  switch (variant.randomisation) {
    case 'D': sampler = make_deterministic_sampler(conn); break;
    case 'P': sampler = make_fixed_m_sampler(conn, std::max<std::size_t>(1, m / 2), seed); break;
    default:
      sampler = make_alternating_sampler(conn, 0.5, SubsetRule::fixed(std::max<std::size_t>(1, m / 2)),
                                         SubsetRule::fixed(std::max<std::size_t>(1, n / 2)), seed);
      break;
  }
  auto const probs = sampler->probabilities();
  auto const w = CouplingWeights::from_probabilities(probs.pi_hat, probs.nu_hat, true);

  StepConfig cfg;
  cfg.p = settings.p.value_or(variant.p());
  cfg.delta = settings.delta;
  cfg.eta0 = eta0;
  switch (variant.phi_rule) {
    case 'R': cfg.phi_rule = PhiRule::random; break;
    case 'D': cfg.phi_rule = PhiRule::deterministic; break;
    default: cfg.phi_rule = PhiRule::constant; break;
  }
  if (variant.doubly_stochastic()) {
    cfg.perp_rule = PerpRule::proportional;
    cfg.alpha = settings.perp_alpha;
  } else {
    cfg.perp_rule = PerpRule::full_dual;
  }
  bool const constant = cfg.phi_rule == PhiRule::constant;
  double const gt = settings.gamma_tilde.value_or(0.5);
  cfg.rho.assign(m, constant ? 0.0 : settings.rho.value_or(5.0));
  cfg.gamma_tilde.resize(m);
  cfg.phi0.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    cfg.gamma_tilde[j] = constant ? 0.0 : gt * P.gamma[j];
    cfg.phi0[j] = eta0 / tau_init[j];
  }
  cfg.gamma_bar.assign(m, 0.0);
  cfg.psi0 = consistent_psi0(*kappa, w, cfg.phi0, cfg.eta0, cfg.p, cfg.delta);
  if (cfg.phi_rule == PhiRule::deterministic) {
    auto const rep = check_init_bound(cfg, *kappa, w);
    for (std::size_t j = 0; j < m; ++j) { cfg.gamma_bar[j] = settings.gamma_bar_margin * rep.max_gamma_bar[j]; }
  }

  StepController ctl(std::move(cfg), probs, kappa, w);
  if (variant.doubly_stochastic()) {
    return std::make_unique<Alg1Solver>(problem, std::move(sampler), std::move(ctl), opts);
  }
  return std::make_unique<Alg2Solver>(problem, std::move(sampler), std::move(ctl), opts);
}

namespace {

struct PendingRow {
  MetricRow m;
  GapEvaluator::Snapshot snap, ergodic_snap;
  bool has_ergodic = false;
  double ergodic_gap_db = 0.0;  // evaluated directly in the second pass
};

struct PassResult {
  RunTrace trace;
  std::vector<PendingRow> pending;
};

// One run of `variant`. With snapshots, gap fields are filled in later; otherwise gaps use `cx`
// when it is positive and are skipped when it is zero (the norm-tracking pass).
PassResult run_pass(ExperimentConfig const &cfg, Instance const &inst, Target const &target, GapEvaluator const &ev,
                    Variant const &variant, std::uint64_t seed, bool snapshots, double cx, double gap0) {
  auto const &P = *inst.problem;
  SolverOptions opts;
  opts.ergodic = cfg.ergodic_gap;
  auto solver = make_solver(variant, inst.problem, cfg.settings, seed, opts);
  PassResult out;
  auto &tr = out.trace;
  tr.variant = variant.name();
  tr.seed = seed;
  tr.update_fraction = solver->update_fraction();
  bool const metrics = snapshots || cx > 0.0;
  auto hook = [&](Solver &s) {
    auto const x = s.x();
    tr.max_x_norm = std::max(tr.max_x_norm, norm_of(x));
    auto const i = s.iteration();
    if (!metrics || (i % cfg.stride != 0 && i != cfg.iters)) { return false; }
    PendingRow row;
    row.m.variant = tr.variant;
    row.m.iter = i;
    row.m.expected_full_updates = static_cast<double>(i) * tr.update_fraction;
    row.m.target_db = target_db(P.to_image(x), target.image);
    row.m.value = P.objective(x);
    row.m.value_db = value_db(row.m.value, target.value);
    bool const erg = cfg.ergodic_gap && !s.ergodic().empty();
    if (snapshots) {
      row.snap = ev.snapshot(x, s.y());
      if (erg) { row.ergodic_snap = ev.snapshot(s.ergodic().x_tilde(), s.ergodic().y_tilde()); }
    } else {
      row.m.gap = ev.gap(x, s.y(), cx);
      row.m.gap_db = gap_db(row.m.gap, gap0);
      if (erg) { row.ergodic_gap_db = gap_db(ev.gap(s.ergodic().x_tilde(), s.ergodic().y_tilde(), cx), gap0); }
    }
    row.has_ergodic = erg;
    out.pending.push_back(std::move(row));
    return false;
  };
  auto const res = run(*solver, cfg.iters, 1, hook);
  tr.iterations = res.iterations;
  tr.seconds_per_iter = res.iterations ? res.step_seconds / static_cast<double>(res.iterations) : 0.0;
  tr.diagnostics = solver->diagnostics();
  return out;
}

}  // namespace

ExperimentResult run_experiment(ExperimentConfig const &cfg) {
  if (cfg.stride == 0 || cfg.iters == 0 || cfg.seeds == 0) { throw ConfigError("iters, seeds and stride must be positive"); }
  if (cfg.variants.empty()) { throw ConfigError("no variants given"); }
  std::vector<Variant> variants;
  for (auto const &v : cfg.variants) { variants.push_back(parse_variant(v)); }

  ExperimentResult res;
  res.instance = build_instance(cfg.instance);
  auto const &P = *res.instance.problem;
  res.target = compute_target(P, cfg.target_iters, cfg.cache_dir);
  GapEvaluator ev(P);
  bool const snapshots = ev.groups() <= kMaxSnapshotGroups;

  struct Job {
    Variant v;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto const &v : variants) {
    std::size_t const count = v.stochastic() ? cfg.seeds : 1;
    for (std::size_t s = 0; s < count; ++s) { jobs.push_back({v, cfg.seed + s}); }
  }

  std::vector<PassResult> passes;
  for (auto const &job : jobs) {
    passes.push_back(run_pass(cfg, res.instance, res.target, ev, job.v, job.seed, snapshots, 0.0, 0.0));
  }
  res.cx = 0.0;
  for (auto const &p : passes) { res.cx = std::max(res.cx, p.trace.max_x_norm); }
  if (!(res.cx > 0.0)) { throw std::runtime_error("all iterates are zero; C_x is undefined"); }
  std::vector<double> const x0(P.primal_size(), 0.0), y0(P.dual_size(), 0.0);
  res.gap0 = ev.gap(x0, y0, res.cx);

  if (!snapshots) {
    // second identical pass with the final C_x
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      auto again = run_pass(cfg, res.instance, res.target, ev, jobs[k].v, jobs[k].seed, false, res.cx, res.gap0);
      again.trace.max_x_norm = passes[k].trace.max_x_norm;
      passes[k] = std::move(again);
    }
  }
  for (auto &p : passes) {
    auto &tr = p.trace;
    for (auto &row : p.pending) {
      TraceRow out;
      out.m = row.m;
      if (snapshots) {
        out.m.gap = ev.gap(row.snap, res.cx);
        out.m.gap_db = gap_db(out.m.gap, res.gap0);
        if (row.has_ergodic) { out.ergodic_gap_db = gap_db(ev.gap(row.ergodic_snap, res.cx), res.gap0); }
      } else if (row.has_ergodic) {
        out.ergodic_gap_db = row.ergodic_gap_db;
      }
      out.m.cpu_seconds = tr.seconds_per_iter * static_cast<double>(out.m.iter);
      tr.rows.push_back(std::move(out));
    }
    res.runs.push_back(std::move(tr));
  }

  auto thresholds = cfg.thresholds;
  if (thresholds.empty()) {
    thresholds = cfg.instance.resolution == Resolution::lo ? std::vector<double>{-40.0, -60.0}
                                                           : std::vector<double>{-40.0, -50.0};
  }
  for (auto const &run : res.runs) {
    for (double t : thresholds) { res.summary.push_back(threshold_row(run, t)); }
  }
  if (!cfg.out_dir.empty()) { write_artifacts(cfg, res); }
  return res;
}

SummaryRow threshold_row(RunTrace const &run, double threshold) {
  SummaryRow s;
  s.variant = run.variant;
  s.seed = run.seed;
  s.threshold = threshold;
  auto hit = [&](ThresholdHit &h, auto metric) {
    for (auto const &r : run.rows) {
      if (metric(r.m) <= threshold) {
        h.iter = r.m.iter;
        h.expected_full_updates = r.m.expected_full_updates;
        h.seconds = r.m.cpu_seconds;
        return;
      }
    }
  };
  hit(s.gap, [](MetricRow const &m) { return m.gap_db; });
  hit(s.target, [](MetricRow const &m) { return m.target_db; });
  hit(s.value, [](MetricRow const &m) { return m.value_db; });
  return s;
}

void write_trace_csv(RunTrace const &run, std::string const &path) {
  auto out = open_out(path);
  bool const erg = !run.rows.empty() && std::any_of(run.rows.begin(), run.rows.end(),
                                                    [](TraceRow const &r) { return r.ergodic_gap_db != 0.0; });
  out << "variant,seed,iter,expected_full_updates,gap_db,target_db,value_db,gap,value";
  if (erg) { out << ",ergodic_gap_db"; }
  out << '\n';
  for (auto const &r : run.rows) {
    out << r.m.variant << ',' << run.seed << ',' << r.m.iter << ',' << num(r.m.expected_full_updates) << ','
        << num(r.m.gap_db) << ',' << num(r.m.target_db) << ',' << num(r.m.value_db) << ',' << num(r.m.gap) << ','
        << num(r.m.value);
    if (erg) { out << ',' << num(r.ergodic_gap_db); }
    out << '\n';
  }
}

std::string summary_table(std::vector<SummaryRow> const &rows) {
  std::string txt = fmt::format("{:<10} {:>6} {:>6} | {:>7} {:>9} | {:>7} {:>9} | {:>7} {:>9}\n", "variant", "seed",
                                "dB", "gap it", "time", "tgt it", "time", "val it", "time");
  auto it_txt = [](ThresholdHit const &h) { return h.iter ? std::to_string(*h.iter) : std::string("-"); };
  auto sec_txt = [](ThresholdHit const &h) { return h.seconds ? fmt::format("{:.2f}s", *h.seconds) : std::string("-"); };
  for (auto const &r : rows) {
    txt += fmt::format("{:<10} {:>6} {:>6} | {:>7} {:>9} | {:>7} {:>9} | {:>7} {:>9}\n", r.variant, r.seed,
                       fmt::format("{:g}", r.threshold), it_txt(r.gap), sec_txt(r.gap), it_txt(r.target),
                       sec_txt(r.target), it_txt(r.value), sec_txt(r.value));
  }
  return txt;
}

void write_summary(std::vector<SummaryRow> const &rows, std::string const &txt_path, std::string const &csv_path) {
  auto csv = open_out(csv_path);
  csv << "variant,seed,threshold_db,gap_iter,gap_seconds,target_iter,target_seconds,value_iter,value_seconds\n";
  auto cell_iter = [](ThresholdHit const &h) { return h.iter ? std::to_string(*h.iter) : std::string(); };
  auto cell_sec = [](ThresholdHit const &h) { return h.seconds ? num(*h.seconds) : std::string(); };
  for (auto const &r : rows) {
    csv << r.variant << ',' << r.seed << ',' << num(r.threshold) << ',' << cell_iter(r.gap) << ',' << cell_sec(r.gap)
        << ',' << cell_iter(r.target) << ',' << cell_sec(r.target) << ',' << cell_iter(r.value) << ','
        << cell_sec(r.value) << '\n';
  }
  open_out(txt_path) << summary_table(rows);
}

void write_bands_csv(std::vector<RunTrace const *> const &runs, std::string const &path, double level) {
  if (runs.size() < 2) { throw std::invalid_argument("bands need at least two runs"); }
  auto const len = runs.front()->rows.size();
  std::vector<std::vector<double>> gap(runs.size()), tgt(runs.size()), val(runs.size());
  for (std::size_t s = 0; s < runs.size(); ++s) {
    if (runs[s]->rows.size() != len) { throw std::invalid_argument("runs are not aligned"); }
    for (std::size_t k = 0; k < len; ++k) {
      if (runs[s]->rows[k].m.iter != runs.front()->rows[k].m.iter) { throw std::invalid_argument("runs are not aligned"); }
      gap[s].push_back(runs[s]->rows[k].m.gap_db);
      tgt[s].push_back(runs[s]->rows[k].m.target_db);
      val[s].push_back(runs[s]->rows[k].m.value_db);
    }
  }
  auto const bg = bands_over_seeds(gap, level), bt = bands_over_seeds(tgt, level), bv = bands_over_seeds(val, level);
  auto out = open_out(path);
  out << "iter,expected_full_updates,gap_db_mean,gap_db_half_width,target_db_mean,target_db_half_width,"
         "value_db_mean,value_db_half_width\n";
  for (std::size_t k = 0; k < len; ++k) {
    auto const &m = runs.front()->rows[k].m;
    out << m.iter << ',' << num(m.expected_full_updates) << ',' << num(bg[k].mean) << ',' << num(bg[k].half_width)
        << ',' << num(bt[k].mean) << ',' << num(bt[k].half_width) << ',' << num(bv[k].mean) << ','
        << num(bv[k].half_width) << '\n';
  }
}

void write_gnuplot(ExperimentResult const &res, std::string const &dir, std::string const &stem) {
  std::vector<std::string> names;
  for (auto const &run : res.runs) {
    if (std::find(names.begin(), names.end(), run.variant) != names.end()) { continue; }
    names.push_back(run.variant);
    // first seed of each variant
    auto out = open_out((std::filesystem::path(dir) / fmt::format("{}_{}.dat", stem, run.variant)).string());
    out << "# expected_full_updates gap_db target_db value_db\n";
    for (auto const &r : run.rows) {
      out << num(r.m.expected_full_updates) << ' ' << num(r.m.gap_db) << ' ' << num(r.m.target_db) << ' '
          << num(r.m.value_db) << '\n';
    }
  }
  auto gp = open_out((std::filesystem::path(dir) / (stem + ".gp")).string());
  gp << "set terminal pngcairo size 640,480\nset logscale x\nset xlabel 'iteration'\nset ylabel 'dB'\nset key top right\n";
  char const *metric[3] = {"gap", "target", "value"};
  for (int c = 0; c < 3; ++c) {
    gp << fmt::format("set output '{}_{}.png'\nplot ", stem, metric[c]);
    for (std::size_t k = 0; k < names.size(); ++k) {
      gp << fmt::format("{}'{}_{}.dat' using 1:{} with lines title '{}'", k ? ", " : "", stem, names[k], c + 2,
                        names[k]);
    }
    gp << '\n';
  }
}

std::string trace_file_name(ExperimentConfig const &cfg, std::string const &variant, std::uint64_t seed) {
  return fmt::format("{}_{}_{}_s{}.csv", to_string(cfg.instance.problem), to_string(cfg.instance.resolution), variant,
                     seed);
}

void write_artifacts(ExperimentConfig const &cfg, ExperimentResult const &res) {
  namespace fs = std::filesystem;
  fs::path const dir(cfg.out_dir);
  fs::create_directories(dir);
  std::string const stem = fmt::format("{}_{}", to_string(cfg.instance.problem), to_string(cfg.instance.resolution));
  for (auto const &run : res.runs) { write_trace_csv(run, (dir / trace_file_name(cfg, run.variant, run.seed)).string()); }
  write_summary(res.summary, (dir / (stem + "_summary.txt")).string(), (dir / (stem + "_summary.csv")).string());
  {
    auto out = open_out((dir / (stem + "_timing.csv")).string());
    out << "variant,seed,iterations,seconds_per_iter,update_fraction,max_x_norm\n";
    for (auto const &run : res.runs) {
      out << run.variant << ',' << run.seed << ',' << run.iterations << ',' << num(run.seconds_per_iter) << ','
          << num(run.update_fraction) << ',' << num(run.max_x_norm) << '\n';
    }
  }
  {
    auto out = open_out((dir / (stem + "_run.txt")).string());
    out << "C_x = " << num(res.cx) << "\ngap0 = " << num(res.gap0) << "\ntarget_value = " << num(res.target.value)
        << "\ntarget_iterations = " << res.target.iterations
        << "\ntarget_stabilization_db = " << num(res.target.stabilization_db)
        << "\nsnr_db = " << num(res.instance.data.snr_db) << "\nalpha = " << num(res.instance.alpha)
        << "\nbeta = " << num(res.instance.beta) << '\n';
  }
  std::vector<std::string> seen;
  for (auto const &run : res.runs) {
    if (std::find(seen.begin(), seen.end(), run.variant) != seen.end()) { continue; }
    seen.push_back(run.variant);
    std::vector<RunTrace const *> group;
    for (auto const &r : res.runs) {
      if (r.variant == run.variant) { group.push_back(&r); }
    }
    if (group.size() >= 2) { write_bands_csv(group, (dir / fmt::format("{}_{}_bands.csv", stem, run.variant)).string()); }
  }
  write_gnuplot(res, dir.string(), stem);
}

}  // namespace blockpd
