#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "blockpd/experiment.hpp"
#include "blockpd/metrics.hpp"
#include "blockpd/solvers.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace blockpd;

namespace {

std::shared_ptr<SaddleProblem const> tgv2(std::size_t w, std::size_t h) {
  return std::make_shared<SaddleProblem const>(build_tgv2_denoise(testing::noisy_scene(w, h, 6.15), 4.0, 4.4));
}

std::unique_ptr<Solver> block_solver(std::string const &name, std::shared_ptr<SaddleProblem const> P,
                                     std::uint64_t seed = 1, SolverOptions opts = {}) {
  return make_solver(parse_variant(name), std::move(P), VariantSettings{}, seed, opts);
}

SolverOptions all_checks() {
  SolverOptions o;
  o.check_frozen = o.check_nesting = o.check_coupling = true;
  return o;
}

StepController const &controller_of(Solver const &s) {
  if (auto const *a = dynamic_cast<Alg1Solver const *>(&s)) { return a->controller(); }
  return dynamic_cast<Alg2Solver const &>(s).controller();
}

}  // namespace

TEST_CASE("single-block constant rule reproduces PDHGM") {
  auto const P = testing::single_block_tv(testing::noisy_scene(32, 32, 6.15), 4.0);
  auto const steps = default_scalar_steps(kGradientNormSq, 0.01);
  PdhgmSolver ref(P, steps.tau, steps.sigma);
  auto blk = block_solver("A-DCBM", P);
  auto const &alg2 = dynamic_cast<Alg2Solver const &>(*blk);
  double worst_x = 0.0, worst_y = 0.0;
  for (int i = 0; i < 100; ++i) {
    ref.step();
    blk->step();
    CHECK(alg2.last_tau()[0] == doctest::Approx(steps.tau).epsilon(1e-14));
    CHECK(alg2.last_sigma()[0] == doctest::Approx(1.9 / std::sqrt(8.0)).epsilon(1e-14));
    worst_x = std::max(worst_x, testing::max_rel_diff(ref.x(), blk->x()));
    worst_y = std::max(worst_y, testing::max_rel_diff(ref.y(), blk->y()));
  }
  CHECK(worst_x < 1e-12);
  CHECK(worst_y < 1e-12);
}

TEST_CASE("primal-randomized method keeps tau phi pi = eta exactly") {
  auto const P = tgv2(16, 12);
  for (auto const *name : {"A-PDBO", "A-PRIO", "A-DDBO", "A-DDIO", "A-PCBO"}) {
    CAPTURE(name);
    auto s = block_solver(name, P, 3, all_checks());
    auto const &alg2 = dynamic_cast<Alg2Solver const &>(*s);
    auto const &ctl = alg2.controller();
    for (int i = 0; i < 1500; ++i) {
      double const eta = ctl.state().eta, psi = ctl.state().psi[0];
      s->step();
      auto const &plan = alg2.last_plan();
      for (std::size_t j = 0; j < 2; ++j) {
        if (!plan.S[j]) { continue; }
        // theta matches the general formula tau phi / (sigma psi) against every dual block
        double const theta = alg2.last_theta()[j];
        double const general = alg2.last_omega()[j] / (alg2.last_sigma()[0] * psi);
        CHECK(theta == doctest::Approx(general).epsilon(1e-14));
      }
      // eta never decreases
      CHECK(ctl.state().eta >= eta);
    }
    auto const &d = s->diagnostics();
    CHECK(d.nesting_violations == 0);
    CHECK(d.frozen_violations == 0);
    CHECK(d.coupling_failures == 0);
    CHECK(d.worst_alg2_error <= 4.0 * std::numeric_limits<double>::epsilon());
    CHECK(d.worst_coupling_ratio <= 1.0 + 1e-12);
  }
}

TEST_CASE("doubly-stochastic method passes every run-time check") {
  auto const tgv = tgv2(16, 12);
  for (auto const *name : {"A-BDBO", "A-BRBO", "A-BCBO", "A-BDIO", "A-BRIM"}) {
    CAPTURE(name);
    auto s = block_solver(name, tgv, 5, all_checks());
    for (int i = 0; i < 1500; ++i) { s->step(); }
    auto const &d = s->diagnostics();
    CHECK(d.nesting_violations == 0);
    CHECK(d.frozen_violations == 0);
    CHECK(d.coupling_failures == 0);
    CHECK(d.messages.empty());
  }
  InstanceConfig ic;
  ic.problem = ProblemKind::tv_undim;
  auto const inst = build_instance(ic);
  auto s = block_solver("A-BRBM", inst.problem, 7, all_checks());
  for (int i = 0; i < 200; ++i) { s->step(); }
  CHECK(s->diagnostics().frozen_violations == 0);
  CHECK(s->diagnostics().nesting_violations == 0);
  CHECK(s->diagnostics().coupling_failures == 0);
}

TEST_CASE("psi follows eta through the exponent 2 - 1/p") {
  auto const P = tgv2(12, 8);
  for (auto const *name : {"A-DDBO", "A-DDIO", "A-BRBO", "A-BDIO"}) {
    CAPTURE(name);
    auto s = block_solver(name, P, 2);
    auto const &ctl = controller_of(*s);
    auto const psi0 = ctl.config().psi0;
    double const p = ctl.config().p;
    double eta_prev = ctl.state().eta;
    for (int i = 0; i < 300; ++i) {
      s->step();
      auto const &st = ctl.state();
      CHECK(st.eta >= eta_prev);
      eta_prev = st.eta;
      for (std::size_t l = 0; l < 2; ++l) {
        double const expect = p == 0.5 ? psi0[l] : psi0[l] * st.eta;
        CHECK(st.psi[l] == doctest::Approx(expect).epsilon(1e-14));
      }
    }
    // deterministic rule lower bound on phi
    if (ctl.config().phi_rule == PhiRule::deterministic) {
      auto const &cfg = ctl.config();
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(ctl.state().phi[j] >= cfg.phi0[j] + 2.0 * 300 * (cfg.rho[j] + cfg.gamma_bar[j] * cfg.eta0) * (1 - 1e-12));
      }
    }
  }
}

TEST_CASE("doubly-stochastic constant rule: mean of phi tau over S is eta") {
  auto const P = tgv2(8, 8);
  auto s = block_solver("A-BCBO", P, 11);
  auto const &alg1 = dynamic_cast<Alg1Solver const &>(*s);
  double const eta = alg1.controller().state().eta;
  std::size_t const N = 10000;
  std::vector<double> sum(2, 0.0), sum2(2, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    s->step();
    for (std::size_t j = 0; j < 2; ++j) {
      double const v = alg1.last_omega()[j];  // zero outside S
      sum[j] += v;
      sum2[j] += v * v;
    }
  }
  CHECK(alg1.controller().state().eta == eta);
  for (std::size_t j = 0; j < 2; ++j) {
    double const mean = sum[j] / N;
    double const var = (sum2[j] - N * mean * mean) / (N - 1);
    double const se = std::sqrt(var / N);
    CAPTURE(j);
    CAPTURE(mean);
    CAPTURE(se);
    CHECK(std::abs(mean - eta) <= 3.0 * se);
  }
}

TEST_CASE("every variant approaches the PDHGM solution") {
  auto const P = tgv2(12, 8);
  auto const target = compute_target(*P, 20000);
  CHECK(target.stabilization_db < -100.0);
  for (auto const *name : {"PDHGM", "Relax", "A-DDBO", "A-DDIO", "A-DRBO", "A-PDBO", "A-BDBO", "A-BRIO"}) {
    CAPTURE(name);
    auto s = block_solver(name, P, 4);
    double first = 0.0;
    for (int i = 0; i < 3000; ++i) {
      s->step();
      if (i == 9) { first = target_db(P->to_image(s->x()), target.image); }
    }
    double const last = target_db(P->to_image(s->x()), target.image);
    CHECK(last < first - 20.0);
    CHECK(last < -40.0);
  }
}

TEST_CASE("scalar-step baseline validation and relaxation") {
  auto const P = tgv2(8, 8);
  double const L2 = P->K.global_norm_bound() * P->K.global_norm_bound();
  CHECK_THROWS_AS(PdhgmSolver(P, 1.0 / std::sqrt(L2), 1.0 / std::sqrt(L2)), ConfigError);
  auto const st = default_scalar_steps(L2, 0.01);
  CHECK(st.tau * st.sigma * L2 == doctest::Approx(0.99));
  CHECK_THROWS_AS(PdhgmSolver(P, st.tau, st.sigma, 2.0), ConfigError);
  PdhgmSolver r(P, st.tau, st.sigma, 1.5);
  CHECK(r.name() == "relax");
  r.step();
  // after one step from zero the relaxed point is 1.5 times the prox output
  for (std::size_t k = 0; k < 10; ++k) { CHECK(r.x_state()[k] == doctest::Approx(1.5 * r.x()[k])); }
  CHECK(r.ergodic().zeta() == 1.0);
}

TEST_CASE("run calls the hook every stride and at the end") {
  auto const P = tgv2(8, 8);
  auto const st = default_scalar_steps(kTgv2NormSq);
  PdhgmSolver s(P, st.tau, st.sigma);
  std::vector<std::size_t> seen;
  auto res = run(s, 25, 10, [&](Solver &sv) {
    seen.push_back(sv.iteration());
    return false;
  });
  CHECK(seen == std::vector<std::size_t>{10, 20, 25});
  CHECK(res.iterations == 25);
  CHECK_FALSE(res.stopped_early);
  res = run(s, 100, 5, [&](Solver &sv) { return sv.iteration() >= 40; });
  CHECK(res.stopped_early);
  CHECK(s.iteration() == 40);
  CHECK_THROWS_AS(run(s, 1, 0), ConfigError);
}

TEST_CASE("ergodic averages") {
  auto const L = std::make_shared<BlockLayout const>(std::vector<std::size_t>{1, 1});
  SUBCASE("plain") {
    ErgodicAccumulator a(ErgodicAccumulator::Mode::plain, L, L);
    std::vector<double> x1{1, 2}, x2{3, 4};
    a.add(0, 1.0, {}, x1, {}, {}, x2);
    a.add(1, 1.0, {}, x2, {}, {}, x1);
    CHECK(a.x_tilde() == std::vector<double>{2, 3});
    CHECK(a.y_tilde() == std::vector<double>{2, 3});
  }
  SUBCASE("weighted") {
    ErgodicAccumulator a(ErgodicAccumulator::Mode::cg, L, L);
    std::vector<double> w{1.0, 0.0}, x{4, 4}, y{2, 2};
    a.add(0, 2.0, w, x, w, y, y);
    CHECK(a.zeta() == 2.0);
    CHECK(a.x_tilde() == std::vector<double>{2, 0});
  }
  SUBCASE("starred sums start at the second iteration with the previous dual weights") {
    ErgodicAccumulator a(ErgodicAccumulator::Mode::cg_star, L, L);
    std::vector<double> w0{1.0, 1.0}, w1{3.0, 3.0}, x{1, 1}, y0{5, 5}, y1{7, 7};
    a.add(0, 1.0, w0, x, w0, y0, y1);
    CHECK(a.empty());
    CHECK_THROWS_AS(a.x_tilde(), std::logic_error);
    a.add(1, 2.0, w1, x, w1, y1, y0);
    CHECK(a.zeta() == 2.0);
    // dual term uses the weights of iteration 0 on y^1
    CHECK(a.y_tilde()[0] == doctest::Approx(7.0 / 2.0));
    CHECK(a.x_tilde()[0] == doctest::Approx(3.0 / 2.0));
  }
}

TEST_CASE("seeded block solvers are reproducible") {
  auto const P = tgv2(8, 8);
  auto a = block_solver("A-BRBO", P, 9), b = block_solver("A-BRBO", P, 9), c = block_solver("A-BRBO", P, 10);
  for (int i = 0; i < 200; ++i) {
    a->step();
    b->step();
    c->step();
  }
  CHECK(std::equal(a->x().begin(), a->x().end(), b->x().begin()));
  CHECK_FALSE(std::equal(a->x().begin(), a->x().end(), c->x().begin()));
}
