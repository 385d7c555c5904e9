#pragma once

#include "blockpd/problems.hpp"
#include "blockpd/sampling.hpp"
#include "blockpd/step_state.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace blockpd {

// Weighted running sums of the iterates. cg: primal weights phi tau_hat on x^{i+1}, dual weights
// psi sigma_hat on y^{i+1}, normaliser sum eta_i from i = 0. cg_star: sums start at i = 1 and
// the dual term uses the previous iteration's weights on y^i. plain: unweighted mean.
class ErgodicAccumulator {
 public:
  enum class Mode { cg, cg_star, plain };

  ErgodicAccumulator() = default;
  ErgodicAccumulator(Mode mode, std::shared_ptr<BlockLayout const> primal, std::shared_ptr<BlockLayout const> dual);

  Mode mode() const { return mode_; }
  // iteration i finished: x_next = x^{i+1}, y_prev = y^i, y_next = y^{i+1}; weights per block
  void add(std::size_t i, double eta, std::span<double const> primal_weight, std::span<double const> x_next,
           std::span<double const> dual_weight, std::span<double const> y_prev, std::span<double const> y_next);
  double zeta() const { return zeta_; }
  bool empty() const { return zeta_ == 0.0; }
  std::vector<double> x_tilde() const;
  std::vector<double> y_tilde() const;

 private:
  Mode mode_ = Mode::plain;
  std::shared_ptr<BlockLayout const> primal_, dual_;
  std::vector<double> x_sum_, y_sum_, prev_dual_weight_;
  double zeta_ = 0.0;
};

struct SolverOptions {
  bool check_frozen = false;    // unchanged blocks outside S(i) and V(i+1)
  bool check_nesting = false;   // validate every plan
  bool check_coupling = false;  // kappa condition on lambda every iteration
  bool ergodic = true;
};

struct SolverDiagnostics {
  std::size_t frozen_violations = 0;
  std::size_t nesting_violations = 0;
  std::size_t coupling_failures = 0;
  double worst_coupling_ratio = 0.0;
  double worst_alg2_error = 0.0;
  std::vector<std::string> messages;  // first few failures
  void note(std::string msg);
};

class Solver {
 public:
  virtual ~Solver() = default;
  virtual std::string name() const = 0;
  virtual void step() = 0;
  virtual std::span<double const> x() const = 0;  // the reported primal iterate
  virtual std::span<double const> y() const = 0;
  // expected fraction of blocks updated per iteration
  virtual double update_fraction() const { return 1.0; }

  std::size_t iteration() const { return iter_; }
  SaddleProblem const &problem() const { return *problem_; }
  ErgodicAccumulator const &ergodic() const { return ergodic_; }
  SolverDiagnostics const &diagnostics() const { return diag_; }

 protected:
  explicit Solver(std::shared_ptr<SaddleProblem const> problem) : problem_(std::move(problem)) {}
  std::shared_ptr<SaddleProblem const> problem_;
  std::size_t iter_ = 0;
  ErgodicAccumulator ergodic_;
  SolverDiagnostics diag_;
};

// Doubly-stochastic block method: random primal-first blocks, dual blocks after them, then
// dual-first blocks and the primal blocks behind them.
class Alg1Solver final : public Solver {
 public:
  Alg1Solver(std::shared_ptr<SaddleProblem const> problem, std::unique_ptr<Sampler> sampler, StepController ctl,
             SolverOptions opts = {});
  std::string name() const override { return "alg1"; }
  void step() override;
  std::span<double const> x() const override { return x_; }
  std::span<double const> y() const override { return y_; }
  double update_fraction() const override { return sampler_->expected_update_fraction(); }

  StepController const &controller() const { return ctl_; }
  SamplePlan const &last_plan() const { return plan_; }
  std::span<double const> last_tau() const { return tau_; }
  std::span<double const> last_omega() const { return omega_; }
  std::span<double const> last_sigma() const { return sigma_; }
  std::span<double const> last_varsigma() const { return varsigma_; }

 private:
  std::unique_ptr<Sampler> sampler_;
  StepController ctl_;
  SolverOptions opts_;
  SamplePlan plan_;
  std::vector<double> x_, y_, x_new_, y_new_, dx_, dy_, g_, kx_, kw_, tmp_p_, tmp_d_;
  std::vector<double> tau_, omega_, sigma_, varsigma_;
};

// Primal-randomized block method with a full dual update against the over-relaxed primal point.
class Alg2Solver final : public Solver {
 public:
  Alg2Solver(std::shared_ptr<SaddleProblem const> problem, std::unique_ptr<Sampler> sampler, StepController ctl,
             SolverOptions opts = {});
  std::string name() const override { return "alg2"; }
  void step() override;
  std::span<double const> x() const override { return x_; }
  std::span<double const> y() const override { return y_; }
  double update_fraction() const override { return sampler_->expected_update_fraction(); }

  StepController const &controller() const { return ctl_; }
  SamplePlan const &last_plan() const { return plan_; }
  std::span<double const> last_tau() const { return tau_; }
  std::span<double const> last_omega() const { return omega_; }
  std::span<double const> last_sigma() const { return sigma_; }
  std::span<double const> last_theta() const { return theta_; }

 private:
  std::unique_ptr<Sampler> sampler_;
  StepController ctl_;
  SolverOptions opts_;
  SamplePlan plan_;
  std::vector<double> x_, y_, x_new_, y_prev_, x_bar_, g_, kx_;
  std::vector<double> tau_, omega_, sigma_, varsigma_, theta_;
};

// Baseline with scalar steps; relaxation rho = 1 is the plain method.
class PdhgmSolver final : public Solver {
 public:
  PdhgmSolver(std::shared_ptr<SaddleProblem const> problem, double tau, double sigma, double rho = 1.0,
              bool ergodic = true);
  std::string name() const override { return rho_ == 1.0 ? "pdhgm" : "relax"; }
  void step() override;
  // the relaxed method reports the prox outputs (x_hat, y_hat)
  std::span<double const> x() const override { return rho_ == 1.0 ? std::span<double const>(x_) : x_hat_; }
  std::span<double const> y() const override { return rho_ == 1.0 ? std::span<double const>(y_) : y_hat_; }
  double tau() const { return tau_; }
  double sigma() const { return sigma_; }
  // the internal (relaxed) point
  std::span<double const> x_state() const { return x_; }
  std::span<double const> y_state() const { return y_; }
  void set_state(std::span<double const> x, std::span<double const> y);

 private:
  double tau_, sigma_, rho_;
  bool ergodic_on_;
  std::vector<double> x_, y_, x_hat_, y_hat_, g_, kx_, x_ext_;
};

// Default scalar steps: sigma0 = 1.9 / |K|, tau0 = (1 - delta) / (sigma0 |K|^2).
struct ScalarSteps {
  double tau = 0.0;
  double sigma = 0.0;
};
ScalarSteps default_scalar_steps(double norm_sq, double delta = 0.01, double sigma_scale = 1.9);

// Runs `iterations` steps; `hook` is called after every `stride`-th step and after the last one,
// and may return true to stop. Only step() time is accumulated.
struct RunResult {
  std::size_t iterations = 0;
  double step_seconds = 0.0;
  bool stopped_early = false;
};
RunResult run(Solver &solver, std::size_t iterations, std::size_t stride,
              std::function<bool(Solver &)> const &hook = {});

}  // namespace blockpd
