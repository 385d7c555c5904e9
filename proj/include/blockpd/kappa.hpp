#pragma once

#include "blockpd/block_core.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace blockpd {

// Dense z_{l,j} (dual rows, primal columns), row-major.
struct ZMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  ZMatrix() = default;
  ZMatrix(std::size_t n, std::size_t m, double fill = 0.0) : rows(n), cols(m), values(n * m, fill) {}
  double &operator()(std::size_t l, std::size_t j) { return values[l * cols + j]; }
  double operator()(std::size_t l, std::size_t j) const { return values[l * cols + j]; }
  std::span<double const> row(std::size_t l) const { return {values.data() + l * cols, cols}; }
};

// Worst-case multipliers w_{l,j} bounding lambda_{l,j,i} / eta_i over all sampling
// realizations: combine(1/pi_hat_j, 1/nu_hat_l), where combine is max when primal-first and
// dual-first updates never happen together, and a sum otherwise. A zero probability drops its term.
class CouplingWeights {
 public:
  CouplingWeights() = default;
  static CouplingWeights unit(std::size_t primal_blocks, std::size_t dual_blocks);
  static CouplingWeights from_probabilities(std::span<double const> pi_hat, std::span<double const> nu_hat,
                                            bool exclusive);

  std::size_t primal_blocks() const { return inv_pi_.size(); }
  std::size_t dual_blocks() const { return inv_nu_.size(); }
  double weight(std::size_t l, std::size_t j) const;
  double block_max(std::size_t j) const;  // w_j = max_l w_{l,j}
  bool exclusive() const { return exclusive_; }
  bool row_independent() const { return max_inv_nu_ == 0.0; }

  ZMatrix z_matrix(std::span<double const> phi) const;  // w_{l,j}^2 / phi_j

 private:
  std::vector<double> inv_pi_, inv_nu_;
  double max_inv_nu_ = 0.0;
  bool exclusive_ = true;
};

enum class KappaKind { worst_case, balanced, custom };

class KappaFamily {
 public:
  virtual ~KappaFamily() = default;
  virtual KappaKind kind() const = 0;
  virtual std::size_t primal_blocks() const = 0;
  virtual std::size_t dual_blocks() const = 0;
  virtual void eval_all(ZMatrix const &z, std::span<double> kappa) const = 0;
  double eval(std::size_t l, ZMatrix const &z) const;
  // kappa_l(w_{l,1}^2/phi_1, ..., w_{l,m}^2/phi_m) for every l
  virtual std::vector<double> eval_weighted(CouplingWeights const &w, std::span<double const> phi) const;

  virtual double upper() const = 0;  // kappa-bar
  virtual double lower() const = 0;  // kappa-underbar
  virtual std::size_t lstar(std::size_t j) const = 0;
};

// kappa_l(z) = |K|^2 max_j z_{l,j}
class WorstCaseKappa final : public KappaFamily {
 public:
  WorstCaseKappa(double norm_sq, std::size_t primal_blocks, std::size_t dual_blocks);
  KappaKind kind() const override { return KappaKind::worst_case; }
  std::size_t primal_blocks() const override { return m_; }
  std::size_t dual_blocks() const override { return n_; }
  void eval_all(ZMatrix const &z, std::span<double> kappa) const override;
  std::vector<double> eval_weighted(CouplingWeights const &w, std::span<double const> phi) const override;
  double upper() const override { return norm_sq_; }
  double lower() const override { return norm_sq_; }
  std::size_t lstar(std::size_t) const override { return 0; }
  double norm_sq() const { return norm_sq_; }

 private:
  double norm_sq_;
  std::size_t m_, n_;
};

// Two-by-two operator [[A, -B], [0, C]] with |A|^2 <= a, |B|^2 <= b, |C|^2 <= c (the TGV2 layout,
// A the gradient, B the identity, C the symmetrised gradient). The cross term is split by Young's
// inequality with the weight that makes both dual rows equal.
class BalancedTgv2Kappa final : public KappaFamily {
 public:
  explicit BalancedTgv2Kappa(double grad_sq = 8.0, double id_sq = 1.0, double sym_sq = 8.0);
  KappaKind kind() const override { return KappaKind::balanced; }
  std::size_t primal_blocks() const override { return 2; }
  std::size_t dual_blocks() const override { return 2; }
  void eval_all(ZMatrix const &z, std::span<double> kappa) const override;
  double upper() const override;
  double lower() const override;
  std::size_t lstar(std::size_t j) const override { return j == 0 ? 0 : 1; }
  // Young weight used for z; infinity when the cross term vanishes
  double split(ZMatrix const &z) const;

 private:
  double grad_sq_, id_sq_, sym_sq_;
};

struct KappaCheck {
  bool pass = true;
  double worst_ratio = 0.0;  // max over trials of lhs / rhs
  std::size_t failures = 0;
  std::size_t trials = 0;
};

// Randomized check of sum_j |sum_l z_{l,j}^{1/2} K*_{l,j} y_l|^2 <= sum_l kappa_l(z) |y_l|^2.
// Each trial draws z and y, then sharpens y by power iteration on the ratio.
KappaCheck check_kappa_estimate(BlockOperator const &K, KappaFamily const &kappa, std::size_t trials,
                                std::uint64_t seed, std::size_t power_iters = 8);

// Wraps a family with every value multiplied by `scale` (fault injection for the checker).
std::shared_ptr<KappaFamily> scaled_kappa(std::shared_ptr<KappaFamily const> base, double scale);

}  // namespace blockpd
