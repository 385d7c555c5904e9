#pragma once

#include "blockpd/block_core.hpp"
#include "blockpd/rng.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace blockpd {

struct Probabilities {
  std::vector<double> pi_hat, pi;  // per primal block
  std::vector<double> nu_hat, nu;  // per dual block
};

// Realized index sets as 0/1 flags: S_hat within S (primal), V_hat within V (dual).
struct SamplePlan {
  std::vector<std::uint8_t> S_hat, S, V_hat, V;
  void resize(std::size_t m, std::size_t n);
};

struct NestingCheck {
  bool pass = true;
  std::string reason;
};

// C^-1(V_hat) and C^-1(C(S_hat)) disjoint, S contains S_hat and C^-1(V_hat), V contains V_hat and C(S_hat)
NestingCheck validate_nesting(SamplePlan const &plan, Connectivity const &conn);

class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual std::string name() const = 0;
  virtual Probabilities const &probabilities() const = 0;
  virtual void draw(SamplePlan &plan) = 0;
  // S_hat = S and V = all dual blocks on every draw
  virtual bool primal_only() const = 0;
  // (sum pi + sum nu) / (m + n)
  double expected_update_fraction() const;
};

// A random subset of {0..count-1}: either exactly M uniformly, or independent inclusions.
struct SubsetRule {
  enum class Kind { fixed_m, independent };
  Kind kind = Kind::fixed_m;
  std::size_t m = 1;
  std::vector<double> probs;

  static SubsetRule fixed(std::size_t m) { return {Kind::fixed_m, m, {}}; }
  static SubsetRule independent_probs(std::vector<double> p) { return {Kind::independent, 0, std::move(p)}; }

  double inclusion(std::size_t k, std::size_t count) const;
  // probability that at least one element of `members` is drawn
  double hit(std::vector<std::size_t> const &members, std::size_t count) const;
  void draw(SplitMix64 &rng, std::vector<std::uint8_t> &flags) const;
  void validate(std::size_t count) const;
};

std::unique_ptr<Sampler> make_deterministic_sampler(Connectivity const &conn);
std::unique_ptr<Sampler> make_independent_sampler(Connectivity const &conn, std::vector<double> probs,
                                                  std::uint64_t seed);
std::unique_ptr<Sampler> make_fixed_m_sampler(Connectivity const &conn, std::size_t M, std::uint64_t seed);
// With probability p_x an x-y step (S_hat from primal_rule, V_hat empty), otherwise a y-x step
// (V_hat from dual_rule, S_hat empty); S and V are the minimal nested completions.
std::unique_ptr<Sampler> make_alternating_sampler(Connectivity const &conn, double p_x, SubsetRule primal_rule,
                                                  SubsetRule dual_rule, std::uint64_t seed);

}  // namespace blockpd
