#include "blockpd/sampling.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace blockpd {

void SamplePlan::resize(std::size_t m, std::size_t n) {
  S_hat.assign(m, 0);
  S.assign(m, 0);
  V_hat.assign(n, 0);
  V.assign(n, 0);
}

NestingCheck validate_nesting(SamplePlan const &plan, Connectivity const &conn) {
  auto const m = conn.primal_blocks(), n = conn.dual_blocks();
  if (plan.S_hat.size() != m || plan.S.size() != m || plan.V_hat.size() != n || plan.V.size() != n) {
    return {false, "plan size does not match the connectivity"};
  }
  std::vector<std::uint8_t> cs(n), pre_v(m), pre_cs(m);
  conn.dual_image(plan.S_hat, cs);
  conn.primal_preimage(plan.V_hat, pre_v);
  conn.primal_preimage(cs, pre_cs);
  for (std::size_t j = 0; j < m; ++j) {
    if (pre_v[j] && pre_cs[j]) { return {false, fmt::format("primal block {} lies in C^-1(V_hat) and C^-1(C(S_hat))", j)}; }
    if ((plan.S_hat[j] || pre_v[j]) && !plan.S[j]) { return {false, fmt::format("S misses primal block {}", j)}; }
  }
  for (std::size_t l = 0; l < n; ++l) {
    if ((plan.V_hat[l] || cs[l]) && !plan.V[l]) { return {false, fmt::format("V misses dual block {}", l)}; }
  }
  return {};
}

double Sampler::expected_update_fraction() const {
  auto const &p = probabilities();
  double const s = std::accumulate(p.pi.begin(), p.pi.end(), 0.0) + std::accumulate(p.nu.begin(), p.nu.end(), 0.0);
  return s / static_cast<double>(p.pi.size() + p.nu.size());
}

double SubsetRule::inclusion(std::size_t k, std::size_t count) const {
  if (kind == Kind::independent) { return probs.at(k); }
  return static_cast<double>(m) / static_cast<double>(count);
}

double SubsetRule::hit(std::vector<std::size_t> const &members, std::size_t count) const {
  if (members.empty()) { return 0.0; }
  if (kind == Kind::independent) {
    double miss = 1.0;
    for (auto k : members) { miss *= 1.0 - probs.at(k); }
    return 1.0 - miss;
  }
  // 1 - C(count - |A|, m) / C(count, m)
  auto const a = members.size();
  if (count - a < m) { return 1.0; }
  double miss = 1.0;
  for (std::size_t k = 0; k < m; ++k) {
    miss *= static_cast<double>(count - a - k) / static_cast<double>(count - k);
  }
  return 1.0 - miss;
}

void SubsetRule::draw(SplitMix64 &rng, std::vector<std::uint8_t> &flags) const {
  std::fill(flags.begin(), flags.end(), std::uint8_t{0});
  auto const count = flags.size();
  if (kind == Kind::independent) {
    for (std::size_t k = 0; k < count; ++k) { flags[k] = rng.uniform() < probs[k] ? 1 : 0; }
    return;
  }
  if (m == count) {
    std::fill(flags.begin(), flags.end(), std::uint8_t{1});
    return;
  }
  // Floyd's algorithm for a uniform m-subset
  for (std::size_t t = count - m; t < count; ++t) {
    auto const r = static_cast<std::size_t>(rng.below(t + 1));
    flags[flags[r] ? t : r] = 1;
  }
}

void SubsetRule::validate(std::size_t count) const {
  if (kind == Kind::fixed_m) {
    if (m < 1 || m > count) { throw ConfigError(fmt::format("fixed-size sampling needs 1 <= M <= {}, got {}", count, m)); }
    return;
  }
  if (probs.size() != count) { throw DimensionError("independent sampling: one probability per block"); }
  for (std::size_t k = 0; k < count; ++k) {
    if (!(probs[k] > 0.0 && probs[k] <= 1.0)) {
      throw ConfigError(fmt::format("inclusion probability of block {} must lie in (0, 1]", k));
    }
  }
}

namespace {

class PrimalSampler final : public Sampler {
 public:
  PrimalSampler(std::string name, Connectivity const &conn, SubsetRule rule, std::uint64_t seed)
    : name_(std::move(name)), rule_(std::move(rule)), rng_(seed), m_(conn.primal_blocks()), n_(conn.dual_blocks()) {
    rule_.validate(m_);
    probs_.pi.resize(m_);
    for (std::size_t j = 0; j < m_; ++j) { probs_.pi[j] = rule_.inclusion(j, m_); }
    probs_.pi_hat = probs_.pi;
    probs_.nu.assign(n_, 1.0);
    probs_.nu_hat.assign(n_, 0.0);
  }
  std::string name() const override { return name_; }
  Probabilities const &probabilities() const override { return probs_; }
  bool primal_only() const override { return true; }
  void draw(SamplePlan &plan) override {
    plan.resize(m_, n_);
    rule_.draw(rng_, plan.S_hat);
    plan.S = plan.S_hat;
    std::fill(plan.V.begin(), plan.V.end(), std::uint8_t{1});
  }

 private:
  std::string name_;
  SubsetRule rule_;
  SplitMix64 rng_;
  std::size_t m_, n_;
  Probabilities probs_;
};

class AlternatingSampler final : public Sampler {
 public:
  AlternatingSampler(Connectivity const &conn, double p_x, SubsetRule primal_rule, SubsetRule dual_rule,
                     std::uint64_t seed)
    : conn_(conn), p_x_(p_x), primal_(std::move(primal_rule)), dual_(std::move(dual_rule)), rng_(seed) {
    auto const m = conn.primal_blocks(), n = conn.dual_blocks();
    if (!(p_x > 0.0 && p_x <= 1.0)) { throw ConfigError("alternating sampling needs p_x in (0, 1]"); }
    primal_.validate(m);
    if (p_x < 1.0) { dual_.validate(n); }
    probs_.pi_hat.resize(m);
    probs_.pi.resize(m);
    probs_.nu_hat.resize(n);
    probs_.nu.resize(n);
    double const q = 1.0 - p_x;
    for (std::size_t j = 0; j < m; ++j) {
      probs_.pi_hat[j] = p_x * primal_.inclusion(j, m);
      probs_.pi[j] = probs_.pi_hat[j] + (q > 0.0 ? q * dual_.hit(conn.duals_of(j), n) : 0.0);
    }
    for (std::size_t l = 0; l < n; ++l) {
      probs_.nu_hat[l] = q > 0.0 ? q * dual_.inclusion(l, n) : 0.0;
      probs_.nu[l] = probs_.nu_hat[l] + p_x * primal_.hit(conn.primals_of(l), m);
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (!(probs_.pi[j] > 0.0)) { throw ConfigError(fmt::format("primal block {} is never updated", j)); }
    }
    for (std::size_t l = 0; l < n; ++l) {
      if (!(probs_.nu[l] > 0.0)) { throw ConfigError(fmt::format("dual block {} is never updated", l)); }
    }
  }
  std::string name() const override { return "alternating"; }
  Probabilities const &probabilities() const override { return probs_; }
  bool primal_only() const override { return false; }
  void draw(SamplePlan &plan) override {
    auto const m = conn_.primal_blocks(), n = conn_.dual_blocks();
    plan.resize(m, n);
    if (rng_.uniform() < p_x_) {
      primal_.draw(rng_, plan.S_hat);
      plan.S = plan.S_hat;
      conn_.dual_image(plan.S_hat, plan.V);
    } else {
      dual_.draw(rng_, plan.V_hat);
      plan.V = plan.V_hat;
      conn_.primal_preimage(plan.V_hat, plan.S);
    }
  }

 private:
  Connectivity conn_;
  double p_x_;
  SubsetRule primal_, dual_;
  SplitMix64 rng_;
  Probabilities probs_;
};

}  // namespace

std::unique_ptr<Sampler> make_deterministic_sampler(Connectivity const &conn) {
  return std::make_unique<PrimalSampler>("deterministic", conn, SubsetRule::fixed(conn.primal_blocks()), 0);
}

std::unique_ptr<Sampler> make_independent_sampler(Connectivity const &conn, std::vector<double> probs,
                                                  std::uint64_t seed) {
  return std::make_unique<PrimalSampler>("independent", conn, SubsetRule::independent_probs(std::move(probs)), seed);
}

std::unique_ptr<Sampler> make_fixed_m_sampler(Connectivity const &conn, std::size_t M, std::uint64_t seed) {
  return std::make_unique<PrimalSampler>("fixed-" + std::to_string(M), conn, SubsetRule::fixed(M), seed);
}

std::unique_ptr<Sampler> make_alternating_sampler(Connectivity const &conn, double p_x, SubsetRule primal_rule,
                                                  SubsetRule dual_rule, std::uint64_t seed) {
  return std::make_unique<AlternatingSampler>(conn, p_x, std::move(primal_rule), std::move(dual_rule), seed);
}

}  // namespace blockpd
