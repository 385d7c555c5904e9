#pragma once

#include <stdexcept>
#include <string>

namespace blockpd {

struct VariantError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// "PDHGM", "Relax", or A-XYZW with
//   X randomisation: D deterministic, P primal only, B primal and dual
//   Y phi rule:      R random, D deterministic, C constant
//   Z eta/psi rule:  B bounded (p = 1/2), I increasing (p = 1)
//   W kappa:         O balanced, M maximal
struct Variant {
  enum class Family { pdhgm, relax, block };
  Family family = Family::pdhgm;
  char randomisation = 'D';
  char phi_rule = 'D';
  char psi_rule = 'B';
  char kappa = 'O';

  std::string name() const;
  bool accelerated() const { return family == Family::block && phi_rule != 'C'; }
  bool stochastic() const { return family == Family::block && randomisation != 'D'; }
  bool doubly_stochastic() const { return family == Family::block && randomisation == 'B'; }
  double p() const { return psi_rule == 'I' ? 1.0 : 0.5; }
};

Variant parse_variant(std::string const &text);

}  // namespace blockpd
