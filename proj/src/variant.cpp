#include "blockpd/variant.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <string_view>

namespace blockpd {

std::string Variant::name() const {
  switch (family) {
    case Family::pdhgm: return "PDHGM";
    case Family::relax: return "Relax";
    case Family::block: break;
  }
  return fmt::format("A-{}{}{}{}", randomisation, phi_rule, psi_rule, kappa);
}

Variant parse_variant(std::string const &text) {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  Variant v;
  if (up == "PDHGM") { return v; }
  if (up == "RELAX") {
    v.family = Variant::Family::relax;
    return v;
  }
  if (up.size() != 6 || up.compare(0, 2, "A-") != 0) {
    throw VariantError(fmt::format("unknown variant '{}': expected PDHGM, Relax or A-XYZW", text));
  }
  auto pick = [&](std::size_t pos, std::string_view allowed, char const *what) {
    char const ch = up[pos];
    if (allowed.find(ch) == std::string_view::npos) {
      throw VariantError(fmt::format("variant '{}': letter '{}' is not a valid {} ({})", text, ch, what, allowed));
    }
    return ch;
  };
  v.family = Variant::Family::block;
  v.randomisation = pick(2, "DPB", "randomisation");
  v.phi_rule = pick(3, "RDC", "phi rule");
  v.psi_rule = pick(4, "BI", "eta/psi rule");
  v.kappa = pick(5, "OM", "kappa choice");
  return v;
}

}  // namespace blockpd
