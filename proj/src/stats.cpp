#include "blockpd/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <stdexcept>

namespace blockpd {

Band t_interval(std::span<double const> samples, double level) {
  auto const n = samples.size();
  if (n < 2) { throw std::invalid_argument("t interval needs at least two samples"); }
  if (!(level > 0.0 && level < 1.0)) { throw std::invalid_argument("confidence level must lie in (0, 1)"); }
  double mean = 0.0;
  for (double v : samples) { mean += v; }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : samples) { ss += (v - mean) * (v - mean); }
  double const sd = std::sqrt(ss / static_cast<double>(n - 1));
  boost::math::students_t dist(static_cast<double>(n - 1));
  double const t = boost::math::quantile(dist, 0.5 + 0.5 * level);
  return {mean, t * sd / std::sqrt(static_cast<double>(n))};
}

std::vector<Band> bands_over_seeds(std::vector<std::vector<double>> const &traces, double level) {
  if (traces.size() < 2) { throw std::invalid_argument("bands need at least two traces"); }
  auto const len = traces.front().size();
  for (auto const &t : traces) {
    if (t.size() != len) { throw std::invalid_argument("traces are not aligned"); }
  }
  std::vector<Band> out(len);
  std::vector<double> col(traces.size());
  for (std::size_t k = 0; k < len; ++k) {
    for (std::size_t s = 0; s < traces.size(); ++s) { col[s] = traces[s][k]; }
    out[k] = t_interval(col, level);
  }
  return out;
}

}  // namespace blockpd
