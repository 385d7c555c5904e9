#pragma once

#include <span>
#include <vector>

namespace blockpd {

struct Band {
  double mean = 0.0;
  double half_width = 0.0;  // two-sided Student t interval
};

// Needs at least two samples.
Band t_interval(std::span<double const> samples, double level = 0.90);

// traces[s][k]: value of seed s at point k. All traces must have the same length.
std::vector<Band> bands_over_seeds(std::vector<std::vector<double>> const &traces, double level = 0.90);

}  // namespace blockpd
