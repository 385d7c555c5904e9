#pragma once

#include "blockpd/imaging.hpp"

#include <string>
#include <vector>

namespace blockpd {

struct Image {
  Grid2D grid;
  std::vector<double> data;  // grayscale, nominally [0, 255]
};

// PNG (gray, gray+alpha, RGB, RGBA, palette; 8 or 16 bit) or binary/ASCII PGM. Color is
// converted with Rec. 601 luma weights.
Image load_image(std::string const &path);
// 8-bit grayscale PNG, values rounded and clamped to [0, 255]
void save_png(Image const &img, std::string const &path);

// box average over factor x factor cells; dimensions must be divisible by factor
Image downscale(Image const &img, std::size_t factor);

// Deterministic grayscale test scene (smooth shading, piecewise-constant shapes, edges of
// several orientations, a fine texture patch) used when no photograph is supplied.
Image synthetic_test_image(std::size_t width = 768, std::size_t height = 512);

}  // namespace blockpd
