#pragma once

#include "blockpd/block_core.hpp"

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace blockpd {

// Images are row-major, pixel p = row * width + col. Vector fields are stored pixel-interleaved:
// gradients as (d/dcol, d/drow) per pixel, symmetric fields as (e11, e22, sqrt(2) e12) per pixel.
struct Grid2D {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t pixels() const { return width * height; }
  bool operator==(Grid2D const &) const = default;
};

void check_grid(Grid2D g);

void gradient(Grid2D g, std::span<double const> u, std::span<double> field);
void gradient_adjoint(Grid2D g, std::span<double const> field, std::span<double> u);
void sym_gradient(Grid2D g, std::span<double const> w, std::span<double> e);
void sym_gradient_adjoint(Grid2D g, std::span<double const> e, std::span<double> w);

LinearMap gradient_map(Grid2D g);
LinearMap sym_gradient_map(Grid2D g);

inline constexpr double kGradientNormSq = 8.0;
inline constexpr double kSymGradientNormSq = 8.0;
inline constexpr double kTgv2NormSq = 11.4;

// Real orthonormal Fourier basis. One block per conjugate frequency pair holding
// sqrt(2) Re and sqrt(2) Im of the unitary coefficient; self-conjugate frequencies get a
// single real coordinate.
class FourierBasis {
 public:
  explicit FourierBasis(Grid2D g);

  Grid2D grid() const { return grid_; }
  BlockLayout const &layout() const { return *layout_; }
  std::shared_ptr<BlockLayout const> const &layout_ptr() const { return layout_; }
  std::size_t half_width() const { return grid_.width / 2 + 1; }
  // half-spectrum index (row * half_width + col) of block j's representative frequency
  std::size_t representative(std::size_t j) const { return rep_[j]; }

  void to_coords(std::span<double const> image, std::span<double> coords) const;
  void to_image(std::span<double const> coords, std::span<double> image) const;

  // unnormalized forward transform into the half spectrum and its inverse (divides by N)
  void forward_half(std::span<double const> image, std::span<std::complex<double>> half) const;
  void inverse_half(std::span<std::complex<double> const> half, std::span<double> image) const;

 private:
  struct Plans;
  Grid2D grid_;
  std::shared_ptr<Plans> plans_;
  std::shared_ptr<BlockLayout const> layout_;
  std::vector<std::size_t> rep_;
  std::vector<std::size_t> partner_;  // npos when the conjugate lies outside the half spectrum
};

class FourierDiagonal {
 public:
  // full height x width array of multipliers; rejected unless conjugate-symmetric
  FourierDiagonal(Grid2D g, std::vector<std::complex<double>> factors);

  Grid2D grid() const { return grid_; }
  std::complex<double> factor(std::size_t row, std::size_t col) const { return a_[row * grid_.width + col]; }
  bool is_real(double tol = 1e-12) const;
  // real multiplier per basis block; throws unless real
  std::vector<double> block_factors(FourierBasis const &basis) const;

 private:
  Grid2D grid_;
  std::vector<std::complex<double>> a_;
};

std::vector<double> make_gaussian_kernel(Grid2D g, double std_dev);
FourierDiagonal make_gaussian_factors(Grid2D g, double std_dev);
std::vector<double> fourier_blur(std::span<double const> image, FourierDiagonal const &a);

struct MaskParams {
  double floor = 0.3;
  double cycles = 1.0;
};
std::vector<double> make_dimming_mask(Grid2D g, MaskParams params = {});

}  // namespace blockpd
