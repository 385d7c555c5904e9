#pragma once

#include "blockpd/block_core.hpp"
#include "blockpd/image_io.hpp"
#include "blockpd/imaging.hpp"
#include "blockpd/kappa.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace blockpd {

// G(x) = 1/2 sum_k (c_k x_k - d_k)^2, coordinatewise
struct DiagonalQuadratic {
  std::vector<double> c;
  std::vector<double> d;

  double value(std::span<double const> x) const;
  // prox_{tau G} of one coordinate
  double prox(std::size_t k, double tau, double z) const { return (z + tau * c[k] * d[k]) / (1.0 + tau * c[k] * c[k]); }
};

enum class ProblemKind { tgv2_denoise, tv_denoise, tv_deblur, tv_undim };

std::string to_string(ProblemKind k);
ProblemKind parse_problem_kind(std::string const &name);

// min_x G(x) + F(Kx) with G a diagonal quadratic in the primal coordinates and F the sum over
// dual blocks of radius * (pixelwise Euclidean norms), so F* is the indicator of a product of balls.
struct SaddleProblem {
  ProblemKind kind = ProblemKind::tgv2_denoise;
  Grid2D grid;
  BlockOperator K;
  DiagonalQuadratic G;
  std::vector<double> gamma;            // per primal block
  std::vector<std::size_t> dual_comps;  // per dual block: components per pixel vector
  std::vector<double> dual_radius;      // per dual block
  std::size_t image_begin = 0;          // primal coordinates compared against a target
  std::size_t image_end = 0;
  std::shared_ptr<KappaFamily const> kappa_worst;
  std::shared_ptr<KappaFamily const> kappa_balanced;  // TGV2 only
  std::shared_ptr<FourierBasis const> basis;          // deblurring only

  std::size_t primal_blocks() const { return K.primal_layout().block_count(); }
  std::size_t dual_blocks() const { return K.dual_layout().block_count(); }
  std::size_t primal_size() const { return K.cols(); }
  std::size_t dual_size() const { return K.rows(); }

  // in place on the block's coordinates
  void prox_primal_block(std::size_t j, double tau, std::span<double> xj) const;
  void prox_dual_block(std::size_t l, std::span<double> yl) const;
  // whole-vector dual projection
  void project_dual(std::span<double> y) const;

  double primal_value(std::span<double const> x) const;  // G(x)
  double fenchel_F(std::span<double const> z) const;     // F(z)
  // F*(y): 0 inside the balls (relative tolerance tol), infinity outside
  double dual_value(std::span<double const> y, double tol = 1e-9) const;
  double objective(std::span<double const> x) const;  // G(x) + F(Kx)

  std::span<double const> image_part(std::span<double const> x) const {
    return x.subspan(image_begin, image_end - image_begin);
  }
  // the image represented by x (v for TGV2, the inverse transform for deblurring)
  std::vector<double> to_image(std::span<double const> x) const;
};

SaddleProblem build_tgv2_denoise(Image const &f, double alpha, double beta);
SaddleProblem build_tv_deblur(Image const &f, double alpha, FourierDiagonal const &factors);
SaddleProblem build_tv_undim(Image const &f, double alpha, std::vector<double> const &mask);
// TV denoising: the undimming problem with a unit mask
SaddleProblem build_tv_denoise(Image const &f, double alpha);

struct CorruptionSpec {
  enum class Kind { gaussian_noise, blur, dim };
  Kind kind = Kind::gaussian_noise;
  double noise_std = 0.0;
  double blur_std = 0.0;   // blur only
  MaskParams mask;         // dim only
  std::uint64_t seed = 1;
};

struct Corrupted {
  Image image;
  double snr_db = 0.0;  // 10 log10(mean f^2 / noise_std^2); +inf without noise
  std::vector<double> mask;              // dim only
  std::shared_ptr<FourierDiagonal> blur;  // blur only
};

Corrupted corrupt(Image const &clean, CorruptionSpec const &spec);
void write_corruption_sidecar(std::string const &path, CorruptionSpec const &spec, Corrupted const &c);

double snr_db(std::span<double const> clean, double noise_std);

}  // namespace blockpd
