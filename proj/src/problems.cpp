#include "blockpd/problems.hpp"

#include "blockpd/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace blockpd {

namespace {

void project_balls(std::span<double> y, std::size_t comps, double radius) {
  for (std::size_t p = 0; p + comps <= y.size(); p += comps) {
    double s = 0.0;
    for (std::size_t k = 0; k < comps; ++k) { s += y[p + k] * y[p + k]; }
    if (s > radius * radius) {
      double const f = radius / std::sqrt(s);
      for (std::size_t k = 0; k < comps; ++k) { y[p + k] *= f; }
    }
  }
}

void check_image(Image const &f) {
  check_grid(f.grid);
  if (f.data.size() != f.grid.pixels()) { throw DimensionError("image data does not match its grid"); }
}

LinearMap negative_identity(std::size_t n) { return scaled_identity(n, -1.0); }

}  // namespace

double DiagonalQuadratic::value(std::span<double const> x) const {
  if (x.size() != c.size()) { throw DimensionError("G: size mismatch"); }
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    double const r = c[k] * x[k] - d[k];
    s += r * r;
  }
  return 0.5 * s;
}

std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::tgv2_denoise: return "tgv2";
    case ProblemKind::tv_denoise: return "tv";
    case ProblemKind::tv_deblur: return "deblur";
    case ProblemKind::tv_undim: return "undim";
  }
  return "?";
}

ProblemKind parse_problem_kind(std::string const &name) {
  if (name == "tgv2") { return ProblemKind::tgv2_denoise; }
  if (name == "tv") { return ProblemKind::tv_denoise; }
  if (name == "deblur") { return ProblemKind::tv_deblur; }
  if (name == "undim") { return ProblemKind::tv_undim; }
  throw ConfigError("unknown problem '" + name + "' (expected tgv2, tv, deblur or undim)");
}

void SaddleProblem::prox_primal_block(std::size_t j, double tau, std::span<double> xj) const {
  auto const off = K.primal_layout().offset(j);
  for (std::size_t k = 0; k < xj.size(); ++k) { xj[k] = G.prox(off + k, tau, xj[k]); }
}

void SaddleProblem::prox_dual_block(std::size_t l, std::span<double> yl) const {
  project_balls(yl, dual_comps[l], dual_radius[l]);
}

void SaddleProblem::project_dual(std::span<double> y) const {
  auto const &Q = K.dual_layout();
  for (std::size_t l = 0; l < Q.block_count(); ++l) { prox_dual_block(l, y.subspan(Q.offset(l), Q.dim(l))); }
}

double SaddleProblem::primal_value(std::span<double const> x) const { return G.value(x); }

double SaddleProblem::fenchel_F(std::span<double const> z) const {
  auto const &Q = K.dual_layout();
  double total = 0.0;
  for (std::size_t l = 0; l < Q.block_count(); ++l) {
    auto const b = z.subspan(Q.offset(l), Q.dim(l));
    auto const comps = dual_comps[l];
    double s = 0.0;
    for (std::size_t p = 0; p < b.size(); p += comps) {
      double q = 0.0;
      for (std::size_t k = 0; k < comps; ++k) { q += b[p + k] * b[p + k]; }
      s += std::sqrt(q);
    }
    total += dual_radius[l] * s;
  }
  return total;
}

double SaddleProblem::dual_value(std::span<double const> y, double tol) const {
  auto const &Q = K.dual_layout();
  for (std::size_t l = 0; l < Q.block_count(); ++l) {
    auto const b = y.subspan(Q.offset(l), Q.dim(l));
    auto const comps = dual_comps[l];
    double const lim = dual_radius[l] * (1.0 + tol);
    for (std::size_t p = 0; p < b.size(); p += comps) {
      double q = 0.0;
      for (std::size_t k = 0; k < comps; ++k) { q += b[p + k] * b[p + k]; }
      if (q > lim * lim) { return std::numeric_limits<double>::infinity(); }
    }
  }
  return 0.0;
}

double SaddleProblem::objective(std::span<double const> x) const {
  std::vector<double> z(K.rows());
  K.apply(x, z);
  return primal_value(x) + fenchel_F(z);
}

std::vector<double> SaddleProblem::to_image(std::span<double const> x) const {
  std::vector<double> img(grid.pixels());
  if (basis) {
    basis->to_image(x, img);
  } else {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(image_begin), img.size(), img.begin());
  }
  return img;
}

SaddleProblem build_tgv2_denoise(Image const &f, double alpha, double beta) {
  check_image(f);
  if (!(alpha > 0.0 && beta > 0.0)) { throw ConfigError("TGV2 needs alpha > 0 and beta > 0"); }
  auto const g = f.grid;
  auto const N = g.pixels();
  BlockLayout primal({N, 2 * N}, {"v", "w"});
  BlockLayout dual({2 * N, 3 * N}, {"phi", "psi"});
  std::vector<BlockOperator::SubBlock> blocks;
  blocks.push_back({0, 0, gradient_map(g), std::sqrt(kGradientNormSq)});
  blocks.push_back({0, 1, negative_identity(2 * N), 1.0});
  blocks.push_back({1, 1, sym_gradient_map(g), std::sqrt(kSymGradientNormSq)});

  SaddleProblem P;
  P.kind = ProblemKind::tgv2_denoise;
  P.grid = g;
  P.K = BlockOperator::from_blocks(primal, dual, std::move(blocks), std::sqrt(kTgv2NormSq));
  // single pass over each output instead of the sub-block sum
  LinearMap fused{5 * N, 3 * N, {}, {}};
  fused.forward = [g, N](std::span<double const> x, std::span<double> y) {
    auto const w = x.subspan(N, 2 * N);
    auto phi = y.subspan(0, 2 * N);
    gradient(g, x.subspan(0, N), phi);
    for (std::size_t k = 0; k < 2 * N; ++k) { phi[k] -= w[k]; }
    sym_gradient(g, w, y.subspan(2 * N, 3 * N));
  };
  fused.adjoint = [g, N](std::span<double const> y, std::span<double> x) {
    auto const phi = y.subspan(0, 2 * N);
    auto w = x.subspan(N, 2 * N);
    gradient_adjoint(g, phi, x.subspan(0, N));
    sym_gradient_adjoint(g, y.subspan(2 * N, 3 * N), w);
    for (std::size_t k = 0; k < 2 * N; ++k) { w[k] -= phi[k]; }
  };
  P.K.set_fused(std::move(fused));
  P.G.c.assign(3 * N, 0.0);
  P.G.d.assign(3 * N, 0.0);
  std::fill_n(P.G.c.begin(), N, 1.0);
  std::copy(f.data.begin(), f.data.end(), P.G.d.begin());
  P.gamma = {1.0, 0.0};
  P.dual_comps = {2, 3};
  P.dual_radius = {alpha, beta};
  P.image_begin = 0;
  P.image_end = N;
  P.kappa_worst = std::make_shared<WorstCaseKappa>(kTgv2NormSq, 2, 2);
  P.kappa_balanced = std::make_shared<BalancedTgv2Kappa>(kGradientNormSq, 1.0, kSymGradientNormSq);
  return P;
}

SaddleProblem build_tv_deblur(Image const &f, double alpha, FourierDiagonal const &factors) {
  check_image(f);
  if (!(alpha > 0.0)) { throw ConfigError("TV deblurring needs alpha > 0"); }
  if (!(factors.grid() == f.grid)) { throw DimensionError("blur factors do not match the image grid"); }
  auto const g = f.grid;
  auto const N = g.pixels();
  auto basis = std::make_shared<FourierBasis const>(g);
  auto const a = factors.block_factors(*basis);
  auto const &L = basis->layout();

  LinearMap whole;
  whole.rows = 2 * N;
  whole.cols = N;
  whole.forward = [basis, g, N](std::span<double const> x, std::span<double> z) {
    std::vector<double> img(N);
    basis->to_image(x, img);
    gradient(g, img, z);
  };
  whole.adjoint = [basis, g, N](std::span<double const> z, std::span<double> x) {
    std::vector<double> img(N);
    gradient_adjoint(g, z, img);
    basis->to_coords(img, x);
  };

  SaddleProblem P;
  P.kind = ProblemKind::tv_deblur;
  P.grid = g;
  P.K = BlockOperator::from_map(L, BlockLayout::uniform(N, 2), std::move(whole),
                                Connectivity::dense(L.block_count(), N), std::sqrt(kGradientNormSq));
  P.G.c.resize(N);
  P.G.d.resize(N);
  basis->to_coords(f.data, P.G.d);
  P.gamma.resize(L.block_count());
  for (std::size_t j = 0; j < L.block_count(); ++j) {
    for (std::size_t k = L.offset(j); k < L.offset(j) + L.dim(j); ++k) { P.G.c[k] = a[j]; }
    P.gamma[j] = a[j] * a[j];
  }
  P.dual_comps.assign(N, 2);
  P.dual_radius.assign(N, alpha);
  P.image_begin = 0;
  P.image_end = N;
  P.kappa_worst = std::make_shared<WorstCaseKappa>(kGradientNormSq, L.block_count(), N);
  P.basis = std::move(basis);
  return P;
}

SaddleProblem build_tv_undim(Image const &f, double alpha, std::vector<double> const &mask) {
  check_image(f);
  if (!(alpha > 0.0)) { throw ConfigError("TV undimming needs alpha > 0"); }
  auto const g = f.grid;
  auto const N = g.pixels();
  if (mask.size() != N) { throw DimensionError("mask does not match the image grid"); }
  for (std::size_t p = 0; p < N; ++p) {
    if (!(mask[p] > 0.0)) { throw ConfigError(fmt::format("mask entry {} is not positive", p)); }
  }
  // dual pixel p reads primal pixels p, p+1 and p+width
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(3 * N);
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      auto const p = r * g.width + c;
      pairs.emplace_back(p, p);
      if (c + 1 < g.width) { pairs.emplace_back(p, p + 1); }
      if (r + 1 < g.height) { pairs.emplace_back(p, p + g.width); }
    }
  }

  SaddleProblem P;
  P.kind = ProblemKind::tv_undim;
  P.grid = g;
  P.K = BlockOperator::from_map(BlockLayout::uniform(N, 1), BlockLayout::uniform(N, 2), gradient_map(g),
                                Connectivity::from_pairs(N, N, pairs), std::sqrt(kGradientNormSq));
  P.G.c = mask;
  P.G.d = f.data;
  P.gamma.resize(N);
  for (std::size_t p = 0; p < N; ++p) { P.gamma[p] = mask[p] * mask[p]; }
  P.dual_comps.assign(N, 2);
  P.dual_radius.assign(N, alpha);
  P.image_begin = 0;
  P.image_end = N;
  P.kappa_worst = std::make_shared<WorstCaseKappa>(kGradientNormSq, N, N);
  return P;
}

SaddleProblem build_tv_denoise(Image const &f, double alpha) {
  auto P = build_tv_undim(f, alpha, std::vector<double>(f.grid.pixels(), 1.0));
  P.kind = ProblemKind::tv_denoise;
  return P;
}

double snr_db(std::span<double const> clean, double noise_std) {
  if (noise_std <= 0.0) { return std::numeric_limits<double>::infinity(); }
  double s = 0.0;
  for (double v : clean) { s += v * v; }
  return 10.0 * std::log10(s / static_cast<double>(clean.size()) / (noise_std * noise_std));
}

Corrupted corrupt(Image const &clean, CorruptionSpec const &spec) {
  check_image(clean);
  if (spec.noise_std < 0.0 || spec.blur_std < 0.0) { throw ConfigError("corruption std must be nonnegative"); }
  Corrupted out;
  out.image = clean;
  auto &data = out.image.data;
  switch (spec.kind) {
    case CorruptionSpec::Kind::gaussian_noise: break;
    case CorruptionSpec::Kind::blur:
      if (spec.blur_std > 0.0) {
        out.blur = std::make_shared<FourierDiagonal>(make_gaussian_factors(clean.grid, spec.blur_std));
        data = fourier_blur(clean.data, *out.blur);
      }
      break;
    case CorruptionSpec::Kind::dim:
      out.mask = make_dimming_mask(clean.grid, spec.mask);
      for (std::size_t p = 0; p < data.size(); ++p) { data[p] *= out.mask[p]; }
      break;
  }
  if (spec.noise_std > 0.0) {
    SplitMix64 rng(spec.seed);
    for (auto &v : data) { v += spec.noise_std * rng.normal(); }
  }
  out.snr_db = snr_db(clean.data, spec.noise_std);
  return out;
}

void write_corruption_sidecar(std::string const &path, CorruptionSpec const &spec, Corrupted const &c) {
  std::ofstream out(path);
  if (!out) { throw std::runtime_error("cannot write " + path); }
  char const *kind = spec.kind == CorruptionSpec::Kind::gaussian_noise ? "gaussian_noise"
                     : spec.kind == CorruptionSpec::Kind::blur         ? "blur"
                                                                       : "dim";
  out << "kind = " << kind << '\n';
  out << fmt::format("width = {}\nheight = {}\n", c.image.grid.width, c.image.grid.height);
  out << fmt::format("noise_std = {:.17g}\n", spec.noise_std);
  if (spec.kind == CorruptionSpec::Kind::blur) { out << fmt::format("blur_std = {:.17g}\n", spec.blur_std); }
  if (spec.kind == CorruptionSpec::Kind::dim) {
    out << fmt::format("mask_floor = {:.17g}\nmask_cycles = {:.17g}\n", spec.mask.floor, spec.mask.cycles);
  }
  out << "seed = " << spec.seed << '\n';
  out << fmt::format("snr_db = {:.6f}\n", c.snr_db);
}

}  // namespace blockpd
