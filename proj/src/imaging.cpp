#include "blockpd/imaging.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>

namespace blockpd {

namespace {

std::mutex &planner_mutex() {
  static std::mutex m;
  return m;
}

constexpr auto npos = std::numeric_limits<std::size_t>::max();

}  // namespace

void check_grid(Grid2D g) {
  if (g.width < 2 || g.height < 2) { throw DimensionError("grid must be at least 2x2"); }
}

void gradient(Grid2D g, std::span<double const> u, std::span<double> field) {
  auto const w = g.width, h = g.height;
  if (u.size() != g.pixels() || field.size() != 2 * g.pixels()) { throw DimensionError("gradient: size"); }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      auto const p = i * w + j;
      field[2 * p] = j + 1 < w ? u[p + 1] - u[p] : 0.0;
      field[2 * p + 1] = i + 1 < h ? u[p + w] - u[p] : 0.0;
    }
  }
}

void gradient_adjoint(Grid2D g, std::span<double const> field, std::span<double> u) {
  auto const w = g.width, h = g.height;
  if (u.size() != g.pixels() || field.size() != 2 * g.pixels()) { throw DimensionError("gradient_adjoint: size"); }
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      auto const p = i * w + j;
      double s = 0.0;
      if (j + 1 < w) { s -= field[2 * p]; }
      if (j > 0) { s += field[2 * (p - 1)]; }
      if (i + 1 < h) { s -= field[2 * p + 1]; }
      if (i > 0) { s += field[2 * (p - w) + 1]; }
      u[p] = s;
    }
  }
}

void sym_gradient(Grid2D g, std::span<double const> wf, std::span<double> e) {
  auto const w = g.width, h = g.height;
  if (wf.size() != 2 * g.pixels() || e.size() != 3 * g.pixels()) { throw DimensionError("sym_gradient: size"); }
  double const r = std::numbers::sqrt2 / 2.0;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      auto const p = i * w + j;
      double const dx1 = j + 1 < w ? wf[2 * (p + 1)] - wf[2 * p] : 0.0;
      double const dy1 = i + 1 < h ? wf[2 * (p + w)] - wf[2 * p] : 0.0;
      double const dx2 = j + 1 < w ? wf[2 * (p + 1) + 1] - wf[2 * p + 1] : 0.0;
      double const dy2 = i + 1 < h ? wf[2 * (p + w) + 1] - wf[2 * p + 1] : 0.0;
      e[3 * p] = dx1;
      e[3 * p + 1] = dy2;
      e[3 * p + 2] = r * (dy1 + dx2);
    }
  }
}

void sym_gradient_adjoint(Grid2D g, std::span<double const> e, std::span<double> wf) {
  auto const w = g.width, h = g.height;
  if (wf.size() != 2 * g.pixels() || e.size() != 3 * g.pixels()) {
    throw DimensionError("sym_gradient_adjoint: size");
  }
  double const r = std::numbers::sqrt2 / 2.0;
  // w1 sees e11 through d/dcol and r*e12 through d/drow; w2 sees e22 through d/drow and r*e12 through d/dcol
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      auto const p = i * w + j;
      double s1 = 0.0, s2 = 0.0;
      if (j + 1 < w) {
        s1 -= e[3 * p];
        s2 -= r * e[3 * p + 2];
      }
      if (j > 0) {
        s1 += e[3 * (p - 1)];
        s2 += r * e[3 * (p - 1) + 2];
      }
      if (i + 1 < h) {
        s1 -= r * e[3 * p + 2];
        s2 -= e[3 * p + 1];
      }
      if (i > 0) {
        s1 += r * e[3 * (p - w) + 2];
        s2 += e[3 * (p - w) + 1];
      }
      wf[2 * p] = s1;
      wf[2 * p + 1] = s2;
    }
  }
}

LinearMap gradient_map(Grid2D g) {
  check_grid(g);
  return {2 * g.pixels(), g.pixels(), [g](auto in, auto out) { gradient(g, in, out); },
          [g](auto in, auto out) { gradient_adjoint(g, in, out); }};
}

LinearMap sym_gradient_map(Grid2D g) {
  check_grid(g);
  return {3 * g.pixels(), 2 * g.pixels(), [g](auto in, auto out) { sym_gradient(g, in, out); },
          [g](auto in, auto out) { sym_gradient_adjoint(g, in, out); }};
}

struct FourierBasis::Plans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
  ~Plans() {
    std::lock_guard lock(planner_mutex());
    if (r2c) { fftw_destroy_plan(r2c); }
    if (c2r) { fftw_destroy_plan(c2r); }
  }
};

FourierBasis::FourierBasis(Grid2D g) : grid_(g), plans_(std::make_shared<Plans>()) {
  check_grid(g);
  auto const h = g.height, w = g.width, wc = half_width();
  {
    std::lock_guard lock(planner_mutex());
    auto *real = fftw_alloc_real(g.pixels());
    auto *cplx = fftw_alloc_complex(h * wc);
    unsigned const flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    plans_->r2c = fftw_plan_dft_r2c_2d(static_cast<int>(h), static_cast<int>(w), real, cplx, flags);
    plans_->c2r = fftw_plan_dft_c2r_2d(static_cast<int>(h), static_cast<int>(w), cplx, real, flags);
    fftw_free(real);
    fftw_free(cplx);
  }
  std::vector<std::size_t> dims;
  for (std::size_t ky = 0; ky < h; ++ky) {
    for (std::size_t kx = 0; kx < wc; ++kx) {
      bool const edge_col = kx == 0 || 2 * kx == w;
      auto const idx = ky * wc + kx;
      if (!edge_col) {
        rep_.push_back(idx);
        partner_.push_back(npos);
        dims.push_back(2);
        continue;
      }
      auto const cy = (h - ky) % h;
      if (cy == ky) {
        rep_.push_back(idx);
        partner_.push_back(npos);
        dims.push_back(1);
      } else if (ky < cy) {
        rep_.push_back(idx);
        partner_.push_back(cy * wc + kx);
        dims.push_back(2);
      }
    }
  }
  layout_ = std::make_shared<BlockLayout const>(dims);
}

void FourierBasis::forward_half(std::span<double const> image, std::span<std::complex<double>> half) const {
  if (image.size() != grid_.pixels() || half.size() != grid_.height * half_width()) {
    throw DimensionError("forward_half: size");
  }
  std::vector<double> in(image.begin(), image.end());
  fftw_execute_dft_r2c(plans_->r2c, in.data(), reinterpret_cast<fftw_complex *>(half.data()));
}

void FourierBasis::inverse_half(std::span<std::complex<double> const> half, std::span<double> image) const {
  if (image.size() != grid_.pixels() || half.size() != grid_.height * half_width()) {
    throw DimensionError("inverse_half: size");
  }
  std::vector<std::complex<double>> in(half.begin(), half.end());
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex *>(in.data()), image.data());
  double const s = 1.0 / static_cast<double>(grid_.pixels());
  for (auto &v : image) { v *= s; }
}

void FourierBasis::to_coords(std::span<double const> image, std::span<double> coords) const {
  if (coords.size() != grid_.pixels()) { throw DimensionError("to_coords: size"); }
  std::vector<std::complex<double>> half(grid_.height * half_width());
  forward_half(image, half);
  double const n = static_cast<double>(grid_.pixels());
  double const s1 = 1.0 / std::sqrt(n), s2 = std::sqrt(2.0 / n);
  for (std::size_t j = 0; j < rep_.size(); ++j) {
    auto const off = layout_->offset(j);
    auto const X = half[rep_[j]];
    if (layout_->dim(j) == 1) {
      coords[off] = s1 * X.real();
    } else {
      coords[off] = s2 * X.real();
      coords[off + 1] = s2 * X.imag();
    }
  }
}

void FourierBasis::to_image(std::span<double const> coords, std::span<double> image) const {
  if (coords.size() != grid_.pixels()) { throw DimensionError("to_image: size"); }
  std::vector<std::complex<double>> half(grid_.height * half_width(), 0.0);
  double const n = static_cast<double>(grid_.pixels());
  double const s1 = std::sqrt(n), s2 = std::sqrt(n / 2.0);
  for (std::size_t j = 0; j < rep_.size(); ++j) {
    auto const off = layout_->offset(j);
    if (layout_->dim(j) == 1) {
      half[rep_[j]] = s1 * coords[off];
    } else {
      std::complex<double> const X(s2 * coords[off], s2 * coords[off + 1]);
      half[rep_[j]] = X;
      if (partner_[j] != npos) { half[partner_[j]] = std::conj(X); }
    }
  }
  inverse_half(half, image);
}

FourierDiagonal::FourierDiagonal(Grid2D g, std::vector<std::complex<double>> factors)
  : grid_(g), a_(std::move(factors)) {
  check_grid(g);
  if (a_.size() != g.pixels()) { throw DimensionError("fourier factors: size"); }
  double amax = 0.0;
  for (auto const &v : a_) { amax = std::max(amax, std::abs(v)); }
  auto const h = g.height, w = g.width;
  for (std::size_t ky = 0; ky < h; ++ky) {
    for (std::size_t kx = 0; kx < w; ++kx) {
      auto const a = a_[ky * w + kx];
      auto const b = a_[((h - ky) % h) * w + (w - kx) % w];
      if (std::abs(a - std::conj(b)) > 1e-12 * std::max(amax, 1.0)) {
        throw ConfigError("fourier factors are not conjugate-symmetric");
      }
    }
  }
}

bool FourierDiagonal::is_real(double tol) const {
  double amax = 0.0;
  for (auto const &v : a_) { amax = std::max(amax, std::abs(v)); }
  return std::all_of(a_.begin(), a_.end(), [&](auto v) { return std::abs(v.imag()) <= tol * std::max(amax, 1.0); });
}

std::vector<double> FourierDiagonal::block_factors(FourierBasis const &basis) const {
  if (!(basis.grid() == grid_)) { throw DimensionError("block_factors: grid mismatch"); }
  if (!is_real()) { throw ConfigError("blockwise factors need real multipliers"); }
  auto const wc = basis.half_width();
  std::vector<double> out(basis.layout().block_count());
  for (std::size_t j = 0; j < out.size(); ++j) {
    auto const r = basis.representative(j);
    out[j] = factor(r / wc, r % wc).real();
  }
  return out;
}

std::vector<double> make_gaussian_kernel(Grid2D g, double std_dev) {
  check_grid(g);
  if (!(std_dev > 0.0)) { throw ConfigError("kernel std must be positive"); }
  std::vector<double> k(g.pixels());
  double sum = 0.0;
  for (std::size_t i = 0; i < g.height; ++i) {
    double const dy = static_cast<double>(std::min(i, g.height - i));
    for (std::size_t j = 0; j < g.width; ++j) {
      double const dx = static_cast<double>(std::min(j, g.width - j));
      double const v = std::exp(-(dx * dx + dy * dy) / (2.0 * std_dev * std_dev));
      k[i * g.width + j] = v;
      sum += v;
    }
  }
  for (auto &v : k) { v /= sum; }
  return k;
}

FourierDiagonal make_gaussian_factors(Grid2D g, double std_dev) {
  auto const kernel = make_gaussian_kernel(g, std_dev);
  FourierBasis basis(g);
  auto const wc = basis.half_width();
  std::vector<std::complex<double>> half(g.height * wc);
  basis.forward_half(kernel, half);
  std::vector<std::complex<double>> full(g.pixels());
  for (std::size_t ky = 0; ky < g.height; ++ky) {
    for (std::size_t kx = 0; kx < g.width; ++kx) {
      if (kx < wc) {
        full[ky * g.width + kx] = half[ky * wc + kx];
      } else {
        full[ky * g.width + kx] = std::conj(half[((g.height - ky) % g.height) * wc + (g.width - kx)]);
      }
    }
  }
  // the kernel is symmetric, so its transform is real up to rounding
  for (auto &v : full) { v = {v.real(), 0.0}; }
  return FourierDiagonal(g, std::move(full));
}

std::vector<double> fourier_blur(std::span<double const> image, FourierDiagonal const &a) {
  auto const g = a.grid();
  if (image.size() != g.pixels()) { throw DimensionError("fourier_blur: size"); }
  FourierBasis basis(g);
  auto const wc = basis.half_width();
  std::vector<std::complex<double>> half(g.height * wc);
  basis.forward_half(image, half);
  for (std::size_t ky = 0; ky < g.height; ++ky) {
    for (std::size_t kx = 0; kx < wc; ++kx) { half[ky * wc + kx] *= a.factor(ky, kx); }
  }
  std::vector<double> out(g.pixels());
  basis.inverse_half(half, out);
  return out;
}

std::vector<double> make_dimming_mask(Grid2D g, MaskParams params) {
  check_grid(g);
  if (!(params.floor > 0.0 && params.floor <= 1.0)) { throw ConfigError("mask floor must lie in (0,1]"); }
  std::vector<double> m(g.pixels());
  for (std::size_t i = 0; i < g.height; ++i) {
    double const s = std::sin(2.0 * std::numbers::pi * params.cycles * static_cast<double>(i) /
                              static_cast<double>(g.height));
    double const v = params.floor + (1.0 - params.floor) * (1.0 + s) / 2.0;
    for (std::size_t j = 0; j < g.width; ++j) { m[i * g.width + j] = v; }
  }
  return m;
}

}  // namespace blockpd
