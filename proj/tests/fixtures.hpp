#pragma once

#include "blockpd/image_io.hpp"
#include "blockpd/problems.hpp"

#include <cmath>
#include <memory>

namespace testing {

// downscaled synthetic scene with Gaussian noise
inline blockpd::Image noisy_scene(std::size_t w, std::size_t h, double noise_std, std::uint64_t seed = 1) {
  auto clean = blockpd::downscale(blockpd::synthetic_test_image(4 * w, 4 * h), 4);
  blockpd::CorruptionSpec s;
  s.noise_std = noise_std;
  s.seed = seed;
  return blockpd::corrupt(clean, s).image;
}

// TV denoising with the whole image as one primal block and the whole gradient field as one dual block
inline std::shared_ptr<blockpd::SaddleProblem const> single_block_tv(blockpd::Image const &f, double alpha) {
  using namespace blockpd;
  auto P = build_tv_denoise(f, alpha);
  auto const N = f.grid.pixels();
  P.K = BlockOperator::from_map(BlockLayout({N}), BlockLayout({2 * N}), gradient_map(f.grid),
                                Connectivity::dense(1, 1), std::sqrt(kGradientNormSq));
  P.gamma = {1.0};
  P.dual_comps = {2};
  P.dual_radius = {alpha};
  P.kappa_worst = std::make_shared<WorstCaseKappa>(kGradientNormSq, 1, 1);
  return std::make_shared<SaddleProblem const>(std::move(P));
}

}  // namespace testing
