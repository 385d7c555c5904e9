#include "blockpd/block_core.hpp"

#include "blockpd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace blockpd {

BlockLayout::BlockLayout(std::vector<std::size_t> const &dims, std::vector<std::string> labels)
  : labels_(std::move(labels)) {
  if (dims.empty()) { throw DimensionError("layout needs at least one block"); }
  if (!labels_.empty() && labels_.size() != dims.size()) {
    throw DimensionError("layout label count does not match block count");
  }
  offsets_.assign(1, 0);
  offsets_.reserve(dims.size() + 1);
  for (auto d : dims) {
    if (d == 0) { throw DimensionError("empty block in layout"); }
    offsets_.push_back(offsets_.back() + d);
  }
}

BlockLayout BlockLayout::uniform(std::size_t count, std::size_t dim) {
  return BlockLayout(std::vector<std::size_t>(count, dim));
}

std::string BlockLayout::label(std::size_t j) const {
  if (j < labels_.size()) { return labels_[j]; }
  return std::to_string(j);
}

BlockVector::BlockVector(std::shared_ptr<BlockLayout const> layout)
  : layout_(std::move(layout)), data_(layout_->total(), 0.0) {}

BlockVector::BlockVector(std::shared_ptr<BlockLayout const> layout, std::vector<double> data)
  : layout_(std::move(layout)), data_(std::move(data)) {
  if (data_.size() != layout_->total()) { throw DimensionError("block vector data does not match layout"); }
}

double dot(std::span<double const> a, std::span<double const> b) {
  if (a.size() != b.size()) { throw DimensionError("dot: size mismatch"); }
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) { s += a[k] * b[k]; }
  return s;
}

double norm2(std::span<double const> a) { return std::sqrt(dot(a, a)); }

LinearMap scaled_identity(std::size_t n, double scale) {
  auto f = [scale](std::span<double const> in, std::span<double> out) {
    for (std::size_t k = 0; k < in.size(); ++k) { out[k] = scale * in[k]; }
  };
  return {n, n, f, f};
}

LinearMap diagonal_map(std::vector<double> diag) {
  auto d = std::make_shared<std::vector<double> const>(std::move(diag));
  auto f = [d](std::span<double const> in, std::span<double> out) {
    for (std::size_t k = 0; k < in.size(); ++k) { out[k] = (*d)[k] * in[k]; }
  };
  return {d->size(), d->size(), f, f};
}

double estimate_norm(LinearMap const &op, std::size_t iters, std::uint64_t seed) {
  if (iters == 0) { throw ConfigError("estimate_norm needs at least one iteration"); }
  SplitMix64 rng(seed);
  std::vector<double> x(op.cols), ax(op.rows);
  for (auto &v : x) { v = rng.normal(); }
  double best = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    double const nx = norm2(x);
    if (nx == 0.0) { break; }
    for (auto &v : x) { v /= nx; }
    op.forward(x, ax);
    double const nax = norm2(ax);
    best = std::max(best, nax);
    if (nax == 0.0) { break; }
    op.adjoint(ax, x);
  }
  return best;
}

double estimated_bound(LinearMap const &op, std::size_t iters, std::uint64_t seed) {
  return 1.01 * estimate_norm(op, iters, seed);
}

Connectivity Connectivity::dense(std::size_t primal_blocks, std::size_t dual_blocks) {
  Connectivity c;
  c.dense_ = true;
  c.duals_of_.resize(primal_blocks);
  c.primals_of_.resize(dual_blocks);
  c.all_duals_.resize(dual_blocks);
  c.all_primals_.resize(primal_blocks);
  std::iota(c.all_duals_.begin(), c.all_duals_.end(), std::size_t{0});
  std::iota(c.all_primals_.begin(), c.all_primals_.end(), std::size_t{0});
  return c;
}

Connectivity Connectivity::from_pairs(std::size_t primal_blocks, std::size_t dual_blocks,
                                      std::vector<std::pair<std::size_t, std::size_t>> const &row_col) {
  Connectivity c;
  c.duals_of_.resize(primal_blocks);
  c.primals_of_.resize(dual_blocks);
  for (auto [l, j] : row_col) {
    if (l >= dual_blocks || j >= primal_blocks) { throw DimensionError("connectivity pair out of range"); }
    c.duals_of_[j].push_back(l);
    c.primals_of_[l].push_back(j);
  }
  for (auto &v : c.duals_of_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  for (auto &v : c.primals_of_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return c;
}

bool Connectivity::connected(std::size_t l, std::size_t j) const {
  if (dense_) { return true; }
  auto const &v = duals_of_[j];
  return std::binary_search(v.begin(), v.end(), l);
}

void Connectivity::dual_image(std::span<std::uint8_t const> primal_set, std::span<std::uint8_t> out) const {
  std::fill(out.begin(), out.end(), std::uint8_t{0});
  bool any = false;
  for (std::size_t j = 0; j < primal_set.size(); ++j) {
    if (!primal_set[j]) { continue; }
    any = true;
    if (dense_) { break; }
    for (auto l : duals_of_[j]) { out[l] = 1; }
  }
  if (dense_ && any) { std::fill(out.begin(), out.end(), std::uint8_t{1}); }
}

void Connectivity::primal_preimage(std::span<std::uint8_t const> dual_set, std::span<std::uint8_t> out) const {
  std::fill(out.begin(), out.end(), std::uint8_t{0});
  bool any = false;
  for (std::size_t l = 0; l < dual_set.size(); ++l) {
    if (!dual_set[l]) { continue; }
    any = true;
    if (dense_) { break; }
    for (auto j : primals_of_[l]) { out[j] = 1; }
  }
  if (dense_ && any) { std::fill(out.begin(), out.end(), std::uint8_t{1}); }
}

namespace {

void check_bound(LinearMap const &map, double bound, std::size_t iters, std::string const &what) {
  if (iters == 0) { return; }
  double const est = estimate_norm(map, iters, 0x5eedULL);
  if (est > bound * (1.0 + 1e-9)) {
    throw ConfigError(what + ": norm bound " + std::to_string(bound) + " below estimate " + std::to_string(est));
  }
}

}  // namespace

BlockOperator BlockOperator::from_blocks(BlockLayout primal, BlockLayout dual, std::vector<SubBlock> blocks,
                                         double global_norm_bound, std::size_t verify_iters) {
  BlockOperator op;
  op.primal_ = std::make_shared<BlockLayout const>(std::move(primal));
  op.dual_ = std::make_shared<BlockLayout const>(std::move(dual));
  std::sort(blocks.begin(), blocks.end(),
            [](SubBlock const &a, SubBlock const &b) { return std::pair(a.row, a.col) < std::pair(b.row, b.col); });
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto const &b = blocks[k];
    if (b.row >= op.dual_->block_count() || b.col >= op.primal_->block_count()) {
      throw DimensionError("sub-block index out of range");
    }
    if (b.map.rows != op.dual_->dim(b.row) || b.map.cols != op.primal_->dim(b.col)) {
      throw DimensionError("sub-block shape does not match layouts");
    }
    if (!op.index_.emplace(std::pair(b.row, b.col), k).second) { throw DimensionError("duplicate sub-block"); }
    pairs.emplace_back(b.row, b.col);
    check_bound(b.map, b.norm_bound, verify_iters,
                "sub-block (" + std::to_string(b.row) + "," + std::to_string(b.col) + ")");
  }
  op.blocks_ = std::move(blocks);
  op.conn_ = Connectivity::from_pairs(op.primal_->block_count(), op.dual_->block_count(), pairs);
  op.global_bound_ = global_norm_bound;

  op.whole_.rows = op.dual_->total();
  op.whole_.cols = op.primal_->total();
  check_bound(op.as_map(), global_norm_bound, verify_iters, "global");
  return op;
}

BlockOperator BlockOperator::from_map(BlockLayout primal, BlockLayout dual, LinearMap whole, Connectivity conn,
                                      double global_norm_bound, std::size_t verify_iters) {
  BlockOperator op;
  op.primal_ = std::make_shared<BlockLayout const>(std::move(primal));
  op.dual_ = std::make_shared<BlockLayout const>(std::move(dual));
  if (whole.rows != op.dual_->total() || whole.cols != op.primal_->total()) {
    throw DimensionError("operator shape does not match layouts");
  }
  if (conn.primal_blocks() != op.primal_->block_count() || conn.dual_blocks() != op.dual_->block_count()) {
    throw DimensionError("connectivity does not match layouts");
  }
  op.whole_ = std::move(whole);
  op.conn_ = std::move(conn);
  op.global_bound_ = global_norm_bound;
  check_bound(op.whole_, global_norm_bound, verify_iters, "global");
  return op;
}

std::optional<double> BlockOperator::norm_bound(std::size_t l, std::size_t j) const {
  auto it = index_.find({l, j});
  if (it == index_.end()) { return std::nullopt; }
  return blocks_[it->second].norm_bound;
}

void BlockOperator::apply(std::span<double const> x, std::span<double> y) const {
  if (x.size() != cols() || y.size() != rows()) { throw DimensionError("apply: layout mismatch"); }
  if (blocks_.empty() || fused_) {
    whole_.forward(x, y);
    return;
  }
  std::fill(y.begin(), y.end(), 0.0);
  std::vector<double> tmp;
  for (auto const &b : blocks_) {
    auto const n = dual_->dim(b.row);
    tmp.resize(n);
    b.map.forward(x.subspan(primal_->offset(b.col), primal_->dim(b.col)), tmp);
    double *out = y.data() + dual_->offset(b.row);
    for (std::size_t k = 0; k < n; ++k) { out[k] += tmp[k]; }
  }
}

void BlockOperator::apply_adjoint(std::span<double const> y, std::span<double> x) const {
  if (y.size() != rows() || x.size() != cols()) { throw DimensionError("apply_adjoint: layout mismatch"); }
  if (blocks_.empty() || fused_) {
    whole_.adjoint(y, x);
    return;
  }
  std::fill(x.begin(), x.end(), 0.0);
  std::vector<double> tmp;
  for (std::size_t j = 0; j < primal_->block_count(); ++j) {
    auto const n = primal_->dim(j);
    double *out = x.data() + primal_->offset(j);
    for (auto l : conn_.duals_of(j)) {
      auto const &b = blocks_[index_.at({l, j})];
      tmp.resize(n);
      b.map.adjoint(y.subspan(dual_->offset(l), dual_->dim(l)), tmp);
      for (std::size_t k = 0; k < n; ++k) { out[k] += tmp[k]; }
    }
  }
}

BlockVector BlockOperator::apply(BlockVector const &x) const {
  if (!(x.layout() == *primal_)) { throw DimensionError("apply: vector does not conform to primal layout"); }
  BlockVector y(dual_);
  apply(x.data(), y.data());
  return y;
}

BlockVector BlockOperator::apply_adjoint(BlockVector const &y) const {
  if (!(y.layout() == *dual_)) { throw DimensionError("apply_adjoint: vector does not conform to dual layout"); }
  BlockVector x(primal_);
  apply_adjoint(y.data(), x.data());
  return x;
}

void BlockOperator::apply_block(std::size_t l, std::size_t j, std::span<double const> xj,
                                std::span<double> yl) const {
  if (xj.size() != primal_->dim(j) || yl.size() != dual_->dim(l)) { throw DimensionError("apply_block: shape"); }
  if (!blocks_.empty()) {
    auto it = index_.find({l, j});
    if (it == index_.end()) {
      std::fill(yl.begin(), yl.end(), 0.0);
    } else {
      blocks_[it->second].map.forward(xj, yl);
    }
    return;
  }
  std::vector<double> x(cols(), 0.0), y(rows());
  std::copy(xj.begin(), xj.end(), x.begin() + static_cast<std::ptrdiff_t>(primal_->offset(j)));
  whole_.forward(x, y);
  auto const *src = y.data() + dual_->offset(l);
  std::copy(src, src + yl.size(), yl.begin());
}

void BlockOperator::apply_block_adjoint(std::size_t l, std::size_t j, std::span<double const> yl,
                                        std::span<double> xj) const {
  if (xj.size() != primal_->dim(j) || yl.size() != dual_->dim(l)) { throw DimensionError("apply_block: shape"); }
  if (!blocks_.empty()) {
    auto it = index_.find({l, j});
    if (it == index_.end()) {
      std::fill(xj.begin(), xj.end(), 0.0);
    } else {
      blocks_[it->second].map.adjoint(yl, xj);
    }
    return;
  }
  std::vector<double> y(rows(), 0.0), x(cols());
  std::copy(yl.begin(), yl.end(), y.begin() + static_cast<std::ptrdiff_t>(dual_->offset(l)));
  whole_.adjoint(y, x);
  auto const *src = x.data() + primal_->offset(j);
  std::copy(src, src + xj.size(), xj.begin());
}

LinearMap BlockOperator::as_map() const {
  if (blocks_.empty()) { return whole_; }
  auto self = std::make_shared<BlockOperator const>(*this);
  return {rows(), cols(), [self](std::span<double const> x, std::span<double> y) { self->apply(x, y); },
          [self](std::span<double const> y, std::span<double> x) { self->apply_adjoint(y, x); }};
}

void BlockOperator::set_fused(LinearMap fused, std::size_t verify_trials) {
  if (blocks_.empty()) { throw std::logic_error("set_fused needs an operator built from sub-blocks"); }
  if (fused.rows != rows() || fused.cols != cols()) { throw DimensionError("fused map shape does not match layouts"); }
  fused_ = false;
  SplitMix64 rng(0x6a09e667f3bcc909ULL);
  std::vector<double> x(cols()), y(rows()), a(rows()), b(rows()), c(cols()), d(cols());
  auto close = [](std::span<double const> u, std::span<double const> v) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      diff += (u[k] - v[k]) * (u[k] - v[k]);
      ref += u[k] * u[k];
    }
    return std::sqrt(diff) <= 1e-12 * std::max(std::sqrt(ref), 1.0);
  };
  for (std::size_t t = 0; t < verify_trials; ++t) {
    for (auto &v : x) { v = rng.normal(); }
    for (auto &v : y) { v = rng.normal(); }
    apply(x, a);
    fused.forward(x, b);
    apply_adjoint(y, c);
    fused.adjoint(y, d);
    if (!close(a, b) || !close(c, d)) { throw DimensionError("fused map disagrees with the sub-block sum"); }
  }
  whole_ = std::move(fused);
  fused_ = true;
}

}  // namespace blockpd
