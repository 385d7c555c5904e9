#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace blockpd {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class BlockLayout {
 public:
  BlockLayout() : offsets_{0} {}
  explicit BlockLayout(std::vector<std::size_t> const &dims, std::vector<std::string> labels = {});
  static BlockLayout uniform(std::size_t count, std::size_t dim);

  std::size_t block_count() const { return offsets_.size() - 1; }
  std::size_t total() const { return offsets_.back(); }
  std::size_t offset(std::size_t j) const { return offsets_[j]; }
  std::size_t dim(std::size_t j) const { return offsets_[j + 1] - offsets_[j]; }
  std::string label(std::size_t j) const;

  bool operator==(BlockLayout const &o) const { return offsets_ == o.offsets_; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::string> labels_;
};

class BlockVector {
 public:
  BlockVector() = default;
  explicit BlockVector(std::shared_ptr<BlockLayout const> layout);
  BlockVector(std::shared_ptr<BlockLayout const> layout, std::vector<double> data);

  BlockLayout const &layout() const { return *layout_; }
  std::shared_ptr<BlockLayout const> const &layout_ptr() const { return layout_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> block(std::size_t j) { return {data_.data() + layout_->offset(j), layout_->dim(j)}; }
  std::span<double const> block(std::size_t j) const {
    return {data_.data() + layout_->offset(j), layout_->dim(j)};
  }

  std::vector<double> &data() { return data_; }
  std::vector<double> const &data() const { return data_; }

 private:
  std::shared_ptr<BlockLayout const> layout_;
  std::vector<double> data_;
};

double dot(std::span<double const> a, std::span<double const> b);
double norm2(std::span<double const> a);

// A linear map given by forward and adjoint callbacks that overwrite their output.
struct LinearMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::function<void(std::span<double const>, std::span<double>)> forward;
  std::function<void(std::span<double const>, std::span<double>)> adjoint;
};

LinearMap scaled_identity(std::size_t n, double scale);
LinearMap diagonal_map(std::vector<double> diag);

// Power iteration on A*A. Returns the running maximum of |A x_k| over unit x_k,
// which is nondecreasing in `iters` for a fixed seed.
double estimate_norm(LinearMap const &op, std::size_t iters, std::uint64_t seed);
// Power-iteration estimate inflated by 1.01 for use as a norm bound.
double estimated_bound(LinearMap const &op, std::size_t iters, std::uint64_t seed);

// C(j): dual blocks coupled to primal block j. C^-1(l): primal blocks coupled to dual block l.
class Connectivity {
 public:
  Connectivity() = default;
  static Connectivity dense(std::size_t primal_blocks, std::size_t dual_blocks);
  static Connectivity from_pairs(std::size_t primal_blocks, std::size_t dual_blocks,
                                 std::vector<std::pair<std::size_t, std::size_t>> const &row_col);

  std::size_t primal_blocks() const { return duals_of_.size(); }
  std::size_t dual_blocks() const { return primals_of_.size(); }
  bool is_dense() const { return dense_; }
  bool connected(std::size_t l, std::size_t j) const;

  std::vector<std::size_t> const &duals_of(std::size_t j) const { return dense_ ? all_duals_ : duals_of_[j]; }
  std::vector<std::size_t> const &primals_of(std::size_t l) const { return dense_ ? all_primals_ : primals_of_[l]; }

  // image of a primal index set under C and preimage of a dual set under C^-1, as flags
  void dual_image(std::span<std::uint8_t const> primal_set, std::span<std::uint8_t> out) const;
  void primal_preimage(std::span<std::uint8_t const> dual_set, std::span<std::uint8_t> out) const;

 private:
  bool dense_ = false;
  std::vector<std::vector<std::size_t>> duals_of_;
  std::vector<std::vector<std::size_t>> primals_of_;
  std::vector<std::size_t> all_duals_, all_primals_;
};

class BlockOperator {
 public:
  struct SubBlock {
    std::size_t row = 0;  // dual block l
    std::size_t col = 0;  // primal block j
    LinearMap map;
    double norm_bound = 0.0;
  };

  // Whole apply is the ascending (l, j) sum of the sub-blocks. Each bound is checked against
  // `verify_iters` power iterations unless zero.
  static BlockOperator from_blocks(BlockLayout primal, BlockLayout dual, std::vector<SubBlock> blocks,
                                   double global_norm_bound, std::size_t verify_iters = 30);
  // Operator given as a whole map with a declared connectivity; sub-blocks act by masking.
  static BlockOperator from_map(BlockLayout primal, BlockLayout dual, LinearMap whole, Connectivity conn,
                                double global_norm_bound, std::size_t verify_iters = 30);

  BlockLayout const &primal_layout() const { return *primal_; }
  BlockLayout const &dual_layout() const { return *dual_; }
  std::shared_ptr<BlockLayout const> const &primal_layout_ptr() const { return primal_; }
  std::shared_ptr<BlockLayout const> const &dual_layout_ptr() const { return dual_; }
  Connectivity const &connectivity() const { return conn_; }
  double global_norm_bound() const { return global_bound_; }
  std::optional<double> norm_bound(std::size_t l, std::size_t j) const;
  bool has_sub_blocks() const { return !blocks_.empty(); }
  std::size_t rows() const { return dual_->total(); }
  std::size_t cols() const { return primal_->total(); }

  void apply(std::span<double const> x, std::span<double> y) const;
  void apply_adjoint(std::span<double const> y, std::span<double> x) const;
  BlockVector apply(BlockVector const &x) const;
  BlockVector apply_adjoint(BlockVector const &y) const;

  // K_{l,j} x_j into a dual-block-sized output, and its adjoint
  void apply_block(std::size_t l, std::size_t j, std::span<double const> xj, std::span<double> yl) const;
  void apply_block_adjoint(std::size_t l, std::size_t j, std::span<double const> yl, std::span<double> xj) const;

  LinearMap as_map() const;

  // Installs a whole-operator map equal to the sub-block sum, used by apply and apply_adjoint.
  // Checked against the sub-blocks on `verify_trials` random vectors.
  void set_fused(LinearMap fused, std::size_t verify_trials = 3);

 private:
  std::shared_ptr<BlockLayout const> primal_, dual_;
  std::vector<SubBlock> blocks_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index_;
  LinearMap whole_;
  bool fused_ = false;
  Connectivity conn_;
  double global_bound_ = 0.0;
};

}  // namespace blockpd
