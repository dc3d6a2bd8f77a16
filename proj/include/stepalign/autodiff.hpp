#pragma once

#include <functional>
#include <span>
#include <vector>

#include "stepalign/core.hpp"

// Minimal reverse-mode differentiation over dense matrices. A Tape records
// every primitive in creation order, which is already a topological order, so
// the backward sweep simply walks the tape in reverse.
namespace stepalign::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] const Matrix& grad() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] double scalar() const;
  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Matrix value);
  /// Input that never receives a gradient.
  Var constant(Matrix value);
  /// Records the result of a primitive. `backward` reads the node's gradient
  /// and accumulates into its parents via accumulate().
  Var record(Matrix value, std::vector<int> parents, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node in reverse
  /// creation order. Throws InvariantError if `loss` is not 1x1 or does not
  /// depend on any leaf.
  void backward(Var loss);

  [[nodiscard]] const Matrix& value(int id) const { return nodes_[id].value; }
  [[nodiscard]] const Matrix& grad(int id) const;
  [[nodiscard]] bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  void accumulate(int id, const Matrix& g);
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    Backward backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };
  std::vector<Node> nodes_;
};

// Elementwise and linear algebra.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);
Var transpose(Var a);
/// a (n x d) + bias (1 x d) broadcast over rows.
Var add_row(Var a, Var bias);
/// Elementwise product with a constant matrix (dropout masks, selectors).
Var mul_const(Var a, const Matrix& c);
/// Sum over all entries of w .* a, with w constant; returns 1x1.
Var weighted_sum(Var a, const Matrix& w);
Var sum(Var a);
Var exp(Var a);
Var log(Var a);
Var gelu(Var a);

// Row-wise operations.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Var x);
/// log(sum_j exp(x_ij)) for each row, optionally over entries where mask is
/// nonzero only. Rows whose mask is empty are invalid. Returns n x 1.
Var logsumexp_rows(Var x);
Var logsumexp_rows(Var x, const MaskMatrix& mask);
Var normalize_rows(Var x);

// Shape manipulation.
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var x, std::span<const int> rows);
Var concat_rows(std::span<const Var> parts);

/// cos(a_i, b_j) as an (rows(a) x rows(b)) matrix.
Var cosine(Var a, Var b);

}  // namespace stepalign::ad
