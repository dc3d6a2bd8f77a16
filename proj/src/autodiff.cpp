#include "stepalign/autodiff.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace stepalign::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw InvariantError("scalar() on a non-scalar node");
  return v(0, 0);
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::vector<int> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (int p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::grad(int id) const {
  static const Matrix empty;
  const Node& n = nodes_[id];
  return n.grad.size() == 0 && n.value.size() != 0 ? empty : n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw InvariantError("loss belongs to a different tape");
  const int root = loss.id();
  const Node& r = nodes_[root];
  if (r.value.rows() != 1 || r.value.cols() != 1) throw InvariantError("loss is not a scalar");
  if (!r.requires_grad) throw InvariantError("loss does not depend on any differentiable input");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[root].grad = Matrix::Ones(1, 1);
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
  // Leaves that the loss never reached get an explicit zero gradient.
  for (auto& n : nodes_)
    if (n.is_leaf && n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvariantError(std::string(op) + ": shape mismatch");
}

}  // namespace

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(ib)));
    t.accumulate(ib, t.grad(self).cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return a.tape()->record(a.value() * s, {ia}, [ia, s](Tape& t, int self) { t.accumulate(ia, t.grad(self) * s); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id();
  return a.tape()->record(a.value().array() + s, {ia}, [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self)); });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw InvariantError("matmul: inner dimension mismatch");
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  const int ia = a.id();
  return a.tape()->record(a.value().transpose(), {ia},
                          [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self).transpose()); });
}

Var add_row(Var a, Var bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) throw InvariantError("add_row: bias shape mismatch");
  const int ia = a.id(), ib = bias.id();
  Matrix v = a.value().rowwise() + bias.value().row(0);
  return a.tape()->record(std::move(v), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self).colwise().sum());
  });
}

Var mul_const(Var a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) throw InvariantError("mul_const: shape mismatch");
  const int ia = a.id();
  return a.tape()->record(a.value().cwiseProduct(c), {ia},
                          [ia, c](Tape& t, int self) { t.accumulate(ia, t.grad(self).cwiseProduct(c)); });
}

Var weighted_sum(Var a, const Matrix& w) {
  if (a.rows() != w.rows() || a.cols() != w.cols()) throw InvariantError("weighted_sum: shape mismatch");
  const int ia = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().cwiseProduct(w).sum();
  return a.tape()->record(std::move(v), {ia},
                          [ia, w](Tape& t, int self) { t.accumulate(ia, w * t.grad(self)(0, 0)); });
}

Var sum(Var a) {
  const int ia = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape()->record(std::move(v), {ia}, [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
  });
}

Var exp(Var a) {
  const int ia = a.id();
  Matrix v = a.value().array().exp();
  return a.tape()->record(std::move(v), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var log(Var a) {
  const int ia = a.id();
  Matrix v = a.value().array().log();
  return a.tape()->record(std::move(v), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
  });
}

// tanh approximation of GELU.
Var gelu(Var a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  const int ia = a.id();
  const Matrix& x = a.value();
  Matrix v = x.unaryExpr([](double z) { return 0.5 * z * (1.0 + std::tanh(k * (z + c * z * z * z))); });
  return a.tape()->record(std::move(v), {ia}, [ia](Tape& t, int self) {
    Matrix d = t.value(ia).unaryExpr([](double z) {
      const double u = k * (z + c * z * z * z);
      const double th = std::tanh(u);
      const double du = k * (1.0 + 3.0 * c * z * z);
      return 0.5 * (1.0 + th) + 0.5 * z * (1.0 - th * th) * du;
    });
    t.accumulate(ia, t.grad(self).cwiseProduct(d));
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
    throw InvariantError("layer_norm: parameter shape mismatch");
  const Matrix& xv = x.value();
  Matrix xhat(n, d);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape()->record(std::move(out), {ix, ig, ib}, [ix, ig, ib, xhat, inv_std](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
    t.accumulate(ib, g.colwise().sum());
    if (!t.requires_grad(ix)) return;
    const Matrix gh = g.array().rowwise() * t.value(ig).row(0).array();
    const auto d = static_cast<double>(gh.cols());
    Matrix gx(gh.rows(), gh.cols());
    for (Eigen::Index i = 0; i < gh.rows(); ++i) {
      const double m1 = gh.row(i).sum() / d;
      const double m2 = gh.row(i).dot(xhat.row(i)) / d;
      gx.row(i) = inv_std(i) * (gh.row(i).array() - m1 - xhat.row(i).array() * m2);
    }
    t.accumulate(ix, gx);
  });
}

Var softmax_rows(Var x) {
  const Matrix& xv = x.value();
  Matrix p(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double m = xv.row(i).maxCoeff();
    p.row(i) = (xv.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  const int ix = x.id();
  return x.tape()->record(std::move(p), {ix}, [ix](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    const Vector dots = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(ix, y.cwiseProduct(g.colwise() - dots));
  });
}

namespace {

Var logsumexp_impl(Var x, const MaskMatrix* mask) {
  const Matrix& xv = x.value();
  if (mask && (mask->rows() != xv.rows() || mask->cols() != xv.cols()))
    throw InvariantError("logsumexp_rows: mask shape mismatch");
  const Eigen::Index n = xv.rows(), m = xv.cols();
  Matrix out(n, 1);
  Matrix weights = Matrix::Zero(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j)
      if (!mask || (*mask)(i, j)) mx = std::max(mx, xv(i, j));
    if (!std::isfinite(mx)) throw InvariantError("logsumexp_rows: row " + std::to_string(i) + " has no entries");
    double s = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      if (!mask || (*mask)(i, j)) {
        weights(i, j) = std::exp(xv(i, j) - mx);
        s += weights(i, j);
      }
    out(i, 0) = mx + std::log(s);
    weights.row(i) /= s;
  }
  const int ix = x.id();
  return x.tape()->record(std::move(out), {ix}, [ix, weights](Tape& t, int self) {
    t.accumulate(ix, weights.array().colwise() * t.grad(self).col(0).array());
  });
}

}  // namespace

Var logsumexp_rows(Var x) { return logsumexp_impl(x, nullptr); }
Var logsumexp_rows(Var x, const MaskMatrix& mask) { return logsumexp_impl(x, &mask); }

Var normalize_rows(Var x) {
  const Matrix& xv = x.value();
  Vector norms = xv.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i)
    if (!(norms(i) > 0.0)) throw InvariantError("zero-norm row " + std::to_string(i));
  Matrix y = xv.array().colwise() / norms.array();
  const int ix = x.id();
  return x.tape()->record(std::move(y), {ix}, [ix, norms](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    const Vector dots = g.cwiseProduct(y).rowwise().sum();
    const Matrix proj = y.array().colwise() * dots.array();
    const Matrix gx = (g - proj).array().colwise() / norms.array();
    t.accumulate(ix, gx);
  });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) throw InvariantError("slice_cols out of range");
  const int ix = x.id();
  const Eigen::Index rows = x.rows(), cols = x.cols();
  return x.tape()->record(x.value().middleCols(start, count), {ix}, [ix, rows, cols, start, count](Tape& t, int self) {
    Matrix g = Matrix::Zero(rows, cols);
    g.middleCols(start, count) = t.grad(self);
    t.accumulate(ix, g);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvariantError("concat_cols of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw InvariantError("concat_cols: row mismatch");
    cols += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return parts[0].tape()->record(std::move(v), ids, [ids, widths](Tape& t, int self) {
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.accumulate(ids[k], t.grad(self).middleCols(o, widths[k]));
      o += widths[k];
    }
  });
}

Var gather_rows(Var x, std::span<const int> rows) {
  const Matrix& xv = x.value();
  Matrix v(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= xv.rows()) throw InvariantError("gather_rows index out of range");
    v.row(static_cast<Eigen::Index>(k)) = xv.row(rows[k]);
  }
  const int ix = x.id();
  std::vector<int> idx(rows.begin(), rows.end());
  const Eigen::Index n = xv.rows(), d = xv.cols();
  return x.tape()->record(std::move(v), {ix}, [ix, idx, n, d](Tape& t, int self) {
    Matrix g = Matrix::Zero(n, d);
    const Matrix& gs = t.grad(self);
    for (std::size_t k = 0; k < idx.size(); ++k) g.row(idx[k]) += gs.row(static_cast<Eigen::Index>(k));
    t.accumulate(ix, g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvariantError("concat_rows of nothing");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw InvariantError("concat_rows: column mismatch");
    rows += p.rows();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Matrix v(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return parts[0].tape()->record(std::move(v), ids, [ids, heights](Tape& t, int self) {
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.accumulate(ids[k], t.grad(self).middleRows(o, heights[k]));
      o += heights[k];
    }
  });
}

Var cosine(Var a, Var b) {
  if (a.cols() != b.cols()) throw InvariantError("cosine: dimension mismatch");
  return matmul(normalize_rows(a), transpose(normalize_rows(b)));
}

}  // namespace stepalign::ad
