#include <doctest.h>

#include <string>

#include "stepalign/autodiff.hpp"
#include "support.hpp"

using namespace stepalign;
using testsupport::finite_difference_check;

namespace {

void check_op(const std::string& name, const std::vector<Matrix>& inputs, const testsupport::LossBuilder& f) {
  INFO(name);
  const auto r = finite_difference_check(inputs, f);
  CHECK(r.failures == 0);
  CHECK(r.max_rel_error <= 1e-4);
}

}  // namespace

TEST_CASE("gradient of a parameter sum is all ones") {
  ad::Tape tape;
  ad::Var p = tape.leaf(Matrix::Random(3, 4));
  ad::Var q = tape.leaf(Matrix::Random(2, 2));
  tape.backward(ad::sum(p));
  CHECK(p.grad() == Matrix::Ones(3, 4));
  CHECK(q.grad() == Matrix::Zero(2, 2));
}

TEST_CASE("backward rejects non-scalar and leaf-free losses") {
  ad::Tape tape;
  ad::Var p = tape.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(p), InvariantError);
  ad::Var c = tape.constant(Matrix::Ones(1, 1));
  CHECK_THROWS_AS(tape.backward(ad::scale(c, 2.0)), InvariantError);
}

TEST_CASE("primitive gradients match finite differences") {
  Rng rng(17);
  const Matrix a = testsupport::random_matrix(rng, 3, 4);
  const Matrix b = testsupport::random_matrix(rng, 3, 4);
  const Matrix w = testsupport::random_matrix(rng, 4, 2);
  const Matrix row = testsupport::random_matrix(rng, 1, 4);
  const Matrix pos = testsupport::random_matrix(rng, 3, 4, 0.5, 2.0);
  const Matrix sel = testsupport::random_matrix(rng, 3, 4);
  MaskMatrix mask = MaskMatrix::Zero(3, 4);
  mask(0, 1) = mask(1, 0) = mask(1, 3) = mask(2, 2) = 1;

  using V = std::vector<ad::Var>;
  using ad::Tape;
  check_op("add/sub/mul", {a, b}, [&](Tape&, const V& x) {
    return ad::weighted_sum(ad::mul(ad::add(x[0], x[1]), ad::sub(x[0], x[1])), sel);
  });
  check_op("matmul/transpose", {a, w}, [&](Tape&, const V& x) {
    return ad::weighted_sum(ad::transpose(ad::matmul(x[0], x[1])), Matrix::Ones(2, 3) + sel.leftCols(3).topRows(2));
  });
  check_op("add_row/scale/add_scalar", {a, row}, [&](Tape&, const V& x) {
    return ad::weighted_sum(ad::add_scalar(ad::scale(ad::add_row(x[0], x[1]), -1.5), 0.3), sel);
  });
  check_op("exp/log", {pos}, [&](Tape&, const V& x) { return ad::weighted_sum(ad::log(ad::exp(ad::log(x[0]))), sel); });
  check_op("gelu", {a}, [&](Tape&, const V& x) { return ad::weighted_sum(ad::gelu(ad::scale(x[0], 3.0)), sel); });
  check_op("layer_norm", {a, row, testsupport::random_matrix(rng, 1, 4)}, [&](Tape&, const V& x) {
    return ad::weighted_sum(ad::layer_norm(x[0], x[1], x[2]), sel);
  });
  check_op("softmax_rows", {a}, [&](Tape&, const V& x) { return ad::weighted_sum(ad::softmax_rows(x[0]), sel); });
  check_op("logsumexp_rows", {a}, [&](Tape&, const V& x) {
    return ad::sum(ad::add(ad::logsumexp_rows(x[0]), ad::scale(ad::logsumexp_rows(x[0], mask), 2.0)));
  });
  check_op("normalize_rows", {a}, [&](Tape&, const V& x) { return ad::weighted_sum(ad::normalize_rows(x[0]), sel); });
  const Matrix cos_weights = testsupport::random_matrix(rng, 3, 5);
  check_op("cosine", {a, testsupport::random_matrix(rng, 5, 4)}, [&](Tape&, const V& x) {
    return ad::weighted_sum(ad::cosine(x[0], x[1]), cos_weights);
  });
  check_op("slice/concat cols", {a}, [&](Tape&, const V& x) {
    const std::vector<ad::Var> parts{ad::slice_cols(x[0], 2, 2), ad::slice_cols(x[0], 0, 2)};
    return ad::weighted_sum(ad::concat_cols(parts), sel);
  });
  const Matrix gather_weights = testsupport::random_matrix(rng, 6, 4);
  check_op("gather/concat rows", {a, b}, [&](Tape&, const V& x) {
    const std::vector<int> idx{2, 0, 2};
    const std::vector<ad::Var> parts{ad::gather_rows(x[0], idx), x[1]};
    return ad::weighted_sum(ad::concat_rows(parts), gather_weights);
  });
  check_op("mul_const", {a}, [&](Tape&, const V& x) { return ad::sum(ad::mul_const(x[0], sel)); });
}

TEST_CASE("logsumexp is stable for large inputs") {
  ad::Tape tape;
  Matrix big(1, 2);
  big << 1000.0, 1000.0;
  ad::Var x = tape.leaf(big);
  ad::Var l = ad::sum(ad::logsumexp_rows(x));
  CHECK(l.scalar() == doctest::Approx(1000.0 + std::log(2.0)));
  tape.backward(l);
  CHECK(x.grad()(0, 0) == doctest::Approx(0.5));
}
