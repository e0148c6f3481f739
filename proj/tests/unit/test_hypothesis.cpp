// SPDX-License-Identifier: Apache-2.0
#include "core/error.hpp"
#include "core/hypothesis.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace splitplot;

namespace {

Matrix rank_one_half() {
  Matrix p(2, 2);
  p << 0.5, -0.5, -0.5, 0.5;
  return p;
}

}  // namespace

TEST_CASE("projection_from_h examples") {
  const StudyDesign d({2, 1}, {3, 3});
  CHECK(max_abs(projection_from_h(Matrix::Identity(3, 3), d).data() - Matrix::Identity(3, 3)) < 1e-12);

  Matrix h(1, 2);
  h << 1, -1;
  const StudyDesign d2({1, 1}, {3, 3});
  CHECK(max_abs(projection_from_h(h, d2).data() - rank_one_half()) < 1e-14);
  CHECK(max_abs(projection_from_h(3.0 * h, d2).data() - projection_from_h(h, d2).data()) < 1e-10);

  CHECK_THROWS_AS(projection_from_h(Matrix::Identity(2, 2), d), Error);
}

TEST_CASE("projection_from_h: valid projection, row-space and row-operation invariance") {
  RngStream rng(21, 0, 0);
  const StudyDesign d({3, 4}, {5, 5});
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix h = test::random_matrix(rng, 3, 7);
    const BlockMatrix t = projection_from_h(h, d);
    CHECK(validate_hypothesis(t).passed);
    CHECK(validate_hypothesis(t).rank == 3);
    CHECK(max_abs(h * t.data() - h) < 1e-10);  // rows of h are fixed by T

    const Matrix mix = test::random_matrix(rng, 3, 3) + 3.0 * Matrix::Identity(3, 3);
    CHECK(max_abs(projection_from_h(mix * h, d).data() - t.data()) < 1e-8);

    // Rank-deficient h: duplicated rows.
    Matrix hd(4, 7);
    hd << h, h.row(0);
    CHECK(max_abs(projection_from_h(hd, d).data() - t.data()) < 1e-8);
  }
}

TEST_CASE("scenario B matrix") {
  CHECK(max_abs(scenario_b_matrix(StudyDesign({1, 1}, {2, 2})).data() - rank_one_half()) < 1e-15);

  Vector v(4);
  v << 0.5, 0.5, -0.5, -0.5;
  CHECK(max_abs(scenario_b_matrix(StudyDesign({2, 2}, {2, 2})).data() - v * v.transpose()) < 1e-15);

  for (auto dims : {std::vector<std::size_t>{5, 95}, {4, 16}, {20, 80}}) {
    const StudyDesign d(dims, {3, 3});
    const BlockMatrix t = scenario_b_matrix(d);
    CHECK(t.data().trace() == doctest::Approx(1.0).epsilon(1e-12));
    const auto hv = validate_hypothesis(t);
    CHECK(hv.passed);
    CHECK(hv.rank == 1);
    const SymEigen e = sym_eigen(t.data());
    CHECK(e.values(0) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(e.values(1)) < 1e-10);
  }
  CHECK_THROWS_AS(scenario_b_matrix(StudyDesign({2, 2, 2}, {3, 3, 3})), Error);
}

TEST_CASE("scenario A matrix") {
  const BlockMatrix t = scenario_a_matrix(StudyDesign({2, 2}, {3, 3}));
  Matrix expected = Matrix::Zero(4, 4);
  expected.topLeftCorner(2, 2) = rank_one_half();
  expected.bottomRightCorner(2, 2) = rank_one_half();
  CHECK(max_abs(t.data() - expected) < 1e-15);

  const StudyDesign d({5, 15}, {3, 3});
  const BlockMatrix ta = scenario_a_matrix(d);
  CHECK(ta.data().trace() == doctest::Approx(18.0).epsilon(1e-12));
  Vector c(20);
  c.head(5).setConstant(2.0);
  c.tail(15).setConstant(-7.0);
  CHECK((ta.data() * c).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(validate_hypothesis(ta).passed);
  CHECK(validate_hypothesis(ta).rank == 18);

  try {
    scenario_a_matrix(StudyDesign({1, 3}, {3, 3}));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_dimension);
  }
}

TEST_CASE("validate_hypothesis examples") {
  const auto id = validate_hypothesis(BlockMatrix({2, 3}, Matrix::Identity(5, 5)));
  CHECK(id.passed);
  CHECK(id.rank == 5);

  // J_2: J^2 = 2J, so the largest entry of J^2 - J is 1.
  const auto j2 = validate_hypothesis(BlockMatrix({2}, Matrix::Ones(2, 2)));
  CHECK_FALSE(j2.passed);
  CHECK(j2.idempotence_defect == doctest::Approx(1.0));
  CHECK(Matrix(Matrix::Ones(2, 2) * Matrix::Ones(2, 2) - Matrix::Ones(2, 2)).norm() == doctest::Approx(2.0));

  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 1e-6;
  const auto a = validate_hypothesis(BlockMatrix({1, 1}, asym));
  CHECK_FALSE(a.passed);
  CHECK(a.asymmetry == doctest::Approx(1e-6));
  CHECK(a.block_transpose_defect == doctest::Approx(1e-6));
}

TEST_CASE("canned scenarios pair hypotheses with covariances") {
  const StudyDesign d({4, 16}, {10, 15});
  const ScenarioSpec a = make_scenario('A', d);
  CHECK(a.covariances.size() == 2);
  CHECK(a.covariances[0].kind == CovarianceModel::Kind::compound_symmetry);
  const ScenarioSpec b = make_scenario('B', d);
  CHECK(b.covariances[0].kind == CovarianceModel::Kind::ar);
  CHECK(b.covariances[1].kind == CovarianceModel::Kind::scaled_ar);
  CHECK(max_abs(scenario_hypothesis('B', d).data() - scenario_b_matrix(d).data()) == 0.0);
  CHECK_THROWS_AS(make_scenario('C', d), Error);
}

TEST_CASE("block accessors") {
  Matrix m(3, 3);
  m << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const BlockMatrix t({1, 2}, m);
  CHECK(t.blocks() == 2);
  CHECK(t.block_offset(1) == 1);
  CHECK(t.block(1, 0)(1, 0) == 7);
  CHECK(t.block(0, 1).cols() == 2);
  CHECK_THROWS_AS(BlockMatrix({1, 1}, m), Error);
}
