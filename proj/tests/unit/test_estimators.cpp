// SPDX-License-Identifier: Apache-2.0
#include "core/error.hpp"
#include "core/estimators.hpp"
#include "core/hypothesis.hpp"
#include "core/moments.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <numeric>

using namespace splitplot;

namespace {

// ---------------------------------------------------------------------------
// Literal oracles: iterate over ordered index tuples exactly as the sums are
// written, build every Z vector from the raw observations and divide by the
// textbook normalizers. Deliberately slow and independent of the engine.

Vector literal_z(const GroupedSample& s, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  const StudyDesign& d = s.design();
  Vector z(static_cast<Eigen::Index>(d.total_dim()));
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < d.groups(); ++i) {
    const double scale = std::sqrt(static_cast<double>(d.total_size()) / static_cast<double>(d.size(i)));
    for (std::size_t c = 0; c < d.dim(i); ++c) {
      z(off + static_cast<Eigen::Index>(c)) =
          scale * (s.group(i)(static_cast<Eigen::Index>(a[i]), static_cast<Eigen::Index>(c)) -
                   s.group(i)(static_cast<Eigen::Index>(b[i]), static_cast<Eigen::Index>(c)));
    }
    off += static_cast<Eigen::Index>(d.dim(i));
  }
  return z;
}

// Ordered m-tuples of distinct indices from [0, n) satisfying the order's
// constraint: l1 < l2 (m = 2), l1 < l2 and l3 < l4 (m = 4), none (m = 6).
std::vector<std::vector<std::size_t>> admissible(std::size_t n, int order) {
  const std::size_t m = 2 * static_cast<std::size_t>(order);
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  std::function<void()> rec = [&] {
    if (cur.size() == m) {
      if (order <= 2 && !(cur[0] < cur[1])) return;
      if (order == 2 && !(cur[2] < cur[3])) return;
      out.push_back(cur);
      return;
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (std::find(cur.begin(), cur.end(), v) != cur.end()) continue;
      cur.push_back(v);
      rec();
      cur.pop_back();
    }
  };
  rec();
  return out;
}

double literal_kernel_sum(const GroupedSample& s, const Matrix& t, int order,
                          const std::vector<std::vector<std::size_t>>& tuple) {
  // tuple[i] holds the m indices of group i.
  const std::size_t a = tuple.size();
  auto slot = [&](std::size_t k) {
    std::vector<std::size_t> v(a);
    for (std::size_t i = 0; i < a; ++i) v[i] = tuple[i][k];
    return v;
  };
  if (order == 1) {
    const Vector z = literal_z(s, slot(0), slot(1));
    return z.dot(t * z);
  }
  if (order == 2) {
    const Vector z1 = literal_z(s, slot(0), slot(1));
    const Vector z2 = literal_z(s, slot(2), slot(3));
    const double b = z1.dot(t * z2);
    return b * b;
  }
  const Vector z1 = literal_z(s, slot(0), slot(1));
  const Vector z2 = literal_z(s, slot(2), slot(3));
  const Vector z3 = literal_z(s, slot(4), slot(5));
  return z1.dot(t * z2) * z2.dot(t * z3) * z3.dot(t * z1);
}

double choose(double n, double k) {
  double r = 1.0;
  for (int j = 0; j < static_cast<int>(k); ++j) r = r * (n - j) / (j + 1);
  return r;
}

double falling(double n, int k) {
  double r = 1.0;
  for (int j = 0; j < k; ++j) r *= n - j;
  return r;
}

double literal_a(const GroupedSample& s, const Matrix& t, int order) {
  const StudyDesign& d = s.design();
  std::vector<std::vector<std::vector<std::size_t>>> per_group;
  for (std::size_t n : d.sizes()) per_group.push_back(admissible(n, order));
  double sum = 0.0;
  std::vector<std::vector<std::size_t>> tuple(d.groups());
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == d.groups()) {
      sum += literal_kernel_sum(s, t, order, tuple);
      return;
    }
    for (const auto& idx : per_group[i]) {
      tuple[i] = idx;
      rec(i + 1);
    }
  };
  rec(0);
  double norm = order == 1 ? 2.0 : order == 2 ? 4.0 : 8.0;
  for (std::size_t n : d.sizes()) {
    const double nn = static_cast<double>(n);
    norm *= order == 1 ? choose(nn, 2) : order == 2 ? 6.0 * choose(nn, 4) : falling(nn, 6);
  }
  return sum / norm;
}

double literal_b(const GroupedSample& s, const Matrix& t, int order, const PermutationSet& perms, std::size_t reps) {
  const StudyDesign& d = s.design();
  const std::size_t nmin = d.min_size();
  const auto shared = admissible(nmin, order);
  double sum = 0.0;
  for (std::size_t j = 0; j < reps; ++j) {
    for (const auto& idx : shared) {
      std::vector<std::vector<std::size_t>> tuple(d.groups());
      for (std::size_t i = 0; i < d.groups(); ++i) {
        for (std::size_t v : idx) tuple[i].push_back(perms.permutation(j, i)[v]);
      }
      sum += literal_kernel_sum(s, t, order, tuple);
    }
  }
  const double nn = static_cast<double>(nmin);
  const double norm = order == 1   ? 2.0 * choose(nn, 2)
                      : order == 2 ? 4.0 * 6.0 * choose(nn, 4)
                                   : 8.0 * falling(nn, 6);
  return sum / (norm * static_cast<double>(reps));
}

BlockMatrix random_projection(const StudyDesign& d, std::size_t rank, std::uint64_t seed) {
  RngStream rng(seed, 1, 0);
  return projection_from_h(test::random_matrix(rng, static_cast<Eigen::Index>(rank),
                                               static_cast<Eigen::Index>(d.total_dim())), d);
}

}  // namespace

TEST_CASE("z_vector properties") {
  const StudyDesign d({2, 3}, {4, 5});
  const GroupedSample s = test::random_sample(d, 1);
  const Vector z = z_vector(s, {0, 1}, {2, 4});
  CHECK(max_abs(z - literal_z(s, {0, 1}, {2, 4})) == 0.0);
  CHECK(max_abs(z_vector(s, {2, 4}, {0, 1}) + z) == 0.0);

  Matrix g0 = test::random_sample(d, 2).group(0);
  g0.row(3) = g0.row(1);
  Matrix g1 = s.group(1);
  g1.row(0) = g1.row(2);
  const GroupedSample dup(d, {g0, g1});
  CHECK(z_vector(dup, {1, 0}, {3, 2}).cwiseAbs().maxCoeff() == 0.0);

  const StudyDesign one({2}, {2});
  const GroupedSample s1 = test::random_sample(one, 3);
  CHECK(max_abs(z_vector(s1, {0}, {1}) - (s1.group(0).row(0) - s1.group(0).row(1)).transpose()) == 0.0);

  try {
    z_vector(s, {1, 1}, {1, 2});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_tuple);
  }
}

TEST_CASE("A estimators equal the literal sums") {
  const StudyDesign d({2, 3}, {5, 6});
  const GroupedSample s = test::random_sample(d, 10);
  const BlockMatrix t = random_projection(d, 3, 10);
  CHECK(test::close_rel(a1_full(s, t), literal_a(s, t.data(), 1), 1e-12));
  CHECK(test::close_rel(a2_full(s, t), literal_a(s, t.data(), 2), 1e-12));

  const StudyDesign d3({2, 2}, {6, 6});
  const GroupedSample s3 = test::random_sample(d3, 11);
  const BlockMatrix t3 = random_projection(d3, 2, 11);
  CHECK(test::close_rel(a3_full(s3, t3), literal_a(s3, t3.data(), 3), 1e-11));
}

TEST_CASE("A estimators on three groups and one group") {
  const StudyDesign d({1, 2, 2}, {4, 5, 4});
  const GroupedSample s = test::random_sample(d, 12);
  const BlockMatrix t = random_projection(d, 2, 12);
  CHECK(test::close_rel(a1_full(s, t), literal_a(s, t.data(), 1), 1e-12));
  CHECK(test::close_rel(a2_full(s, t), literal_a(s, t.data(), 2), 1e-12));

  const StudyDesign d1({3}, {7});
  const GroupedSample s1 = test::random_sample(d1, 13);
  const BlockMatrix t1 = random_projection(d1, 2, 13);
  for (int k = 1; k <= 3; ++k) {
    CHECK(test::close_rel(a_full(KernelEngine(s1, t1), k), literal_a(s1, t1.data(), k), 1e-11));
  }
}

TEST_CASE("A1 hand enumeration, one scalar group") {
  Matrix x(4, 1);
  x << 1.0, 4.0, -2.0, 0.5;
  const GroupedSample s(StudyDesign({1}, {4}), {x});
  double sum = 0.0;
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) sum += (x(a) - x(b)) * (x(a) - x(b));
  }
  CHECK(a1_full(s, BlockMatrix({1}, Matrix::Ones(1, 1))) == doctest::Approx(sum / 12.0).epsilon(1e-14));
}

TEST_CASE("B estimators equal the literal sums") {
  const StudyDesign d({2, 3}, {6, 8});
  const GroupedSample s = test::random_sample(d, 20);
  const BlockMatrix t = random_projection(d, 3, 20);
  const PermutationSet perms = PermutationSet::random(d, 3, 99);
  const KernelEngine engine(s, t);
  for (int k = 1; k <= 3; ++k) {
    const std::size_t reps = k == 3 ? 1 : 3;
    CHECK(test::close_rel(b_value(engine, k, perms, reps), literal_b(s, t.data(), k, perms, reps), 1e-11));
  }
  const TraceEstimates all = b_estimators(s, t, 2, perms);
  CHECK(all.family == Family::B);
  CHECK(test::close_rel(all.t2, literal_b(s, t.data(), 2, perms, 2), 1e-11));
  REQUIRE(all.t3.has_value());
}

TEST_CASE("B with one group and identity permutation equals A") {
  const StudyDesign d({3}, {7});
  const GroupedSample s = test::random_sample(d, 21);
  const BlockMatrix t = random_projection(d, 2, 21);
  const KernelEngine engine(s, t);
  const PermutationSet id = PermutationSet::identity(d, 1);
  for (int k = 1; k <= 3; ++k) CHECK(test::close_rel(b_value(engine, k, id, 1), a_full(engine, k), 1e-12));
}

TEST_CASE("balanced design, identity permutation: B1 is the same-index restriction of A1") {
  const StudyDesign d({2, 2}, {6, 6});
  const GroupedSample s = test::random_sample(d, 22);
  const BlockMatrix t = scenario_a_matrix(d);
  double sum = 0.0;
  int count = 0;
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = a + 1; b < 6; ++b) {
      const Vector z = literal_z(s, {a, a}, {b, b});
      sum += 0.5 * z.dot(t.data() * z);
      ++count;
    }
  }
  CHECK(count == 15);
  CHECK(test::close_rel(b_value(KernelEngine(s, t), 1, PermutationSet::identity(d, 1), 1), sum / count, 1e-12));
}

TEST_CASE("enumerating index sources reproduce the full estimators") {
  const StudyDesign d({2, 3}, {6, 6});
  const GroupedSample s = test::random_sample(d, 30);
  const BlockMatrix t = random_projection(d, 4, 30);
  const KernelEngine engine(s, t);
  for (int k = 1; k <= 3; ++k) {
    const SubsampleResult r = a_star(engine, k, 0, IndexSource::enumerate());
    CHECK(r.kernels == a_combinations(d, k));
    CHECK(std::abs(r.value - a_full(engine, k)) <= 1e-10 * std::max(1.0, std::abs(r.value)));
  }
  const PermutationSet perms = PermutationSet::random(d, 4, 5);
  for (int k = 1; k <= 3; ++k) {
    const double bs = b_star_value(engine, k, perms, 4, 1, IndexSource::enumerate());
    const double b = b_value(engine, k, perms, 4);
    CHECK(std::abs(bs - b) <= 1e-10 * std::max(1.0, std::abs(b)));
  }
}

TEST_CASE("translation invariance and constant data") {
  const StudyDesign d({2, 3}, {6, 7});
  const GroupedSample s = test::random_sample(d, 40);
  std::vector<Matrix> shifted = s.groups();
  shifted[0].rowwise() += Eigen::RowVector2d(5.0, -3.0);
  shifted[1].rowwise() += Eigen::RowVector3d(100.0, 0.25, -7.0);
  const GroupedSample s2(d, shifted);
  const BlockMatrix t = random_projection(d, 3, 40);
  const KernelEngine e1(s, t), e2(s2, t);
  const PermutationSet perms = PermutationSet::random(d, 3, 6);
  const IndexSource src = IndexSource::uniform(8);
  for (int k = 1; k <= 3; ++k) {
    const double tol = 1e-10 * std::max(1.0, std::abs(a_full(e1, k)));
    CHECK(std::abs(a_full(e1, k) - a_full(e2, k)) <= tol);
    CHECK(std::abs(a_star(e1, k, 500, src).value - a_star(e2, k, 500, src).value) <= 1e-9);
    CHECK(std::abs(b_value(e1, k, perms, 3) - b_value(e2, k, perms, 3)) <= 1e-9);
    CHECK(std::abs(b_star_value(e1, k, perms, 3, 20, src) - b_star_value(e2, k, perms, 3, 20, src)) <= 1e-9);
  }

  const GroupedSample flat(d, {Matrix::Constant(6, 2, 1.5), Matrix::Constant(7, 3, -2.0)});
  const KernelEngine ef(flat, t);
  for (int k = 1; k <= 3; ++k) {
    CHECK(a_full(ef, k) == 0.0);
    CHECK(a_star(ef, k, 50, src).value == 0.0);
    CHECK(b_value(ef, k, perms, 2) == 0.0);
    CHECK(b_star_value(ef, k, perms, 2, 5, src) == 0.0);
  }
}

TEST_CASE("design minima, enumeration cap and argument checks") {
  const StudyDesign d({2, 2}, {5, 8});
  const GroupedSample s = test::random_sample(d, 50);
  const BlockMatrix t = scenario_a_matrix(d);
  const KernelEngine engine(s, t);
  try {
    a_full(engine, 3);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_design);
  }
  CHECK_THROWS_AS(a_star(engine, 3, 10, IndexSource::uniform(1)), Error);
  try {
    b_value(engine, 3, PermutationSet::identity(d, 1), 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_design);
    CHECK(std::string(e.what()).find("6") != std::string::npos);
  }
  try {
    a_full(engine, 2, 100);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::enumeration_cap);
    CHECK(std::string(e.what()).find("A*") != std::string::npos);
  }
  CHECK(a_combinations(d, 2) == 30ull * 420ull);
  CHECK(b_combinations(8, 3) == 28ull * 15ull * 6ull);
  CHECK_THROWS_AS(a_full(engine, 4), Error);
  CHECK_THROWS_AS(b_value(engine, 1, PermutationSet::identity(d, 2), 3), Error);
  CHECK_THROWS_AS(PermutationSet({3}, {{0, 0, 1}}), Error);
}

TEST_CASE("random permutation sets are bijections and reproducible") {
  const StudyDesign d({1, 1, 1}, {5, 9, 13});
  const PermutationSet a = PermutationSet::random(d, 50, 3);
  const PermutationSet b = PermutationSet::random(d, 50, 3);
  const PermutationSet c = PermutationSet::random(d, 50, 4);
  CHECK(a.repetitions() == 50);
  bool differs = false;
  for (std::size_t j = 0; j < 50; ++j) {
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<std::uint32_t> p = a.permutation(j, i);
      CHECK(p == b.permutation(j, i));
      differs = differs || p != c.permutation(j, i);
      std::sort(p.begin(), p.end());
      std::vector<std::uint32_t> id(p.size());
      std::iota(id.begin(), id.end(), 0u);
      CHECK(p == id);
    }
  }
  CHECK(differs);
}

TEST_CASE("subsampling draws are reproducible given the seed") {
  const StudyDesign d({2, 3}, {8, 9});
  const GroupedSample s = test::random_sample(d, 60);
  const KernelEngine engine(s, scenario_b_matrix(d));
  for (int k = 1; k <= 3; ++k) {
    CHECK(a_star(engine, k, 300, IndexSource::uniform(5)).value == a_star(engine, k, 300, IndexSource::uniform(5)).value);
    CHECK(a_star(engine, k, 300, IndexSource::uniform(5)).value != a_star(engine, k, 300, IndexSource::uniform(6)).value);
  }
}

TEST_CASE("default B* policy and TraceEstimates bookkeeping") {
  const StudyDesign d({5, 95}, {20, 30});
  const BStarPolicy p = default_b_star_policy(d);
  CHECK(p.upsilon1 == std::array<std::uint64_t, 3>{250, 500, 5000});
  CHECK(p.upsilon2 == 10);

  const StudyDesign small({2, 3}, {6, 8});
  const GroupedSample s = test::random_sample(small, 70);
  const BlockMatrix t = scenario_b_matrix(small);
  const BStarPolicy ps = default_b_star_policy(small);
  const PermutationSet perms = PermutationSet::random(small, 1400, 1);
  const TraceEstimates e = b_star(s, t, ps, perms, IndexSource::uniform(2));
  CHECK(e.family == Family::BStar);
  CHECK(e.upsilon == ps.upsilon1);
  CHECK(e.upsilon2 == 10);
  CHECK(e.t3.has_value());
}

TEST_CASE("fhat_pearson") {
  TraceEstimates rank_one;
  rank_one.t1 = 2.0;
  rank_one.t2 = 4.0;
  rank_one.t3 = 8.0;
  CHECK(fhat_pearson(rank_one) == doctest::Approx(1.0).epsilon(1e-15));

  TraceEstimates equal;
  equal.t1 = 7 * 1.5;
  equal.t2 = 7 * 1.5 * 1.5;
  equal.t3 = 7 * 1.5 * 1.5 * 1.5;
  CHECK(fhat_pearson(equal) == doctest::Approx(7.0).epsilon(1e-12));

  TraceEstimates low = rank_one;
  low.t3 = 10.0;
  std::vector<std::string> warnings;
  CHECK(fhat_pearson(low, &warnings) == 1.0);
  CHECK(warnings.size() == 1);

  TraceEstimates negative = equal;
  negative.t3 = -*equal.t3;
  CHECK(fhat_pearson(negative) == doctest::Approx(7.0).epsilon(1e-12));

  TraceEstimates zero = rank_one;
  zero.t3 = 0.0;
  CHECK_THROWS_AS(fhat_pearson(zero), Error);
  TraceEstimates absent = rank_one;
  absent.t3.reset();
  CHECK_THROWS_AS(fhat_pearson(absent), Error);
}

TEST_CASE("Monte Carlo: unbiased A1, d=(3,4), n=(5,5), compound symmetry") {
  const StudyDesign d({3, 4}, {5, 5});
  const ScenarioSpec spec = make_scenario('A', d);
  const BlockMatrix t = scenario_a_matrix(d);
  const SpectralSummary exact = spectral_summary(t, build_vn(d, spec.covariances));
  const GaussianModel model(d, {Vector::Zero(3), Vector::Zero(4)}, spec.covariances);
  double sum = 0.0;
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) sum += a1_full(model.draw(5, static_cast<std::uint64_t>(r)), t);
  CHECK(std::abs(sum / reps / exact.t1 - 1.0) < 0.02);
}

TEST_CASE("Monte Carlo: A2* and B-family f_hat on the desk design") {
  const StudyDesign d({5, 95}, {20, 30});
  const ScenarioSpec spec = make_scenario('B', d);
  const BlockMatrix t = scenario_b_matrix(d);
  const SpectralSummary exact = spectral_summary(t, build_vn(d, spec.covariances));
  const GaussianModel model(d, {Vector::Zero(5), Vector::Zero(95)}, spec.covariances);
  const BStarPolicy policy = default_b_star_policy(d);
  double a2 = 0.0;
  std::vector<double> f;
  const int runs = 200;
  for (int r = 0; r < runs; ++r) {
    const KernelEngine engine(model.draw(6, static_cast<std::uint64_t>(r)), t);
    a2 += a_star(engine, 2, 10 * d.total_size(), IndexSource::uniform(derive_seed(7, r))).value;
    const PermutationSet perms = PermutationSet::random(d, policy.upsilon1[2], derive_seed(8, r));
    f.push_back(fhat_pearson(b_star(engine, policy, perms, IndexSource::uniform(derive_seed(9, r)))));
  }
  CHECK(std::abs(a2 / runs / exact.t2 - 1.0) < 0.05);
  // f_hat is floored at 1 and f_P = 1 here, so the mean sits above f_P; the
  // median does not.
  std::nth_element(f.begin(), f.begin() + runs / 2, f.end());
  CHECK(std::abs(f[runs / 2] / exact.pearson_df - 1.0) < 0.15);
}
