// SPDX-License-Identifier: Apache-2.0
#include "core/estimators.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

namespace splitplot {

const char* to_string(Family family) noexcept {
  switch (family) {
    case Family::A: return "A";
    case Family::AStar: return "Astar";
    case Family::B: return "B";
    case Family::BStar: return "Bstar";
    case Family::Exact: return "exact";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Kernel engine

KernelEngine::KernelEngine(const GroupedSample& sample, const BlockMatrix& t) : design_(sample.design()) {
  if (t.block_dims() != design_.dims()) {
    fail(ErrorKind::structural, "estimators: hypothesis block layout does not match the sample dimensions");
  }
  const auto n = static_cast<Eigen::Index>(design_.total_size());
  const auto d = static_cast<Eigen::Index>(design_.total_dim());
  // Embedded, centred, scaled observations: row u holds sqrt(N/n_i)(x_u - xbar_i)
  // in the columns of its group.
  Matrix rows = Matrix::Zero(n, d);
  for (std::size_t i = 0; i < design_.groups(); ++i) {
    const Matrix& x = sample.group(i);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    rows.block(static_cast<Eigen::Index>(design_.row_offset(i)), static_cast<Eigen::Index>(design_.dim_offset(i)),
               x.rows(), x.cols()) = std::sqrt(design_.size_ratio(i)) * (x.rowwise() - mean);
  }
  const Matrix projected = rows * t.data();
  gram_ = projected * rows.transpose();
}

double KernelEngine::bilinear(const std::uint32_t* p1, const std::uint32_t* p2, const std::uint32_t* q1,
                              const std::uint32_t* q2) const noexcept {
  const std::size_t a = design_.groups();
  double acc = 0.0;
  for (std::size_t i = 0; i < a; ++i) {
    const double* g1 = gram_.data();  // column-major, symmetric: use column access
    const auto c1 = static_cast<Eigen::Index>(p1[i]) * gram_.rows();
    const auto c2 = static_cast<Eigen::Index>(p2[i]) * gram_.rows();
    for (std::size_t r = 0; r < a; ++r) {
      acc += g1[c1 + q1[r]] - g1[c1 + q2[r]] - g1[c2 + q1[r]] + g1[c2 + q2[r]];
    }
  }
  return acc;
}

double KernelEngine::kernel(int order, const std::uint32_t* idx) const noexcept {
  const std::size_t a = design_.groups();
  const std::uint32_t* s0 = idx;
  const std::uint32_t* s1 = idx + a;
  switch (order) {
    case 1:
      return 0.5 * bilinear(s0, s1, s0, s1);
    case 2: {
      const double b = bilinear(s0, s1, s1 + a, s1 + 2 * a);
      return 0.25 * b * b;
    }
    default: {
      const std::uint32_t* s2 = idx + 2 * a;
      const std::uint32_t* s3 = idx + 3 * a;
      const std::uint32_t* s4 = idx + 4 * a;
      const std::uint32_t* s5 = idx + 5 * a;
      return 0.125 * bilinear(s0, s1, s2, s3) * bilinear(s2, s3, s4, s5) * bilinear(s4, s5, s0, s1);
    }
  }
}

double KernelEngine::kernel3_oriented(const std::uint32_t* idx) const noexcept {
  const std::size_t a = design_.groups();
  const double* g = gram_.data();
  const auto ld = gram_.rows();
  // Block (i, r) of the bilinear form between pair slots (p, p + 1) and (q, q + 1).
  auto part = [&](std::size_t p, std::size_t q, std::size_t i, std::size_t r) {
    const auto c1 = static_cast<Eigen::Index>(idx[p * a + i]) * ld;
    const auto c2 = static_cast<Eigen::Index>(idx[(p + 1) * a + i]) * ld;
    const std::uint32_t q1 = idx[q * a + r], q2 = idx[(q + 1) * a + r];
    return g[c1 + q1] - g[c1 + q2] - g[c2 + q1] + g[c2 + q2];
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t r = 0; r < a; ++r) {
      const double first = part(0, 2, i, r);
      for (std::size_t u = 0; u < a; ++u) acc += first * part(2, 4, r, u) * part(4, 0, u, i);
    }
  }
  return 0.125 * acc;
}

Vector z_vector(const GroupedSample& sample, const std::vector<std::size_t>& first,
                const std::vector<std::size_t>& second) {
  const StudyDesign& design = sample.design();
  if (first.size() != design.groups() || second.size() != design.groups()) {
    fail(ErrorKind::structural, "z_vector: need one index per group in each tuple");
  }
  Vector z(static_cast<Eigen::Index>(design.total_dim()));
  for (std::size_t i = 0; i < design.groups(); ++i) {
    if (first[i] >= design.size(i) || second[i] >= design.size(i)) {
      fail(ErrorKind::invalid_tuple, "z_vector: index out of range in group " + std::to_string(i + 1));
    }
    if (first[i] == second[i]) {
      fail(ErrorKind::invalid_tuple, "z_vector: repeated index " + std::to_string(first[i]) + " in group " +
                                         std::to_string(i + 1));
    }
    const Matrix& x = sample.group(i);
    z.segment(static_cast<Eigen::Index>(design.dim_offset(i)), x.cols()) =
        std::sqrt(design.size_ratio(i)) *
        (x.row(static_cast<Eigen::Index>(first[i])) - x.row(static_cast<Eigen::Index>(second[i]))).transpose();
  }
  return z;
}

namespace {

void require_order(int order) {
  if (order < 1 || order > 3) fail(ErrorKind::domain, "estimator order must be 1, 2 or 3");
}

std::uint64_t choose2(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

// Ordered sequences of k disjoint unordered pairs from {0..n-1}.
std::uint64_t sequence_count(std::size_t n, int k) {
  std::uint64_t count = 1;
  for (int s = 0; s < k; ++s) count *= choose2(n >= 2u * s ? n - 2u * s : 0);
  return count;
}

// Flat list: each sequence occupies 2k entries (u_0 < v_0, u_1 < v_1, ...).
std::vector<std::uint32_t> pair_sequences(std::size_t n, int k) {
  std::vector<std::uint32_t> out;
  out.reserve(sequence_count(n, k) * 2 * static_cast<std::size_t>(k));
  std::vector<std::uint32_t> current;
  std::vector<char> used(n, 0);
  auto recurse = [&](auto&& self, int depth) -> void {
    if (depth == k) {
      out.insert(out.end(), current.begin(), current.end());
      return;
    }
    for (std::uint32_t u = 0; u < n; ++u) {
      if (used[u]) continue;
      for (std::uint32_t v = u + 1; v < n; ++v) {
        if (used[v]) continue;
        used[u] = used[v] = 1;
        current.push_back(u);
        current.push_back(v);
        self(self, depth + 1);
        current.pop_back();
        current.pop_back();
        used[u] = used[v] = 0;
      }
    }
  };
  recurse(recurse, 0);
  return out;
}

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > UINT64_MAX / a) return UINT64_MAX;
  return a * b;
}

// Unordered pair tables H_ir(p, q) = Z-contribution of pair p of group i
// against pair q of group r.
class PairTables {
 public:
  static constexpr std::size_t kMaxEntries = 8'000'000;

  static bool affordable(const StudyDesign& design) {
    std::uint64_t pairs = 0;
    for (std::size_t n : design.sizes()) pairs += choose2(n);
    return saturating_mul(pairs, pairs) <= kMaxEntries;
  }

  explicit PairTables(const KernelEngine& engine) : a_(engine.design().groups()) {
    const StudyDesign& design = engine.design();
    const Matrix& g = engine.gram();
    sizes_ = design.sizes();
    for (std::size_t i = 0; i < a_; ++i) {
      const std::size_t n = design.size(i);
      std::vector<std::uint32_t> rows;
      for (std::uint32_t u = 0; u < n; ++u) {
        for (std::uint32_t v = u + 1; v < n; ++v) {
          rows.push_back(static_cast<std::uint32_t>(design.row_offset(i)) + u);
          rows.push_back(static_cast<std::uint32_t>(design.row_offset(i)) + v);
        }
      }
      pair_rows_.push_back(std::move(rows));
    }
    tables_.resize(a_ * a_);
    for (std::size_t i = 0; i < a_; ++i) {
      for (std::size_t r = 0; r < a_; ++r) {
        const auto& pi = pair_rows_[i];
        const auto& pr = pair_rows_[r];
        const auto ni = static_cast<Eigen::Index>(pi.size() / 2);
        const auto nr = static_cast<Eigen::Index>(pr.size() / 2);
        Matrix h(ni, nr);
        for (Eigen::Index p = 0; p < ni; ++p) {
          const auto u = pi[2 * p], v = pi[2 * p + 1];
          for (Eigen::Index q = 0; q < nr; ++q) {
            const auto x = pr[2 * q], y = pr[2 * q + 1];
            h(p, q) = g(u, x) - g(u, y) - g(v, x) + g(v, y);
          }
        }
        tables_[i * a_ + r] = std::move(h);
      }
    }
  }

  /// Id of the unordered pair {u, v} (u != v) inside group i.
  std::uint32_t id(std::size_t i, std::uint32_t u, std::uint32_t v) const noexcept {
    if (u > v) std::swap(u, v);
    const auto n = static_cast<std::uint64_t>(sizes_[i]);
    return static_cast<std::uint32_t>(u * (2 * n - u - 1) / 2 + (v - u - 1));
  }

  /// Bilinear form of two pair vectors given by per-group pair ids and
  /// orientation signs (+1 when the pair is stored as (u, v), u < v).
  double bilinear(const std::uint32_t* left, const double* lsign, const std::uint32_t* right,
                  const double* rsign) const noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < a_; ++i) {
      double row = 0.0;
      for (std::size_t r = 0; r < a_; ++r) row += rsign[r] * tables_[i * a_ + r](left[i], right[r]);
      acc += lsign[i] * row;
    }
    return acc;
  }

  /// Unnormalized kernel (without the 1/2, 1/4, 1/8 factors) on slot-major
  /// pair ids: slot s, group i at ids[s * a + i].
  double raw_kernel(int order, const std::uint32_t* ids, const double* signs) const noexcept {
    const std::uint32_t* p0 = ids;
    const std::uint32_t* p1 = ids + a_;
    const double* s0 = signs;
    const double* s1 = signs + a_;
    switch (order) {
      case 1: return bilinear(p0, s0, p0, s0);
      case 2: {
        const double b = bilinear(p0, s0, p1, s1);
        return b * b;
      }
      default: {
        const std::uint32_t* p2 = ids + 2 * a_;
        const double* s2 = signs + 2 * a_;
        return bilinear(p0, s0, p1, s1) * bilinear(p1, s1, p2, s2) * bilinear(p2, s2, p0, s0);
      }
    }
  }

  /// Order-3 raw kernel summed over the per-group orientations of every
  /// pair, divided by 8^a: only index cycles i -> r -> u -> i survive.
  double raw_kernel3_oriented(const std::uint32_t* ids) const noexcept {
    const std::uint32_t* p0 = ids;
    const std::uint32_t* p1 = ids + a_;
    const std::uint32_t* p2 = ids + 2 * a_;
    double acc = 0.0;
    for (std::size_t i = 0; i < a_; ++i) {
      for (std::size_t r = 0; r < a_; ++r) {
        const double first = tables_[i * a_ + r](p0[i], p1[r]);
        for (std::size_t u = 0; u < a_; ++u) {
          acc += first * tables_[r * a_ + u](p1[r], p2[u]) * tables_[u * a_ + i](p2[u], p0[i]);
        }
      }
    }
    return acc;
  }

 private:
  std::size_t a_;
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<std::uint32_t>> pair_rows_;
  std::vector<Matrix> tables_;
};

double kernel_scale(int order) { return order == 1 ? 0.5 : order == 2 ? 0.25 : 0.125; }

void require_a_sizes(const StudyDesign& design, int order) {
  const std::size_t need = 2 * static_cast<std::size_t>(order);
  for (std::size_t i = 0; i < design.groups(); ++i) {
    if (design.size(i) < need) {
      fail(ErrorKind::invalid_design, "A-family estimator of order " + std::to_string(order) + " needs n_i >= " +
                                          std::to_string(need) + "; group " + std::to_string(i + 1) + " has " +
                                          std::to_string(design.size(i)));
    }
  }
}

void require_b_sizes(const StudyDesign& design, int order) {
  const std::size_t need = 2 * static_cast<std::size_t>(order);
  if (design.min_size() < need) {
    fail(ErrorKind::invalid_design, "B-family estimator of order " + std::to_string(order) + " needs n_min >= " +
                                        std::to_string(need) + "; n_min = " + std::to_string(design.min_size()));
  }
}

void require_cap(std::uint64_t count, std::uint64_t cap, const char* what, const char* alternative) {
  if (count > cap) {
    fail(ErrorKind::enumeration_cap, std::string(what) + " needs " + std::to_string(count) +
                                         " kernel evaluations, above the enumeration cap of " + std::to_string(cap) +
                                         "; use " + alternative + " instead");
  }
}

// Visit every combination of per-group sequences (mixed radix over groups),
// handing the slot-major tuple of local indices to `visit`.
template <class Visit>
void for_each_group_combination(const std::vector<std::vector<std::uint32_t>>& seqs, int order, Visit&& visit) {
  const std::size_t a = seqs.size();
  const std::size_t width = 2 * static_cast<std::size_t>(order);
  std::vector<std::size_t> counts(a), digit(a, 0);
  for (std::size_t i = 0; i < a; ++i) counts[i] = seqs[i].size() / width;
  std::vector<std::uint32_t> local(width * a);
  auto load = [&](std::size_t i) {
    for (std::size_t s = 0; s < width; ++s) local[s * a + i] = seqs[i][digit[i] * width + s];
  };
  for (std::size_t i = 0; i < a; ++i) load(i);
  while (true) {
    visit(local.data());
    std::size_t i = a;
    while (i-- > 0) {
      if (++digit[i] < counts[i]) {
        load(i);
        break;
      }
      digit[i] = 0;
      load(i);
    }
    if (i == static_cast<std::size_t>(-1)) return;
  }
}

// Sum of raw kernels (no 1/2^order factor) over every A-family combination.
// Order 3 sums over unordered pairs with the orientation average, so the
// caller multiplies by 8^a.
double a_raw_sum(const KernelEngine& engine, int order) {
  const StudyDesign& design = engine.design();
  const std::size_t a = design.groups();
  std::vector<std::vector<std::uint32_t>> seqs;
  for (std::size_t i = 0; i < a; ++i) seqs.push_back(pair_sequences(design.size(i), order));

  double total = 0.0;
  if (PairTables::affordable(design)) {
    const PairTables tables(engine);
    std::vector<std::uint32_t> ids(static_cast<std::size_t>(order) * a);
    const std::vector<double> signs(ids.size(), 1.0);
    for_each_group_combination(seqs, order, [&](const std::uint32_t* local) {
      for (int s = 0; s < order; ++s) {
        for (std::size_t i = 0; i < a; ++i) {
          ids[s * a + i] = tables.id(i, local[(2 * s) * a + i], local[(2 * s + 1) * a + i]);
        }
      }
      total += order == 3 ? tables.raw_kernel3_oriented(ids.data()) : tables.raw_kernel(order, ids.data(), signs.data());
    });
  } else {
    std::vector<std::uint32_t> rows(2 * static_cast<std::size_t>(order) * a);
    const double unscale = 1.0 / kernel_scale(order);
    for_each_group_combination(seqs, order, [&](const std::uint32_t* local) {
      for (std::size_t s = 0; s < rows.size() / a; ++s) {
        for (std::size_t i = 0; i < a; ++i) {
          rows[s * a + i] = static_cast<std::uint32_t>(design.row_offset(i)) + local[s * a + i];
        }
      }
      total += unscale * (order == 3 ? engine.kernel3_oriented(rows.data()) : engine.kernel(order, rows.data()));
    });
  }
  return total;
}

double falling_factorial(std::size_t n, std::size_t k) {
  double out = 1.0;
  for (std::size_t s = 0; s < k; ++s) out *= static_cast<double>(n - s);
  return out;
}

// m distinct uniform indices from [0, n), in draw order.
void draw_distinct(RngStream& rng, std::size_t n, std::size_t m, std::uint32_t* out) {
  std::array<std::uint32_t, 6> sorted{};
  for (std::size_t t = 0; t < m; ++t) {
    auto value = static_cast<std::uint32_t>(rng.below(n - t));
    // Map to the value-th unused index.
    std::size_t pos = 0;
    while (pos < t && sorted[pos] <= value) {
      ++value;
      ++pos;
    }
    for (std::size_t s = t; s > pos; --s) sorted[s] = sorted[s - 1];
    sorted[pos] = value;
    out[t] = value;
  }
}

constexpr std::uint64_t kStreamAStar = 0xA5;
constexpr std::uint64_t kStreamBStar = 0xB5;
constexpr std::uint64_t kStreamPerm = 0x9E;

}  // namespace

double kernel_value(const KernelEngine& engine, int order, const IndexTuple& tuple) {
  require_order(order);
  const StudyDesign& design = engine.design();
  const std::size_t a = design.groups();
  const std::size_t m = 2 * static_cast<std::size_t>(order);
  if (tuple.groups.size() != a) fail(ErrorKind::structural, "index tuple has the wrong number of groups");
  std::vector<std::uint32_t> rows(m * a);
  for (std::size_t i = 0; i < a; ++i) {
    const auto& idx = tuple.groups[i];
    if (idx.size() < m) fail(ErrorKind::invalid_tuple, "index tuple too short for the kernel order");
    for (std::size_t s = 0; s < m; ++s) {
      if (idx[s] >= design.size(i)) fail(ErrorKind::invalid_tuple, "index out of range in index tuple");
      for (std::size_t r = 0; r < s; ++r) {
        if (idx[r] == idx[s]) {
          fail(ErrorKind::invalid_tuple, "index " + std::to_string(idx[s]) + " repeated in group " +
                                             std::to_string(i + 1));
        }
      }
      rows[s * a + i] = static_cast<std::uint32_t>(design.row_offset(i) + idx[s]);
    }
  }
  return engine.kernel(order, rows.data());
}

std::uint64_t a_combinations(const StudyDesign& design, int order) {
  std::uint64_t count = 1;
  for (std::size_t n : design.sizes()) count = saturating_mul(count, sequence_count(n, order));
  return count;
}

std::uint64_t b_combinations(std::size_t n_min, int order) { return sequence_count(n_min, order); }

double a_full(const KernelEngine& engine, int order, std::uint64_t cap) {
  require_order(order);
  const StudyDesign& design = engine.design();
  require_a_sizes(design, order);
  require_cap(a_combinations(design, order), cap, "full A estimator", "the subsampled A* estimator");

  const double sum = a_raw_sum(engine, order);
  double normalizer = 1.0;
  switch (order) {
    case 1:  // 2 prod C(n_i, 2)
      normalizer = 2.0;
      for (std::size_t n : design.sizes()) normalizer *= static_cast<double>(choose2(n));
      return sum / normalizer;
    case 2:  // 4 prod 6 C(n_i, 4)
      normalizer = 4.0;
      for (std::size_t n : design.sizes()) normalizer *= falling_factorial(n, 4) / 4.0;
      return sum / normalizer;
    default: {  // 8 prod n_i!/(n_i-6)!; each pair sequence stands for 8 orientations per group
      normalizer = 8.0;
      double multiplicity = 1.0;
      for (std::size_t n : design.sizes()) {
        normalizer *= falling_factorial(n, 6);
        multiplicity *= 8.0;
      }
      return multiplicity * sum / normalizer;
    }
  }
}

double a1_full(const GroupedSample& sample, const BlockMatrix& t, std::uint64_t cap) {
  return a_full(KernelEngine(sample, t), 1, cap);
}
double a2_full(const GroupedSample& sample, const BlockMatrix& t, std::uint64_t cap) {
  return a_full(KernelEngine(sample, t), 2, cap);
}
double a3_full(const GroupedSample& sample, const BlockMatrix& t, std::uint64_t cap) {
  return a_full(KernelEngine(sample, t), 3, cap);
}

SubsampleResult a_star(const KernelEngine& engine, int order, std::uint64_t upsilon, const IndexSource& source,
                       std::uint64_t cap) {
  require_order(order);
  const StudyDesign& design = engine.design();
  require_a_sizes(design, order);
  const std::size_t a = design.groups();
  const std::size_t m = 2 * static_cast<std::size_t>(order);
  std::vector<std::uint32_t> rows(m * a);

  SubsampleResult out;
  double total = 0.0;
  if (source.enumerating()) {
    require_cap(a_combinations(design, order), cap, "enumerated A* estimator", "uniform index draws");
    std::vector<std::vector<std::uint32_t>> seqs;
    for (std::size_t i = 0; i < a; ++i) seqs.push_back(pair_sequences(design.size(i), order));
    for_each_group_combination(seqs, order, [&](const std::uint32_t* local) {
      for (std::size_t s = 0; s < m; ++s) {
        for (std::size_t i = 0; i < a; ++i) {
          rows[s * a + i] = static_cast<std::uint32_t>(design.row_offset(i)) + local[s * a + i];
        }
      }
      total += order == 3 ? engine.kernel3_oriented(rows.data()) : engine.kernel(order, rows.data());
      ++out.kernels;
    });
  } else {
    if (upsilon == 0) fail(ErrorKind::domain, "A* needs Upsilon >= 1");
    RngStream rng(derive_seed(source.seed(), kStreamAStar, static_cast<std::uint64_t>(order)), 0, 0);
    std::array<std::uint32_t, 6> draw{};
    for (std::uint64_t v = 0; v < upsilon; ++v) {
      for (std::size_t i = 0; i < a; ++i) {
        draw_distinct(rng, design.size(i), m, draw.data());
        // Orders 1 and 2 sum over pairs stored as u < v.
        if (order < 3) {
          for (std::size_t s = 0; s < m; s += 2) {
            if (draw[s] > draw[s + 1]) std::swap(draw[s], draw[s + 1]);
          }
        }
        for (std::size_t s = 0; s < m; ++s) rows[s * a + i] = static_cast<std::uint32_t>(design.row_offset(i)) + draw[s];
      }
      total += engine.kernel(order, rows.data());
    }
    out.kernels = upsilon;
  }
  out.value = total / static_cast<double>(out.kernels);
  return out;
}

double a_star(const GroupedSample& sample, const BlockMatrix& t, int order, std::uint64_t upsilon,
              const IndexSource& source) {
  return a_star(KernelEngine(sample, t), order, upsilon, source).value;
}

// ---------------------------------------------------------------------------
// Permutation mixing

PermutationSet::PermutationSet(std::vector<std::size_t> sizes, std::vector<std::vector<std::uint32_t>> perms)
    : sizes_(std::move(sizes)), perms_(std::move(perms)) {
  if (sizes_.empty() || perms_.size() % sizes_.size() != 0) {
    fail(ErrorKind::structural, "permutation set: permutation count is not a multiple of the group count");
  }
  repetitions_ = perms_.size() / sizes_.size();
  for (std::size_t k = 0; k < perms_.size(); ++k) {
    const std::size_t n = sizes_[k % sizes_.size()];
    const auto& p = perms_[k];
    if (p.size() != n) fail(ErrorKind::structural, "permutation set: permutation has the wrong length");
    std::vector<char> seen(n, 0);
    for (std::uint32_t v : p) {
      if (v >= n || seen[v]) fail(ErrorKind::structural, "permutation set: entry is not a bijection");
      seen[v] = 1;
    }
  }
}

PermutationSet PermutationSet::identity(const StudyDesign& design, std::size_t repetitions) {
  std::vector<std::vector<std::uint32_t>> perms;
  for (std::size_t j = 0; j < repetitions; ++j) {
    for (std::size_t n : design.sizes()) {
      std::vector<std::uint32_t> p(n);
      std::iota(p.begin(), p.end(), 0u);
      perms.push_back(std::move(p));
    }
  }
  return PermutationSet(design.sizes(), std::move(perms));
}

PermutationSet PermutationSet::random(const StudyDesign& design, std::size_t repetitions, std::uint64_t seed) {
  std::vector<std::vector<std::uint32_t>> perms;
  perms.reserve(repetitions * design.groups());
  const std::uint64_t key = derive_seed(seed, kStreamPerm);
  for (std::size_t j = 0; j < repetitions; ++j) {
    for (std::size_t i = 0; i < design.groups(); ++i) {
      const std::size_t n = design.size(i);
      std::vector<std::uint32_t> p(n);
      std::iota(p.begin(), p.end(), 0u);
      RngStream rng(key, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
      for (std::size_t s = n - 1; s > 0; --s) std::swap(p[s], p[rng.below(s + 1)]);
      perms.push_back(std::move(p));
    }
  }
  return PermutationSet(design.sizes(), std::move(perms));
}

namespace {

void require_perms(const StudyDesign& design, const PermutationSet& perms, std::size_t needed) {
  if (perms.sizes() != design.sizes()) fail(ErrorKind::structural, "permutation set does not match the design");
  if (needed == 0 || needed > perms.repetitions()) {
    fail(ErrorKind::domain, "requested " + std::to_string(needed) + " permutations, set holds " +
                                std::to_string(perms.repetitions()));
  }
}

// Raw (unscaled) kernel sum over all shared sequences for permutation j.
double b_raw_sum_for_permutation(const PairTables& tables, std::size_t a, int order, const PermutationSet& perms,
                                 std::size_t j, const std::vector<std::uint32_t>& seqs) {
  const std::size_t width = 2 * static_cast<std::size_t>(order);
  std::vector<const std::vector<std::uint32_t>*> pi(a);
  for (std::size_t i = 0; i < a; ++i) pi[i] = &perms.permutation(j, i);
  std::vector<std::uint32_t> ids(static_cast<std::size_t>(order) * a);
  std::vector<double> signs(ids.size());
  double total = 0.0;
  for (std::size_t base = 0; base < seqs.size(); base += width) {
    for (int s = 0; s < order; ++s) {
      const std::uint32_t u = seqs[base + 2 * s];
      const std::uint32_t v = seqs[base + 2 * s + 1];
      for (std::size_t i = 0; i < a; ++i) {
        const std::uint32_t pu = (*pi[i])[u], pv = (*pi[i])[v];
        ids[s * a + i] = tables.id(i, pu, pv);
        signs[s * a + i] = pu < pv ? 1.0 : -1.0;
      }
    }
    total += tables.raw_kernel(order, ids.data(), signs.data());
  }
  return total;
}

double b_raw_sum_direct(const KernelEngine& engine, int order, const PermutationSet& perms, std::size_t j,
                        const std::vector<std::uint32_t>& seqs) {
  const StudyDesign& design = engine.design();
  const std::size_t a = design.groups();
  const std::size_t width = 2 * static_cast<std::size_t>(order);
  std::vector<std::uint32_t> rows(width * a);
  double total = 0.0;
  for (std::size_t base = 0; base < seqs.size(); base += width) {
    for (std::size_t s = 0; s < width; ++s) {
      for (std::size_t i = 0; i < a; ++i) {
        rows[s * a + i] = static_cast<std::uint32_t>(design.row_offset(i)) + perms.permutation(j, i)[seqs[base + s]];
      }
    }
    total += engine.kernel(order, rows.data());
  }
  return total / kernel_scale(order);
}

}  // namespace

double b_value(const KernelEngine& engine, int order, const PermutationSet& perms, std::size_t repetitions,
               std::uint64_t cap) {
  require_order(order);
  const StudyDesign& design = engine.design();
  require_b_sizes(design, order);
  require_perms(design, perms, repetitions);
  const std::size_t n_min = design.min_size();
  require_cap(saturating_mul(repetitions, sequence_count(n_min, order)), cap, "full B estimator",
              "the subsampled B* estimator");

  const std::vector<std::uint32_t> seqs = pair_sequences(n_min, order);
  double sum = 0.0;
  if (PairTables::affordable(design)) {
    const PairTables tables(engine);
    for (std::size_t j = 0; j < repetitions; ++j) {
      sum += b_raw_sum_for_permutation(tables, design.groups(), order, perms, j, seqs);
    }
  } else {
    for (std::size_t j = 0; j < repetitions; ++j) sum += b_raw_sum_direct(engine, order, perms, j, seqs);
  }
  const auto reps = static_cast<double>(repetitions);
  switch (order) {
    case 1: return sum / (2.0 * reps * static_cast<double>(choose2(n_min)));
    case 2: return sum / (4.0 * reps * falling_factorial(n_min, 4) / 4.0);
    default: return 8.0 * sum / (8.0 * reps * falling_factorial(n_min, 6));
  }
}

TraceEstimates b_estimators(const KernelEngine& engine, const PermutationSet& perms, int max_order,
                            std::array<std::uint64_t, 3> repetitions, std::uint64_t cap) {
  if (max_order < 1 || max_order > 3) fail(ErrorKind::domain, "max_order must be 1, 2 or 3");
  TraceEstimates out;
  out.family = Family::B;
  for (int k = 1; k <= max_order; ++k) {
    std::uint64_t reps = repetitions[k - 1] == 0 ? perms.repetitions() : repetitions[k - 1];
    const double v = b_value(engine, k, perms, reps, cap);
    out.upsilon[k - 1] = reps;
    if (k == 1) out.t1 = v;
    else if (k == 2) out.t2 = v;
    else out.t3 = v;
  }
  return out;
}

TraceEstimates b_estimators(const GroupedSample& sample, const BlockMatrix& t, std::uint64_t upsilon,
                            const PermutationSet& perms) {
  return b_estimators(KernelEngine(sample, t), perms, 3, {upsilon, upsilon, upsilon});
}

double b_star_value(const KernelEngine& engine, int order, const PermutationSet& perms, std::size_t upsilon1,
                    std::uint64_t upsilon2, const IndexSource& source, std::uint64_t cap) {
  require_order(order);
  const StudyDesign& design = engine.design();
  require_b_sizes(design, order);
  require_perms(design, perms, upsilon1);
  const std::size_t a = design.groups();
  const std::size_t n_min = design.min_size();
  const std::size_t m = 2 * static_cast<std::size_t>(order);
  std::vector<std::uint32_t> rows(m * a);

  double total = 0.0;
  std::uint64_t kernels = 0;
  auto evaluate = [&](std::size_t j, const std::uint32_t* shared) {
    for (std::size_t s = 0; s < m; ++s) {
      for (std::size_t i = 0; i < a; ++i) {
        rows[s * a + i] = static_cast<std::uint32_t>(design.row_offset(i)) + perms.permutation(j, i)[shared[s]];
      }
    }
    total += engine.kernel(order, rows.data());
    ++kernels;
  };

  if (source.enumerating()) {
    require_cap(saturating_mul(upsilon1, sequence_count(n_min, order)), cap, "enumerated B* estimator",
                "uniform index draws");
    const std::vector<std::uint32_t> seqs = pair_sequences(n_min, order);
    for (std::size_t j = 0; j < upsilon1; ++j) {
      for (std::size_t base = 0; base < seqs.size(); base += m) evaluate(j, seqs.data() + base);
    }
  } else {
    if (upsilon2 == 0) fail(ErrorKind::domain, "B* needs Upsilon_2 >= 1");
    RngStream rng(derive_seed(source.seed(), kStreamBStar, static_cast<std::uint64_t>(order)), 0, 0);
    std::array<std::uint32_t, 6> shared{};
    for (std::size_t j = 0; j < upsilon1; ++j) {
      for (std::uint64_t v = 0; v < upsilon2; ++v) {
        draw_distinct(rng, n_min, m, shared.data());
        evaluate(j, shared.data());
      }
    }
  }
  return total / static_cast<double>(kernels);
}

BStarPolicy default_b_star_policy(const StudyDesign& design) {
  const auto n = static_cast<std::uint64_t>(design.total_size());
  return BStarPolicy{{5 * n, 10 * n, 100 * n}, 10};
}

TraceEstimates b_star(const KernelEngine& engine, const BStarPolicy& policy, const PermutationSet& perms,
                      const IndexSource& source, int max_order) {
  if (max_order < 1 || max_order > 3) fail(ErrorKind::domain, "max_order must be 1, 2 or 3");
  TraceEstimates out;
  out.family = Family::BStar;
  out.upsilon2 = source.enumerating() ? 0 : policy.upsilon2;
  for (int k = 1; k <= max_order; ++k) {
    const double v = b_star_value(engine, k, perms, policy.upsilon1[k - 1], policy.upsilon2, source);
    out.upsilon[k - 1] = policy.upsilon1[k - 1];
    if (k == 1) out.t1 = v;
    else if (k == 2) out.t2 = v;
    else out.t3 = v;
  }
  return out;
}

TraceEstimates b_star(const GroupedSample& sample, const BlockMatrix& t, const BStarPolicy& policy,
                      const PermutationSet& perms, const IndexSource& source) {
  return b_star(KernelEngine(sample, t), policy, perms, source);
}

double fhat_pearson(const TraceEstimates& est, std::vector<std::string>* warnings) {
  if (!est.t3.has_value() || *est.t3 == 0.0) {
    fail(ErrorKind::degenerate, "Pearson degrees of freedom undefined: t3 estimate is missing or zero");
  }
  const double t3 = *est.t3;
  const double raw = est.t2 * est.t2 * est.t2 / (t3 * t3);
  if (!std::isfinite(raw)) fail(ErrorKind::degenerate, "Pearson degrees of freedom are not finite");
  if (raw < 1.0) {
    if (warnings) {
      warnings->push_back("estimated Pearson degrees of freedom " + std::to_string(raw) + " below 1; floored at 1");
    }
    return 1.0;
  }
  return raw;
}

}  // namespace splitplot
