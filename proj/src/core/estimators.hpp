// SPDX-License-Identifier: Apache-2.0
//
// Trace estimators for tr(T V_N), tr((T V_N)^2) and tr((T V_N)^3).
//
// Every estimator averages a kernel over "pair vectors"
//   Z_(l1,l2) = ( sqrt(N/n_i) (X_{i,l1_i} - X_{i,l2_i}) )_i
// of order k = 1, 2, 3:
//   k = 1:  Z_12' T Z_12 / 2
//   k = 2:  (Z_12' T Z_34)^2 / 4
//   k = 3:  Z_12' T Z_34 * Z_34' T Z_56 * Z_56' T Z_12 / 8
// which needs 2k distinct observations per group. The A family draws those
// independently in every group; the B family uses one index set in
// {1..n_min} shared by all groups and maps it through per-group random
// permutations.
//
// Each kernel is invariant under swapping the two members of a pair, so the
// exhaustive versions sum over ordered sequences of k disjoint *unordered*
// pairs; this visits every admissible index tuple with the multiplicity the
// textbook normalizers assume (ordered 6-tuples collapse 8:1 per index set).
#pragma once

#include "core/hypothesis.hpp"
#include "core/model.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace splitplot {

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

/// Inner products of scaled, group-centred observations under T:
/// G(u, v) = sqrt(N/n_i) sqrt(N/n_r) (x_u - xbar_i)' T_ir (x_v - xbar_r)
/// for u in group i and v in group r, rows stacked in group order.
class KernelEngine {
 public:
  KernelEngine(const GroupedSample& sample, const BlockMatrix& t);

  const StudyDesign& design() const noexcept { return design_; }
  const Matrix& gram() const noexcept { return gram_; }

  /// Z_(p1,p2)' T Z_(q1,q2); arguments hold one global row index per group.
  double bilinear(const std::uint32_t* p1, const std::uint32_t* p2, const std::uint32_t* q1,
                  const std::uint32_t* q2) const noexcept;

  /// Kernel of the given order on a slot-major tuple: slot s, group i at
  /// idx[s * groups + i]; 2 * order slots.
  double kernel(int order, const std::uint32_t* idx) const noexcept;

  /// Order-3 kernel averaged over the 8^a sign patterns obtained by swapping
  /// the two indices of any pair inside any group.
  double kernel3_oriented(const std::uint32_t* idx) const noexcept;

 private:
  StudyDesign design_;
  Matrix gram_;
};

/// Per-group lists of indices used to form pair vectors.
struct IndexTuple {
  std::vector<std::vector<std::size_t>> groups;  // groups[i] = m distinct indices in [0, n_i)
};

/// Z_(first, second): first[i], second[i] are 0-based indices into group i.
Vector z_vector(const GroupedSample& sample, const std::vector<std::size_t>& first,
                const std::vector<std::size_t>& second);

/// Kernel of the given order evaluated on an explicit index tuple
/// (m = 2 * order indices per group).
double kernel_value(const KernelEngine& engine, int order, const IndexTuple& tuple);

/// Source of index tuples for the subsampling estimators: either every
/// admissible combination once, or independent uniform draws without index
/// reuse inside a group.
class IndexSource {
 public:
  static IndexSource enumerate() { return IndexSource(true, 0); }
  static IndexSource uniform(std::uint64_t seed) { return IndexSource(false, seed); }

  bool enumerating() const noexcept { return enumerate_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  IndexSource(bool enumerate, std::uint64_t seed) : enumerate_(enumerate), seed_(seed) {}
  bool enumerate_;
  std::uint64_t seed_;
};

/// pi_{j,i} for j = 0..repetitions-1 and every group i.
class PermutationSet {
 public:
  static PermutationSet identity(const StudyDesign& design, std::size_t repetitions);
  static PermutationSet random(const StudyDesign& design, std::size_t repetitions, std::uint64_t seed);
  PermutationSet(std::vector<std::size_t> sizes, std::vector<std::vector<std::uint32_t>> perms);

  std::size_t repetitions() const noexcept { return repetitions_; }
  std::size_t groups() const noexcept { return sizes_.size(); }
  const std::vector<std::uint32_t>& permutation(std::size_t j, std::size_t i) const {
    return perms_.at(j * sizes_.size() + i);
  }
  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }

 private:
  std::vector<std::size_t> sizes_;
  std::size_t repetitions_ = 0;
  std::vector<std::vector<std::uint32_t>> perms_;
};

enum class Family { A, AStar, B, BStar, Exact };
const char* to_string(Family family) noexcept;

struct TraceEstimates {
  Family family = Family::Exact;
  double t1 = 0.0;
  double t2 = 0.0;
  std::optional<double> t3;
  /// Kernel evaluations per trace (A, A*), permutations per trace (B, B*).
  std::array<std::uint64_t, 3> upsilon{};
  /// Index tuples per permutation (B*).
  std::uint64_t upsilon2 = 0;
};

/// Exhaustive U-statistics. Requires n_i >= 2, 4, 6 for orders 1, 2, 3.
double a_full(const KernelEngine& engine, int order, std::uint64_t cap = kDefaultEnumerationCap);
double a1_full(const GroupedSample& sample, const BlockMatrix& t, std::uint64_t cap = kDefaultEnumerationCap);
double a2_full(const GroupedSample& sample, const BlockMatrix& t, std::uint64_t cap = kDefaultEnumerationCap);
double a3_full(const GroupedSample& sample, const BlockMatrix& t, std::uint64_t cap = kDefaultEnumerationCap);

/// Number of index combinations the exhaustive A estimator visits.
std::uint64_t a_combinations(const StudyDesign& design, int order);
/// Number of shared index sequences per permutation for the B estimator.
std::uint64_t b_combinations(std::size_t n_min, int order);

struct SubsampleResult {
  double value = 0.0;
  std::uint64_t kernels = 0;  // Upsilon actually used
};

/// Kernel average over `upsilon` drawn tuples, or over all tuples when the
/// source enumerates (upsilon is then ignored).
SubsampleResult a_star(const KernelEngine& engine, int order, std::uint64_t upsilon, const IndexSource& source,
                       std::uint64_t cap = kDefaultEnumerationCap);
double a_star(const GroupedSample& sample, const BlockMatrix& t, int order, std::uint64_t upsilon,
              const IndexSource& source);

/// B_k for k = 1..max_order averaged over the first `repetitions[k-1]`
/// permutations of `perms` (all of them when zero).
TraceEstimates b_estimators(const KernelEngine& engine, const PermutationSet& perms, int max_order = 3,
                            std::array<std::uint64_t, 3> repetitions = {},
                            std::uint64_t cap = kDefaultEnumerationCap);
TraceEstimates b_estimators(const GroupedSample& sample, const BlockMatrix& t, std::uint64_t upsilon,
                            const PermutationSet& perms);

/// Single-order B_k over the first `repetitions` permutations.
double b_value(const KernelEngine& engine, int order, const PermutationSet& perms, std::size_t repetitions,
               std::uint64_t cap = kDefaultEnumerationCap);

/// B*_k: Upsilon_1 permutations times Upsilon_2 shared tuples each.
double b_star_value(const KernelEngine& engine, int order, const PermutationSet& perms, std::size_t upsilon1,
                    std::uint64_t upsilon2, const IndexSource& source, std::uint64_t cap = kDefaultEnumerationCap);

struct BStarPolicy {
  std::array<std::uint64_t, 3> upsilon1{};  // permutations for t1, t2, t3
  std::uint64_t upsilon2 = 10;
};

/// Default Upsilon policy: Upsilon_2 = 10, Upsilon_1 = 5N, 10N, 100N.
BStarPolicy default_b_star_policy(const StudyDesign& design);

TraceEstimates b_star(const KernelEngine& engine, const BStarPolicy& policy, const PermutationSet& perms,
                      const IndexSource& source, int max_order = 3);
TraceEstimates b_star(const GroupedSample& sample, const BlockMatrix& t, const BStarPolicy& policy,
                      const PermutationSet& perms, const IndexSource& source);

/// f_hat = t2^3 / t3^2, floored at 1 (a warning is appended when the raw
/// ratio is below 1). Throws ErrorKind::degenerate when t3 is absent or 0.
double fhat_pearson(const TraceEstimates& est, std::vector<std::string>* warnings = nullptr);

}  // namespace splitplot
