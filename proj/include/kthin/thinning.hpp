#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kthin/kernels.hpp"
#include "kthin/points.hpp"

namespace kthin {

// How a coreset was produced.
enum class Provenance { Split, Baseline, Swapped };

// A coreset is a list of 0-based row indices into the input point set,
// in selection order.  Duplicate indices are permitted.
struct Coreset {
    std::vector<Eigen::Index> indices;
    Provenance provenance = Provenance::Split;
    // 1-based candidate number for Split provenance, -1 otherwise.
    int split_index = -1;
};

// Per-round failure probabilities delta_i driving the halving thresholds.
enum class ScheduleKind {
    FixedN,    // delta / (2 (n - n/2^m)), total budget split over all rounds
    Anytime,   // delta / (4 m (i+1) ln^2(i+1)), summable without knowing n
    Constant,  // a fixed per-round value
};

struct DeltaSchedule {
    ScheduleKind kind = ScheduleKind::FixedN;
    double delta = 0.5;   // total failure budget (FixedN / Anytime)
    Eigen::Index n = 0;   // FixedN: total input size
    int m = 1;            // FixedN / Anytime: number of halving levels
    double value = 0.0;   // Constant: the per-round delta

    static DeltaSchedule fixed_n(double delta, Eigen::Index n, int m);
    static DeltaSchedule anytime(double delta, int m);
    static DeltaSchedule constant(double value);
};

// delta_i for round i >= 1.  FixedN additionally requires i <= floor(n/2).
double delta_at(const DeltaSchedule& schedule, Eigen::Index i);

// Threshold a and updated sub-Gaussian parameter for one halving decision
// with pair norm b_sq = ||f||^2 and failure probability delta:
//   a = max(sqrt(b_sq * sigma_sq * 2 * log(num/delta)), b_sq).
// b_sq == 0 yields a == 0 with sigma_sq unchanged; the caller must then use
// a fair coin and skip the threshold test.
struct SwapParams {
    double a = 0.0;
    double sigma_sq = 0.0;
};
SwapParams get_swap_params(double sigma_sq, double b_sq, double delta,
                           double log_numerator = 4.0);

// Which failure-probability weighting the split rounds use.  Main keeps
// delta_i as scheduled with log numerator 4; Journal reweights level j by
// 2^(j-1)/m and uses log numerator 2.  Both produce identical index streams
// for m = 1 with matching per-round deltas.
enum class ThresholdVariant { Main, Journal };

struct ThinningOptions {
    ThresholdVariant variant = ThresholdVariant::Main;
    // Reject inputs whose size is not divisible by 2^m instead of dropping
    // the trailing remainder from the halving stream.
    bool strict = false;
    // Pairwise kernel matrices are cached when they fit in this budget;
    // otherwise entries are recomputed on demand.  Results are identical.
    std::size_t gram_budget_bytes = std::size_t{1} << 30;
};

// Diagnostics for one signed halving walk.
struct WalkStats {
    double sigma_sq = 0.0;   // running sub-Gaussian parameter
    double max_b_sq = 0.0;   // largest pair norm ||f||^2 seen
    double max_c_sq = 0.0;   // largest 2*log(num/delta_i) seen
    Eigen::Index rounds = 0; // halving decisions taken
};

// Full state of a split run: every intermediate coreset and the per-walk
// diagnostics.  coresets[j][l] holds S(j, l+1) for levels j = 0..m; walks
// are indexed [j-1][l-1] for levels j = 1..m.
struct SplitState {
    int m = 0;
    Eigen::Index points_consumed = 0;
    Eigen::Index dropped_tail = 0;  // trailing points excluded from halving
    std::vector<std::vector<std::vector<Eigen::Index>>> coresets;
    std::vector<std::vector<WalkStats>> walks;
    std::uint64_t kernel_evals = 0;
};

struct SplitResult {
    std::vector<Coreset> coresets;  // the 2^m level-m candidates
    SplitState state;
};

// Recursively halve the input into 2^m candidate coresets of size
// floor(n / 2^m) each, using the square-root kernel krt.  Consumes exactly
// one uniform variate per halving decision.  Output indices are invariant
// to the kernel's scale factor.
SplitResult kt_split(const KernelSpec& krt, const PointSet& points, int m,
                     const DeltaSchedule& schedule, std::uint64_t seed,
                     const ThinningOptions& opts = {});

// Pick the best of {baseline} + candidates by MMD to the full input under
// kernel k, then greedily swap each position against all input points.
// Ties prefer the baseline, then the lowest candidate number; during
// refinement ties keep the incumbent.  The result is never worse than the
// baseline in exact MMD.  Output is invariant to the kernel's scale factor.
Coreset kt_swap(const KernelSpec& k, const PointSet& points,
                const std::vector<Coreset>& candidates, const Coreset& baseline,
                const ThinningOptions& opts = {});

struct ThinningResult {
    Coreset coreset;
    std::uint64_t kernel_evals = 0;
    Eigen::Index dropped_tail = 0;
    SplitState split_state;  // retained for diagnostics
};

// Full pipeline: kt_split under krt, then kt_swap under k against a
// standard-thinning baseline.  Total kernel evaluations are O(n^2).
ThinningResult kernel_thinning(const KernelSpec& k, const KernelSpec& krt,
                               const PointSet& points, int m,
                               const DeltaSchedule& schedule, std::uint64_t seed,
                               const ThinningOptions& opts = {});

// Single-level halving with explicit failure: if any round's signed sum
// exceeds its threshold the result is flagged failed and the halves stop at
// the pre-failure assignments; subsequent rounds keep balancing through a
// correction term so the variate stream is still consumed deterministically.
struct HalvingResult {
    bool failed = false;
    Eigen::Index failure_round = 0;  // 1-based round of first failure
    Coreset first;                   // S1 (the returned half on success)
    Coreset second;                  // S2
};

// deltas must hold one entry per round, i.e. n/2 values for even n.
HalvingResult kernel_halving(const KernelSpec& k, const PointSet& points,
                             const std::vector<double>& deltas, std::uint64_t seed,
                             const ThinningOptions& opts = {});

// Every out_size-th point: indices {t-1, 2t-1, ...} with t = floor(n/out_size),
// last index forced to n-1.  strict rejects out_size that does not divide n.
Coreset standard_thin(Eigen::Index n, Eigen::Index out_size, bool strict = false);

// True when every walk satisfies
//   sigma^2 <= (max_b_sq / 4) * (c* + 1/c*)^2,  c* = sqrt(max_c_sq),
// up to floating-point slack.  kt_split checks this after every run.
bool split_sigma_bound_ok(const SplitState& state);

}  // namespace kthin
