#pragma once

#include <cstddef>
#include <vector>

#include "kthin/kernels.hpp"
#include "kthin/pair_kernel.hpp"
#include "kthin/points.hpp"
#include "kthin/targets.hpp"
#include "kthin/thinning.hpp"

namespace kthin {

// Squared empirical MMD between two point sets under kernel k:
//   (1/n^2) sum k(x,x') + (1/m^2) sum k(y,y') - (2/nm) sum k(x,y),
// clamped at zero.  Identical inputs give exactly zero.
double mmd_sq_empirical(const KernelSpec& k, const PointSet& X, const PointSet& Y);

// Reusable state for measuring coresets of one fixed input set against that
// input: per-point row sums g, the total sum T, and for the active coreset
// the self sum and per-point coreset sums h, maintained incrementally under
// single-position swaps.  The input must outlive the workspace.
class MmdWorkspace {
  public:
    MmdWorkspace(const KernelSpec& k, const PointSet& pts,
                 std::size_t gram_budget_bytes = std::size_t{1} << 30);

    MmdWorkspace(const MmdWorkspace&) = delete;
    MmdWorkspace& operator=(const MmdWorkspace&) = delete;

    Eigen::Index input_size() const { return n_; }
    double total_sum() const { return total_; }
    double row_sum(Eigen::Index z) const { return g_[static_cast<std::size_t>(z)]; }

    // Fresh O(s^2) evaluation of a coreset's squared MMD to the input.
    double mmd_sq_of(const std::vector<Eigen::Index>& coreset) const;

    void set_coreset(const std::vector<Eigen::Index>& coreset);
    const std::vector<Eigen::Index>& coreset() const { return coreset_; }
    bool has_coreset() const { return !coreset_.empty(); }

    // Squared MMD of the active coreset from the cached sums.
    double mmd_sq() const;

    // Change in squared MMD if coreset[position] were replaced by input
    // point z; O(1) given the cached sums.
    double swap_delta_at(Eigen::Index position, Eigen::Index z) const;

    // Commit that replacement, updating the cached sums in O(n).
    void apply_swap_at(Eigen::Index position, Eigen::Index z);

    // Recompute the active coreset's sums from scratch and compare with the
    // incremental state; true when they agree within rel_tol.
    bool coherent(double rel_tol = 1e-9) const;

  private:
    void require_coreset() const;

    KernelEvaluator ev_;
    const PointSet& pts_;
    Eigen::Index n_ = 0;  // initialized by a check that also validates dims
    PairKernel kv_;
    std::vector<double> g_, diag_;
    double total_ = 0.0;

    std::vector<Eigen::Index> coreset_;
    std::vector<double> h_;
    double self_ = 0.0;   // sum over coreset pairs
    double cross_ = 0.0;  // sum of g over the coreset
};

// MMD (not squared) of a coreset to the workspace's input; n must equal the
// workspace's input size.
double mmd_to_input(const MmdWorkspace& ws, Eigen::Index n, const Coreset& coreset);

// Free-function forms of the swap operations, re-syncing the workspace when
// the passed coreset is not the active one.
double swap_delta(MmdWorkspace& ws, const Coreset& coreset, Eigen::Index position,
                  Eigen::Index z);
void apply_swap(MmdWorkspace& ws, Coreset& coreset, Eigen::Index position, Eigen::Index z);

// Closed-form mean embedding int k(x, z) dP(z) for a Gaussian kernel against
// the synthetic targets; throws std::domain_error for other kernel families.
double mean_embedding(const KernelSpec& k, const TargetSpec& target, const double* x);

// Closed-form double integral int int k(z, z') dP(z) dP(z').
double target_double_integral(const KernelSpec& k, const TargetSpec& target);

// Squared MMD between the target distribution and the empirical measure on S:
//   PPk - (2/s) sum_w Pk(w) + (1/s^2) sum k(w, w'), clamped at zero.
double mmd_sq_to_target(const KernelSpec& k, const TargetSpec& target, const PointSet& S);

}  // namespace kthin
