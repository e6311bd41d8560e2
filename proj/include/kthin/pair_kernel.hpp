#pragma once

#include <cstddef>
#include <vector>

#include "kthin/kernels.hpp"
#include "kthin/points.hpp"

namespace kthin {

// Pairwise kernel access over a fixed point set.  When the full n x n matrix
// fits in the byte budget it is computed once (upper triangle, mirrored;
// evaluation is exactly symmetric) and lookups are reads; otherwise every
// lookup re-evaluates the kernel.  Both paths return bitwise-identical values.
class PairKernel {
  public:
    PairKernel(const KernelEvaluator& ev, const PointSet& pts, std::size_t gram_budget_bytes)
        : ev_(ev), pts_(pts), n_(pts.size()) {
        const std::size_t need = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_) *
                                 sizeof(double);
        if (n_ > 0 && need / static_cast<std::size_t>(n_) / sizeof(double) ==
                          static_cast<std::size_t>(n_) &&
            need <= gram_budget_bytes) {
            gram_.resize(static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_));
            for (Eigen::Index i = 0; i < n_; ++i) {
                for (Eigen::Index j = i; j < n_; ++j) {
                    const double v = ev_(pts_.row(i), pts_.row(j));
                    gram_[static_cast<std::size_t>(i) * n_ + j] = v;
                    gram_[static_cast<std::size_t>(j) * n_ + i] = v;
                }
            }
        }
    }

    double operator()(Eigen::Index i, Eigen::Index j) const {
        if (!gram_.empty()) return gram_[static_cast<std::size_t>(i) * n_ + j];
        return ev_(pts_.row(i), pts_.row(j));
    }

    bool cached() const { return !gram_.empty(); }
    Eigen::Index size() const { return n_; }

  private:
    const KernelEvaluator& ev_;
    const PointSet& pts_;
    Eigen::Index n_;
    std::vector<double> gram_;
};

}  // namespace kthin
