#pragma once

#include <cstdint>

#include "kthin/points.hpp"

namespace kthin {

enum class TargetKind { StdGaussian, MixtureOfGaussians };

// The mixture component locations used by the benchmark targets.  Components
// have identity covariance and equal weights; M must be 4, 6, or 8.  One of
// the published tables contains a repeated row; by default it is corrected to
// the symmetric layout, and as_printed = true reproduces it verbatim.
PointMatrix default_means(int components, bool as_printed = false);

struct TargetSpec {
    TargetKind kind = TargetKind::StdGaussian;
    int dim = 1;
    PointMatrix means;  // MixtureOfGaussians only: one row per component

    static TargetSpec std_gaussian(int dim);
    static TargetSpec mixture(int components, bool as_printed = false);
    static TargetSpec mixture_with_means(const PointMatrix& means);

    int components() const { return static_cast<int>(means.rows()); }
    void validate() const;
};

// Draw n i.i.d. points.  Consumes exactly dim normal variates per standard
// Gaussian point, and one uniform (component pick) plus dim normal variates
// per mixture point.
PointSet sample_target(const TargetSpec& target, Eigen::Index n, std::uint64_t seed);

}  // namespace kthin
