#include "kthin/targets.hpp"

#include <algorithm>
#include <stdexcept>

#include "kthin/rng.hpp"

namespace kthin {

PointMatrix default_means(int components, bool as_printed) {
    if (components != 4 && components != 6 && components != 8)
        throw std::invalid_argument("default_means: components must be 4, 6, or 8");
    PointMatrix table(8, 2);
    table << -3.0, 3.0,  //
        3.0, 3.0,        //
        -3.0, -3.0,      //
        3.0, -3.0,       //
        0.0, 6.0,        //
        -6.0, 0.0,       //
        6.0, 0.0,        //
        0.0, -6.0;
    if (as_printed) table.row(1) << -3.0, 3.0;
    return table.topRows(components);
}

TargetSpec TargetSpec::std_gaussian(int dim) {
    if (dim < 1) throw std::invalid_argument("target: dimension must be positive");
    TargetSpec t;
    t.kind = TargetKind::StdGaussian;
    t.dim = dim;
    return t;
}

TargetSpec TargetSpec::mixture(int components, bool as_printed) {
    TargetSpec t;
    t.kind = TargetKind::MixtureOfGaussians;
    t.dim = 2;
    t.means = default_means(components, as_printed);
    return t;
}

TargetSpec TargetSpec::mixture_with_means(const PointMatrix& means) {
    if (means.rows() < 1 || means.cols() < 1)
        throw std::invalid_argument("target: mixture needs at least one component");
    TargetSpec t;
    t.kind = TargetKind::MixtureOfGaussians;
    t.dim = static_cast<int>(means.cols());
    t.means = means;
    return t;
}

void TargetSpec::validate() const {
    if (dim < 1) throw std::invalid_argument("target: dimension must be positive");
    if (kind == TargetKind::MixtureOfGaussians) {
        if (means.rows() < 1)
            throw std::invalid_argument("target: mixture needs at least one component");
        if (means.cols() != dim)
            throw std::invalid_argument("target: component dimension mismatch");
        if (!means.allFinite())
            throw std::invalid_argument("target: component means must be finite");
    }
}

PointSet sample_target(const TargetSpec& target, Eigen::Index n, std::uint64_t seed) {
    target.validate();
    if (n < 0) throw std::invalid_argument("sample_target: negative sample count");
    PointMatrix pts(n, target.dim);
    Rng rng(seed);
    if (target.kind == TargetKind::StdGaussian) {
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < target.dim; ++j) pts(i, j) = rng.normal();
    } else {
        const int M = target.components();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double u = rng.uniform();
            const int comp = std::min(M - 1, static_cast<int>(u * M));
            for (int j = 0; j < target.dim; ++j)
                pts(i, j) = target.means(comp, j) + rng.normal();
        }
    }
    return PointSet(std::move(pts));
}

}  // namespace kthin
