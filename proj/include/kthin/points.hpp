#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace kthin {

// Row-major point storage: one point per row, so a row's coordinates are
// contiguous and kernel loops can work on raw pointers.
using PointMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class PointSet {
  public:
    PointSet() = default;
    explicit PointSet(PointMatrix pts) : pts_(std::move(pts)) {}
    PointSet(Eigen::Index n, Eigen::Index d) : pts_(PointMatrix::Zero(n, d)) {}

    Eigen::Index size() const { return pts_.rows(); }
    Eigen::Index dim() const { return pts_.cols(); }

    const double* row(Eigen::Index i) const { return pts_.data() + i * pts_.cols(); }
    double* row(Eigen::Index i) { return pts_.data() + i * pts_.cols(); }

    double& operator()(Eigen::Index i, Eigen::Index j) { return pts_(i, j); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return pts_(i, j); }

    const PointMatrix& matrix() const { return pts_; }
    PointMatrix& matrix() { return pts_; }

    // Throws if any coordinate is NaN or infinite.
    void require_finite() const {
        for (Eigen::Index i = 0; i < pts_.size(); ++i) {
            if (!std::isfinite(pts_.data()[i]))
                throw std::invalid_argument("point set contains a non-finite coordinate");
        }
    }

  private:
    PointMatrix pts_;
};

}  // namespace kthin
