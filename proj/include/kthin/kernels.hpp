#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "kthin/points.hpp"

namespace kthin {

enum class KernelFamily { Gaussian, Matern, BSpline };

// Shift-invariant kernel k(x,y) = scale * kappa(x - y), kappa(0) = 1.
//   Gaussian: kappa(z) = exp(-||z||^2 / (2 sigma^2))
//   Matern:   kappa(z) = c_b (gamma ||z||)^b K_b(gamma ||z||), b = nu - dim/2,
//             c_b = 2^(1-b) / Gamma(b)
//   BSpline:  kappa(z) = prod_j f_{order+1}(z_j) / B_{order+1}, the univariate
//             B-spline of order `order`+1 normalized by its peak value B.
struct KernelSpec {
    KernelFamily family = KernelFamily::Gaussian;
    int dim = 1;
    double scale = 1.0;
    double sigma = 1.0;  // Gaussian bandwidth
    double nu = 0.0;     // Matern smoothness
    double gamma = 1.0;  // Matern inverse length scale
    int order = 0;       // BSpline label eta (univariate convolution order eta+1)

    static KernelSpec gaussian(int dim, double sigma, double scale = 1.0);
    static KernelSpec matern(int dim, double nu, double gamma, double scale = 1.0);
    static KernelSpec bspline(int dim, int eta, double scale = 1.0);

    // Throws std::invalid_argument when a parameter is out of range.
    void validate() const;
};

// Univariate B-spline f_order(a): the `order`-fold self-convolution of the
// unit indicator 1_[-1/2,1/2].  Even in a; identically zero for |a| >= order/2.
double bspline_univariate(int order, double a);

// Peak value B_order = f_order(0) = ||f_order||_inf.
double bspline_peak(int order);

// Modified Bessel function of the second kind K_b(r), via the integral
// representation K_b(r) = int_0^inf exp(-r cosh t) cosh(bt) dt evaluated by
// adaptive trapezoidal quadrature with the integrand's peak factored out.
// Supported envelope: b in (0, 64], r in (0, 128]; relative accuracy 1e-10
// wherever the result is representable in double precision.
double bessel_k(double order, double r);

// log K_b(r) for b > 0, r > 0 (no envelope cap; used by Matern evaluation to
// avoid overflow/underflow at extreme arguments).
double log_bessel_k(double order, double r);

// The square-root partner krt of a target kernel: k(x,y) = int krt(x,z) krt(y,z) dz
// holds exactly when the target's scale is 1.  Gaussian(sigma) -> Gaussian(sigma/sqrt(2));
// Matern(nu, gamma) -> Matern(nu/2, gamma); BSpline(2b+1) -> BSpline(b), each with the
// matching scale constant (computed in log-space so large dim does not overflow).
KernelSpec sqrt_kernel_of(const KernelSpec& spec);

// Checked evaluation k(x,y).  Throws std::invalid_argument on dimension
// mismatch or non-finite coordinates.
double eval_kernel(const KernelSpec& spec, const double* x, const double* y, int dim);
double eval_kernel(const KernelSpec& spec, const std::vector<double>& x,
                   const std::vector<double>& y);

// Unchecked hot-path evaluator with precomputed per-family constants and an
// evaluation counter.  `unit_scale` drops the scale factor; the thinning
// pipeline uses that mode so its index decisions are exactly invariant to
// rescaling either kernel.
class KernelEvaluator {
  public:
    explicit KernelEvaluator(const KernelSpec& spec, bool unit_scale = false);

    KernelEvaluator(const KernelEvaluator&) = delete;
    KernelEvaluator& operator=(const KernelEvaluator&) = delete;

    double operator()(const double* x, const double* y) const;

    const KernelSpec& spec() const { return spec_; }
    int dim() const { return spec_.dim; }
    std::uint64_t eval_count() const { return count_.load(std::memory_order_relaxed); }
    void reset_count() { count_.store(0, std::memory_order_relaxed); }

  private:
    double radial(double dist) const;  // Gaussian/Matern kappa as a function of ||z||

    KernelSpec spec_;
    double scale_ = 1.0;
    double inv_two_sigma_sq_ = 0.0;              // Gaussian
    double b_ = 0.0, log_cb_ = 0.0;              // Matern, general order
    bool half_integer_ = false;
    std::vector<double> poly_;                   // Matern half-integer coefficients
    int uni_order_ = 0;                          // BSpline univariate order
    double inv_peak_ = 1.0;                      // 1 / B_order
    mutable std::atomic<std::uint64_t> count_{0};
};

// Numerically integrates int krt(x,z) krt(y,z) dz on a product grid (dim <= 2)
// and returns |k(x,y) - quadrature|.  Test utility for the square-root
// identity; throws std::runtime_error if refining the grid fails to converge.
double verify_sqrt_identity(const KernelSpec& target, const KernelSpec& sqrt,
                            const double* x, const double* y, int quad_nodes);

struct MedianBandwidth {
    double sigma = 0.0;
    bool degenerate = false;  // all sampled pairwise distances were zero
};

// Median pairwise Euclidean distance over a standard-thinned subset of at most
// max_points points; an even pair count averages the two middle order
// statistics.
MedianBandwidth median_heuristic(const PointSet& pts, Eigen::Index max_points = 16384);

}  // namespace kthin
