#include "kthin/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kthin/thinning.hpp"

namespace kthin {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kLn2 = 0.6931471805599453094172321214581766;

// x^p for small nonnegative integer p by repeated multiplication (exact
// operation order, no libm dispatch).
double pow_int(double x, int p) {
    double r = 1.0;
    for (int t = 0; t < p; ++t) r *= x;
    return r;
}

double log_cosh(double x) {
    x = std::fabs(x);
    return x + std::log1p(std::exp(-2.0 * x)) - kLn2;
}

}  // namespace

KernelSpec KernelSpec::gaussian(int dim, double sigma, double scale) {
    KernelSpec s;
    s.family = KernelFamily::Gaussian;
    s.dim = dim;
    s.sigma = sigma;
    s.scale = scale;
    s.validate();
    return s;
}

KernelSpec KernelSpec::matern(int dim, double nu, double gamma, double scale) {
    KernelSpec s;
    s.family = KernelFamily::Matern;
    s.dim = dim;
    s.nu = nu;
    s.gamma = gamma;
    s.scale = scale;
    s.validate();
    return s;
}

KernelSpec KernelSpec::bspline(int dim, int eta, double scale) {
    KernelSpec s;
    s.family = KernelFamily::BSpline;
    s.dim = dim;
    s.order = eta;
    s.scale = scale;
    s.validate();
    return s;
}

void KernelSpec::validate() const {
    if (dim < 1) throw std::invalid_argument("kernel: dim must be >= 1");
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw std::invalid_argument("kernel: scale must be positive and finite");
    switch (family) {
        case KernelFamily::Gaussian:
            if (!(sigma > 0.0) || !std::isfinite(sigma))
                throw std::invalid_argument("kernel: Gaussian sigma must be positive");
            break;
        case KernelFamily::Matern:
            if (!(gamma > 0.0) || !std::isfinite(gamma))
                throw std::invalid_argument("kernel: Matern gamma must be positive");
            if (!std::isfinite(nu) || !(nu - dim / 2.0 > 0.0))
                throw std::invalid_argument("kernel: Matern requires nu > dim/2");
            break;
        case KernelFamily::BSpline:
            if (order < 1)
                throw std::invalid_argument("kernel: BSpline order must be >= 1");
            if (order > 39)
                throw std::invalid_argument(
                    "kernel: BSpline order above 39 is outside the stable range");
            break;
    }
}

double bspline_univariate(int order, double a) {
    if (order < 1) throw std::invalid_argument("bspline_univariate: order must be >= 1");
    if (order > 40)
        throw std::invalid_argument(
            "bspline_univariate: order above 40 is outside the stable range");
    if (!std::isfinite(a)) throw std::invalid_argument("bspline_univariate: non-finite input");

    const double half = order / 2.0;
    a = -std::fabs(a);          // even function; the negative side needs the fewest terms
    if (-a >= half) return 0.0; // compact support, exactly zero

    // f(a) = (1/(order-1)!) sum_j (-1)^j C(order,j) (a + order/2 - j)_+^(order-1)
    double sum = 0.0;
    double binom = 1.0;
    double sign = 1.0;
    for (int j = 0; j <= order; ++j) {
        const double base = a + half - static_cast<double>(j);
        if (base <= 0.0) break;
        sum += sign * binom * pow_int(base, order - 1);
        sign = -sign;
        binom = binom * static_cast<double>(order - j) / static_cast<double>(j + 1);
    }
    double fact = 1.0;
    for (int t = 2; t <= order - 1; ++t) fact *= static_cast<double>(t);
    return sum / fact;
}

double bspline_peak(int order) { return bspline_univariate(order, 0.0); }

double log_bessel_k(double order, double r) {
    if (!(order > 0.0) || !(r > 0.0) || !std::isfinite(order) || !std::isfinite(r))
        throw std::domain_error("log_bessel_k: requires order > 0 and r > 0");

    const double b = order;
    auto g = [&](double t) { return -r * std::cosh(t) + log_cosh(b * t); };

    // The integrand exp(g(t)) is even and unimodal; locate its peak.
    double t_peak = 0.0;
    if (b * b > r) {
        auto dg = [&](double t) { return -r * std::sinh(t) + b * std::tanh(b * t); };
        double lo = 0.0, hi = std::asinh(b / r);  // dg(hi) <= 0
        for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (dg(mid) > 0.0)
                lo = mid;
            else
                hi = mid;
        }
        t_peak = 0.5 * (lo + hi);
    }
    const double m = g(t_peak);

    // Trapezoidal rule on [0, inf) with the peak factored out; the even
    // analytic integrand makes refinement converge geometrically in h.
    auto sum_stride = [&](double start, double stride) {
        double s = 0.0;
        for (int k = 0; k < 50'000'000; ++k) {
            const double t = start + stride * static_cast<double>(k);
            const double e = g(t) - m;
            if (e < -60.0 && t > t_peak) break;
            s += std::exp(e);
        }
        return s;
    };

    double h = 0.5;
    double integral = h * (0.5 * std::exp(g(0.0) - m) + sum_stride(h, h));
    double prev = integral;
    int converged = 0;
    for (int level = 0; level < 14 && converged < 2; ++level) {
        const double h2 = 0.5 * h;
        const double odd = sum_stride(h2, h);  // nodes at odd multiples of h/2
        integral = 0.5 * integral + h2 * odd;
        h = h2;
        converged = (std::fabs(integral - prev) <= 1e-13 * std::fabs(integral))
                        ? converged + 1
                        : 0;
        prev = integral;
    }
    return m + std::log(integral);
}

double bessel_k(double order, double r) {
    if (!(order > 0.0) || order > 64.0 || !(r > 0.0) || r > 128.0 ||
        !std::isfinite(order) || !std::isfinite(r))
        throw std::domain_error("bessel_k: arguments outside supported envelope");
    return std::exp(log_bessel_k(order, r));
}

KernelSpec sqrt_kernel_of(const KernelSpec& spec) {
    spec.validate();
    KernelSpec out = spec;
    const double d = static_cast<double>(spec.dim);
    switch (spec.family) {
        case KernelFamily::Gaussian: {
            out.sigma = spec.sigma / std::sqrt(2.0);
            const double log_c =
                (d / 4.0) * (kLn2 - std::log(kPi) - 2.0 * std::log(spec.sigma));
            out.scale = spec.scale * std::exp(log_c);
            return out;
        }
        case KernelFamily::Matern: {
            if (!(spec.nu > d))
                throw std::domain_error("sqrt_kernel_of: Matern requires nu > dim");
            out.nu = spec.nu / 2.0;
            const double log_a = (d / 4.0) * (2.0 * std::log(spec.gamma) - std::log(4.0 * kPi)) +
                                 0.5 * (std::lgamma(spec.nu) - std::lgamma(spec.nu - d / 2.0)) +
                                 std::lgamma((spec.nu - d) / 2.0) - std::lgamma(spec.nu / 2.0);
            out.scale = spec.scale * std::exp(log_a);
            return out;
        }
        case KernelFamily::BSpline: {
            if (spec.order % 2 == 0)
                throw std::domain_error("sqrt_kernel_of: BSpline label must be odd (2*beta+1)");
            const int beta = (spec.order - 1) / 2;
            if (beta % 2 == 0)
                throw std::domain_error("sqrt_kernel_of: BSpline requires odd beta");
            out.order = beta;
            // sqrt(S_{2beta+2,d}) / S_{beta+1,d} with S_{q,d} = peak(q)^{-d}
            const double log_c = 0.5 * (-d * std::log(bspline_peak(2 * beta + 2))) +
                                 d * std::log(bspline_peak(beta + 1));
            out.scale = spec.scale * std::exp(log_c);
            return out;
        }
    }
    throw std::logic_error("sqrt_kernel_of: unreachable");
}

KernelEvaluator::KernelEvaluator(const KernelSpec& spec, bool unit_scale) : spec_(spec) {
    spec_.validate();
    scale_ = unit_scale ? 1.0 : spec_.scale;
    switch (spec_.family) {
        case KernelFamily::Gaussian:
            inv_two_sigma_sq_ = 1.0 / (2.0 * spec_.sigma * spec_.sigma);
            break;
        case KernelFamily::Matern: {
            b_ = spec_.nu - spec_.dim / 2.0;
            log_cb_ = (1.0 - b_) * kLn2 - std::lgamma(b_);
            const double kd = b_ - 0.5;
            const long long k = std::llround(kd);
            half_integer_ = (k >= 0 && k <= 60 && static_cast<double>(k) == kd);
            if (half_integer_) {
                // kappa(u) = e^{-u} sum_j C_j u^{k-j},
                // C_j = c_b sqrt(pi/2) (k+j)!/(j!(k-j)!) 2^{-j}
                const double lead = std::exp(log_cb_) * std::sqrt(kPi / 2.0);
                double a = 1.0;
                poly_.resize(static_cast<std::size_t>(k) + 1);
                for (long long j = 0; j <= k; ++j) {
                    if (j > 0)
                        a *= static_cast<double>((k + j) * (k - j + 1)) /
                             static_cast<double>(2 * j);
                    poly_[static_cast<std::size_t>(j)] = lead * a;
                }
            }
            break;
        }
        case KernelFamily::BSpline:
            uni_order_ = spec_.order + 1;
            inv_peak_ = 1.0 / bspline_peak(uni_order_);
            break;
    }
}

double KernelEvaluator::radial(double dist) const {
    if (spec_.family == KernelFamily::Gaussian)
        return std::exp(-dist * dist * inv_two_sigma_sq_);
    // Matern
    const double u = spec_.gamma * dist;
    if (u == 0.0) return 1.0;
    if (half_integer_) {
        double acc = poly_[0];
        for (std::size_t j = 1; j < poly_.size(); ++j) acc = acc * u + poly_[j];
        return std::exp(-u) * acc;
    }
    return std::exp(log_cb_ + b_ * std::log(u) + log_bessel_k(b_, u));
}

double KernelEvaluator::operator()(const double* x, const double* y) const {
    count_.fetch_add(1, std::memory_order_relaxed);
    const int d = spec_.dim;
    if (spec_.family == KernelFamily::BSpline) {
        double prod = 1.0;
        for (int j = 0; j < d; ++j) {
            const double f = bspline_univariate(uni_order_, x[j] - y[j]);
            if (f == 0.0) return 0.0;
            prod *= f * inv_peak_;
        }
        return scale_ * prod;
    }
    double sq = 0.0;
    for (int j = 0; j < d; ++j) {
        const double diff = x[j] - y[j];
        sq += diff * diff;
    }
    if (spec_.family == KernelFamily::Gaussian)
        return scale_ * std::exp(-sq * inv_two_sigma_sq_);
    return scale_ * radial(std::sqrt(sq));
}

double eval_kernel(const KernelSpec& spec, const double* x, const double* y, int dim) {
    spec.validate();
    if (dim != spec.dim) throw std::invalid_argument("eval_kernel: dimension mismatch");
    for (int j = 0; j < dim; ++j) {
        if (!std::isfinite(x[j]) || !std::isfinite(y[j]))
            throw std::invalid_argument("eval_kernel: non-finite coordinate");
    }
    KernelEvaluator ev(spec);
    return ev(x, y);
}

double eval_kernel(const KernelSpec& spec, const std::vector<double>& x,
                   const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("eval_kernel: dimension mismatch");
    return eval_kernel(spec, x.data(), y.data(), static_cast<int>(x.size()));
}

namespace {

// Composite Simpson weight for node i of n (n odd, n >= 3).
double simpson_weight(int i, int n) {
    if (i == 0 || i == n - 1) return 1.0;
    return (i % 2 == 1) ? 4.0 : 2.0;
}

double quad_product_grid(const KernelEvaluator& ev, const double* x, const double* y,
                         int dim, const double* lo, const double* hi, int nodes) {
    if (nodes % 2 == 0) ++nodes;
    if (dim == 1) {
        const double h = (hi[0] - lo[0]) / (nodes - 1);
        double acc = 0.0;
        for (int i = 0; i < nodes; ++i) {
            const double z = lo[0] + h * i;
            acc += simpson_weight(i, nodes) * ev(x, &z) * ev(y, &z);
        }
        return acc * h / 3.0;
    }
    // dim == 2: tensor Simpson
    const double hx = (hi[0] - lo[0]) / (nodes - 1);
    const double hy = (hi[1] - lo[1]) / (nodes - 1);
    double acc = 0.0;
    for (int i = 0; i < nodes; ++i) {
        const double wi = simpson_weight(i, nodes);
        double inner = 0.0;
        for (int j = 0; j < nodes; ++j) {
            double z[2] = {lo[0] + hx * i, lo[1] + hy * j};
            inner += simpson_weight(j, nodes) * ev(x, z) * ev(y, z);
        }
        acc += wi * inner;
    }
    return acc * hx * hy / 9.0;
}

double support_pad(const KernelSpec& sqrt_spec) {
    switch (sqrt_spec.family) {
        case KernelFamily::Gaussian:
            return 12.0 * sqrt_spec.sigma;
        case KernelFamily::BSpline:
            return (sqrt_spec.order + 1) / 2.0;  // exact support bound
        case KernelFamily::Matern:
            return 16.0 / sqrt_spec.gamma;  // grown adaptively by the caller
    }
    return 16.0;
}

}  // namespace

double verify_sqrt_identity(const KernelSpec& target, const KernelSpec& sqrt,
                            const double* x, const double* y, int quad_nodes) {
    target.validate();
    sqrt.validate();
    if (target.dim != sqrt.dim)
        throw std::invalid_argument("verify_sqrt_identity: dimension mismatch");
    const int dim = target.dim;
    if (dim > 2)
        throw std::invalid_argument("verify_sqrt_identity: only dim <= 2 supported");
    if (quad_nodes < 9)
        throw std::invalid_argument("verify_sqrt_identity: too few quadrature nodes");

    const double k_val = eval_kernel(target, x, y, dim);
    KernelEvaluator ev(sqrt);

    double pad = support_pad(sqrt);
    const bool exponential_tail = sqrt.family == KernelFamily::Matern;
    double lo[2], hi[2];
    auto set_domain = [&](double p) {
        for (int j = 0; j < dim; ++j) {
            lo[j] = std::min(x[j], y[j]) - p;
            hi[j] = std::max(x[j], y[j]) + p;
        }
    };

    set_domain(pad);
    int nodes = quad_nodes;
    double quad = quad_product_grid(ev, x, y, dim, lo, hi, nodes);
    if (exponential_tail) {
        // Grow the truncation window (keeping node density) until stable.
        for (int round = 0; round < 3; ++round) {
            pad *= 2.0;
            nodes *= 2;
            set_domain(pad);
            const double wider = quad_product_grid(ev, x, y, dim, lo, hi, nodes);
            if (std::fabs(wider - quad) <= 1e-9 * std::max(1.0, std::fabs(wider))) {
                quad = wider;
                break;
            }
            quad = wider;
        }
    }

    const double diff_coarse = std::fabs(k_val - quad);
    const double fine = quad_product_grid(ev, x, y, dim, lo, hi, 2 * nodes - 1);
    const double diff = std::fabs(k_val - fine);
    if (diff > 1e-3 && diff > diff_coarse)
        throw std::runtime_error("verify_sqrt_identity: quadrature not converging");
    return diff;
}

MedianBandwidth median_heuristic(const PointSet& pts, Eigen::Index max_points) {
    const Eigen::Index n = pts.size();
    if (n < 2) throw std::invalid_argument("median_heuristic: need at least 2 points");
    if (max_points < 2) throw std::invalid_argument("median_heuristic: max_points < 2");
    pts.require_finite();

    const Eigen::Index keep = std::min(n, max_points);
    const Coreset sub = standard_thin(n, keep);
    const Eigen::Index m = static_cast<Eigen::Index>(sub.indices.size());
    const int d = static_cast<int>(pts.dim());

    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double* xi = pts.row(sub.indices[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = i + 1; j < m; ++j) {
            const double* xj = pts.row(sub.indices[static_cast<std::size_t>(j)]);
            double sq = 0.0;
            for (int c = 0; c < d; ++c) {
                const double diff = xi[c] - xj[c];
                sq += diff * diff;
            }
            dists.push_back(std::sqrt(sq));
        }
    }

    MedianBandwidth out;
    const std::size_t cnt = dists.size();
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(cnt / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    if (cnt % 2 == 1) {
        out.sigma = *mid;
    } else {
        const double upper = *mid;
        const double lower = *std::max_element(dists.begin(), mid);
        out.sigma = 0.5 * (lower + upper);
    }
    out.degenerate = (out.sigma == 0.0);
    return out;
}

}  // namespace kthin
