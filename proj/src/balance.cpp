#include "kthin/balance.hpp"

#include <cmath>
#include <stdexcept>

#include "kthin/rng.hpp"

namespace kthin {

void sbw_step(EuclideanWalkState& state, const Eigen::VectorXd& v, double a, double u) {
    if (!(a > 0.0) || !std::isfinite(a))
        throw std::invalid_argument("sbw_step: threshold must be positive and finite");
    if (state.w.size() == 0) state.w = Eigen::VectorXd::Zero(v.size());
    if (state.w.size() != v.size())
        throw std::invalid_argument("sbw_step: dimension mismatch");

    const double alpha = state.w.dot(v);
    if (std::fabs(alpha) > a) {
        state.w -= v * (alpha / a);
        state.signs.push_back(0);
        state.exceeded = true;
        return;
    }
    const int eta = (u < 0.5 * (1.0 - alpha / a)) ? 1 : -1;
    state.w += static_cast<double>(eta) * v;
    state.signs.push_back(eta);
}

BalanceResult balance_vectors(const std::vector<Eigen::VectorXd>& vs, double delta,
                              std::uint64_t seed) {
    if (!(delta > 0.0) || delta > 1.0)
        throw std::invalid_argument("balance_vectors: delta must lie in (0,1]");
    BalanceResult out;
    const std::size_t n = vs.size();
    if (n == 0) {
        out.w = Eigen::VectorXd();
        return out;
    }
    for (const auto& v : vs) {
        if (v.norm() > 1.0 + 1e-12)
            throw std::invalid_argument("balance_vectors: vector norm exceeds 1");
    }

    const double a = 0.5 + std::log(4.0 * static_cast<double>(n) / delta);
    EuclideanWalkState state;
    state.w = Eigen::VectorXd::Zero(vs[0].size());
    Rng rng(seed);
    for (const auto& v : vs) {
        const double u = rng.uniform();  // one draw per step, branch-independent
        sbw_step(state, v, a, u);
    }
    out.signs = std::move(state.signs);
    out.w = std::move(state.w);
    out.exceeded = state.exceeded;
    return out;
}

double update_subgaussian(double sigma_sq, double f_norm_sq, double a) {
    if (!(a > 0.0) || !std::isfinite(a))
        throw std::invalid_argument("update_subgaussian: threshold must be positive");
    if (!std::isfinite(sigma_sq) || !std::isfinite(f_norm_sq))
        throw std::invalid_argument("update_subgaussian: non-finite input");
    const double factor = 1.0 + (sigma_sq / (a * a)) * (f_norm_sq - 2.0 * a);
    return sigma_sq + f_norm_sq * std::max(0.0, factor);
}

}  // namespace kthin
