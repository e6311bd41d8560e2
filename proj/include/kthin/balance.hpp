#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace kthin {

// Running state of the self-balancing walk in R^d: w is the signed sum
// (psi_i), signs holds the eta_i assigned so far (0 marks an exceed-branch
// step, where no sign is assigned), exceeded latches once any |alpha| > a.
struct EuclideanWalkState {
    Eigen::VectorXd w;
    std::vector<int> signs;
    bool exceeded = false;
};

// One walk step with threshold a and uniform draw u in [0,1):
//   alpha = <w, v>;
//   |alpha| > a  -> w -= v * alpha / a, record sentinel 0, latch exceeded;
//   otherwise    -> eta = +1 if u < (1 - alpha/a)/2 else -1, w += eta * v.
// The caller draws u before branching so stream alignment never depends on
// the branch taken.
void sbw_step(EuclideanWalkState& state, const Eigen::VectorXd& v, double a, double u);

struct BalanceResult {
    std::vector<int> signs;
    Eigen::VectorXd w;
    bool exceeded = false;
};

// Online Euclidean vector balancing: runs the walk over vs with the constant
// threshold a = 1/2 + log(4 n / delta).  Requires ||v_i||_2 <= 1.
BalanceResult balance_vectors(const std::vector<Eigen::VectorXd>& vs, double delta,
                              std::uint64_t seed);

// Sub-Gaussian parameter recursion:
//   sigma_new^2 = sigma^2 + f2 * (1 + (sigma^2 / a^2) * (f2 - 2a))_+
// where f2 is the squared norm of the step function.
double update_subgaussian(double sigma_sq, double f_norm_sq, double a);

}  // namespace kthin
