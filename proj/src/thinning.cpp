#include "kthin/thinning.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>

#include "kthin/balance.hpp"
#include "kthin/pair_kernel.hpp"
#include "kthin/rng.hpp"

namespace kthin {

namespace {

struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
};

double pair_b_sq(const PairKernel& kv, Eigen::Index x, Eigen::Index y) {
    return std::max(0.0, kv(x, x) + kv(y, y) - 2.0 * kv(x, y));
}

// Signed alignment of the pending pair (x, y) with the running signed sum of
// the walk whose first half is child1 and whose ground set is the first
// parent_count entries of parent:
//   alpha = sum_parent (k(v,x) - k(v,y)) - 2 sum_child1 (k(z,x) - k(z,y)).
// Plain left-to-right summation; kernel_halving mirrors the same order so
// both produce bitwise-identical values.
double pair_alpha(const PairKernel& kv, const std::vector<Eigen::Index>& parent,
                  std::size_t parent_count, const std::vector<Eigen::Index>& child1,
                  Eigen::Index x, Eigen::Index y) {
    // kv is symmetric; reading (x, v) keeps a cached matrix row-contiguous.
    double acc = 0.0;
    for (std::size_t t = 0; t < parent_count; ++t) {
        const Eigen::Index v = parent[t];
        acc += kv(x, v) - kv(y, v);
    }
    double acc2 = 0.0;
    for (const Eigen::Index z : child1) acc2 += kv(x, z) - kv(y, z);
    return acc - 2.0 * acc2;
}

}  // namespace

DeltaSchedule DeltaSchedule::fixed_n(double delta, Eigen::Index n, int m) {
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("delta schedule: delta must lie in (0, 1)");
    if (n < 2) throw std::invalid_argument("delta schedule: n must be at least 2");
    if (m < 1 || m > 30) throw std::invalid_argument("delta schedule: m must lie in [1, 30]");
    DeltaSchedule s;
    s.kind = ScheduleKind::FixedN;
    s.delta = delta;
    s.n = n;
    s.m = m;
    return s;
}

DeltaSchedule DeltaSchedule::anytime(double delta, int m) {
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("delta schedule: delta must lie in (0, 1)");
    if (m < 1 || m > 30) throw std::invalid_argument("delta schedule: m must lie in [1, 30]");
    DeltaSchedule s;
    s.kind = ScheduleKind::Anytime;
    s.delta = delta;
    s.m = m;
    return s;
}

DeltaSchedule DeltaSchedule::constant(double value) {
    if (!(value > 0.0 && value < 1.0))
        throw std::invalid_argument("delta schedule: constant value must lie in (0, 1)");
    DeltaSchedule s;
    s.kind = ScheduleKind::Constant;
    s.value = value;
    return s;
}

double delta_at(const DeltaSchedule& schedule, Eigen::Index i) {
    if (i < 1) throw std::invalid_argument("delta_at: round index must be >= 1");
    switch (schedule.kind) {
        case ScheduleKind::FixedN: {
            if (i > schedule.n / 2)
                throw std::invalid_argument("delta_at: round index exceeds n/2");
            const double nd = static_cast<double>(schedule.n);
            const double halved = nd - std::ldexp(nd, -schedule.m);
            return schedule.delta / (2.0 * halved);
        }
        case ScheduleKind::Anytime: {
            const double ip1 = static_cast<double>(i) + 1.0;
            const double li = std::log(ip1);
            return schedule.delta / (4.0 * schedule.m * ip1 * li * li);
        }
        case ScheduleKind::Constant:
            return schedule.value;
    }
    throw std::logic_error("delta_at: unknown schedule kind");
}

SwapParams get_swap_params(double sigma_sq, double b_sq, double delta,
                           double log_numerator) {
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("get_swap_params: delta must lie in (0, 1)");
    if (!(log_numerator > 1.0))
        throw std::invalid_argument("get_swap_params: log numerator must exceed 1");
    if (!std::isfinite(sigma_sq) || sigma_sq < 0.0)
        throw std::invalid_argument("get_swap_params: sigma_sq must be finite and >= 0");
    if (!std::isfinite(b_sq))
        throw std::invalid_argument("get_swap_params: b_sq must be finite");
    if (b_sq <= 0.0) return {0.0, sigma_sq};
    const double a =
        std::max(std::sqrt(b_sq * sigma_sq * 2.0 * std::log(log_numerator / delta)), b_sq);
    return {a, update_subgaussian(sigma_sq, b_sq, a)};
}

Coreset standard_thin(Eigen::Index n, Eigen::Index out_size, bool strict) {
    if (n < 1) throw std::invalid_argument("standard_thin: empty input");
    if (out_size < 1 || out_size > n)
        throw std::invalid_argument("standard_thin: output size must lie in [1, n]");
    if (strict && n % out_size != 0)
        throw std::invalid_argument("standard_thin: output size must divide n in strict mode");
    const Eigen::Index t = n / out_size;
    Coreset c;
    c.provenance = Provenance::Baseline;
    c.indices.reserve(static_cast<std::size_t>(out_size));
    for (Eigen::Index j = 1; j <= out_size; ++j) c.indices.push_back(j * t - 1);
    c.indices.back() = n - 1;
    return c;
}

bool split_sigma_bound_ok(const SplitState& state) {
    for (const auto& level : state.walks) {
        for (const WalkStats& w : level) {
            if (w.max_b_sq <= 0.0) {
                if (w.sigma_sq != 0.0) return false;
                continue;
            }
            if (w.max_c_sq <= 0.0) return false;
            const double c = std::sqrt(w.max_c_sq);
            const double reach = c + 1.0 / c;
            const double bound = 0.25 * w.max_b_sq * reach * reach;
            if (w.sigma_sq > bound * (1.0 + 1e-9) + 1e-300) return false;
        }
    }
    return true;
}

SplitResult kt_split(const KernelSpec& krt, const PointSet& points, int m,
                     const DeltaSchedule& schedule, std::uint64_t seed,
                     const ThinningOptions& opts) {
    krt.validate();
    points.require_finite();
    if (points.dim() != krt.dim)
        throw std::invalid_argument("kt_split: point dimension does not match kernel");
    if (m < 1 || m > 30) throw std::invalid_argument("kt_split: m must lie in [1, 30]");
    const Eigen::Index n = points.size();
    const Eigen::Index block = Eigen::Index{1} << m;
    if (n < block) throw std::invalid_argument("kt_split: need at least 2^m points");
    const Eigen::Index tail = n % block;
    if (tail != 0 && opts.strict)
        throw std::invalid_argument("kt_split: input size not divisible by 2^m in strict mode");
    if (schedule.kind == ScheduleKind::FixedN && schedule.n != n)
        throw std::invalid_argument("kt_split: schedule n does not match input size");
    const Eigen::Index n_use = n - tail;

    const KernelEvaluator ev(krt, /*unit_scale=*/true);
    const PairKernel kv(ev, points, opts.gram_budget_bytes);

    SplitState state;
    state.m = m;
    state.points_consumed = n_use;
    state.dropped_tail = tail;
    state.coresets.resize(static_cast<std::size_t>(m) + 1);
    for (int j = 0; j <= m; ++j) {
        state.coresets[j].resize(std::size_t{1} << j);
        for (auto& cs : state.coresets[j])
            cs.reserve(static_cast<std::size_t>(n_use >> j));
    }
    state.walks.resize(static_cast<std::size_t>(m));
    for (int j = 1; j <= m; ++j) state.walks[j - 1].resize(std::size_t{1} << (j - 1));

    Rng rng(seed);
    for (Eigen::Index i = 1; i <= n_use; ++i) {
        state.coresets[0][0].push_back(i - 1);
        for (int j = 1; j <= m; ++j) {
            if (i % (Eigen::Index{1} << j) != 0) break;
            const double delta_round = delta_at(schedule, i >> j);
            double delta_eff = delta_round;
            double numerator = 4.0;
            if (opts.variant == ThresholdVariant::Journal) {
                delta_eff = delta_round * std::ldexp(1.0, j - 1) / m;
                numerator = 2.0;
            }
            const std::size_t half = std::size_t{1} << (j - 1);
            for (std::size_t l = 0; l < half; ++l) {
                auto& parent = state.coresets[j - 1][l];
                auto& child1 = state.coresets[j][2 * l];
                auto& child2 = state.coresets[j][2 * l + 1];
                WalkStats& w = state.walks[j - 1][l];
                Eigen::Index x = parent[parent.size() - 2];
                Eigen::Index y = parent[parent.size() - 1];
                const double b_sq = pair_b_sq(kv, x, y);
                double p = 0.5;
                if (b_sq > 0.0) {
                    const SwapParams sp = get_swap_params(w.sigma_sq, b_sq, delta_eff, numerator);
                    w.sigma_sq = sp.sigma_sq;
                    w.max_b_sq = std::max(w.max_b_sq, b_sq);
                    w.max_c_sq = std::max(w.max_c_sq, 2.0 * std::log(numerator / delta_eff));
                    const double alpha =
                        pair_alpha(kv, parent, parent.size() - 2, child1, x, y);
                    p = std::min(1.0, 0.5 * std::max(0.0, 1.0 - alpha / sp.a));
                }
                w.rounds += 1;
                const double u = rng.uniform();
                if (u < p) std::swap(x, y);
                child1.push_back(x);
                child2.push_back(y);
            }
        }
    }
    state.kernel_evals = ev.eval_count();

    if (!split_sigma_bound_ok(state))
        throw std::logic_error("kt_split: sub-Gaussian growth bound violated");

    SplitResult out;
    out.state = std::move(state);
    const std::size_t leaves = std::size_t{1} << m;
    out.coresets.reserve(leaves);
    for (std::size_t l = 0; l < leaves; ++l) {
        Coreset c;
        c.indices = out.state.coresets[static_cast<std::size_t>(m)][l];
        c.provenance = Provenance::Split;
        c.split_index = static_cast<int>(l) + 1;
        out.coresets.push_back(std::move(c));
    }
    return out;
}

namespace {

Coreset kt_swap_impl(const KernelEvaluator& ev, const PointSet& points,
                     const std::vector<Coreset>& candidates, const Coreset& baseline,
                     const ThinningOptions& opts) {
    const Eigen::Index n = points.size();
    if (n < 1) throw std::invalid_argument("kt_swap: empty input");
    const Eigen::Index s = static_cast<Eigen::Index>(baseline.indices.size());
    if (s < 1) throw std::invalid_argument("kt_swap: empty baseline");
    auto check_indices = [n, s](const Coreset& c) {
        if (static_cast<Eigen::Index>(c.indices.size()) != s)
            throw std::invalid_argument("kt_swap: candidate size differs from baseline");
        for (const Eigen::Index idx : c.indices)
            if (idx < 0 || idx >= n)
                throw std::invalid_argument("kt_swap: coreset index out of range");
    };
    check_indices(baseline);
    for (const Coreset& c : candidates) check_indices(c);

    const PairKernel kv(ev, points, opts.gram_budget_bytes);

    std::vector<double> diag(static_cast<std::size_t>(n));
    for (Eigen::Index z = 0; z < n; ++z) diag[static_cast<std::size_t>(z)] = kv(z, z);

    // g[z] = sum over the full input of k(x_i, x_z).
    std::vector<double> g(static_cast<std::size_t>(n));
    for (Eigen::Index z = 0; z < n; ++z) {
        KahanSum acc;
        for (Eigen::Index i = 0; i < n; ++i) acc.add(kv(z, i));
        g[static_cast<std::size_t>(z)] = acc.sum;
    }
    KahanSum total;
    for (const double v : g) total.add(v);
    const double T = total.sum;

    const double nd = static_cast<double>(n);
    const double sd = static_cast<double>(s);

    auto coreset_self_sum = [&](const std::vector<Eigen::Index>& S) {
        KahanSum acc;
        for (const Eigen::Index a : S)
            for (const Eigen::Index b : S) acc.add(kv(a, b));
        return acc.sum;
    };
    auto fresh_mmd_sq = [&](const std::vector<Eigen::Index>& S) {
        KahanSum cross;
        for (const Eigen::Index w : S) cross.add(g[static_cast<std::size_t>(w)]);
        const double v = T / (nd * nd) + coreset_self_sum(S) / (sd * sd) -
                         2.0 * cross.sum / (nd * sd);
        return std::max(0.0, v);
    };

    // Selection: baseline first, candidates in order; strictly smaller wins,
    // so ties keep the baseline and then the lowest candidate number.
    const Coreset* best = &baseline;
    double best_val = fresh_mmd_sq(baseline.indices);
    for (const Coreset& c : candidates) {
        const double v = fresh_mmd_sq(c.indices);
        if (v < best_val) {
            best_val = v;
            best = &c;
        }
    }

    std::vector<Eigen::Index> S = best->indices;

    // h[z] = sum over the current coreset of k(x_z, w).
    std::vector<double> h(static_cast<std::size_t>(n));
    for (Eigen::Index z = 0; z < n; ++z) {
        KahanSum acc;
        for (const Eigen::Index w : S) acc.add(kv(z, w));
        h[static_cast<std::size_t>(z)] = acc.sum;
    }

    // One pass over the positions; each scans every input point and keeps the
    // incumbent unless a swap strictly lowers the coreset-to-input MMD.
    for (Eigen::Index pos = 0; pos < s; ++pos) {
        const Eigen::Index w_old = S[static_cast<std::size_t>(pos)];
        const double g_old = g[static_cast<std::size_t>(w_old)];
        const double h_old = h[static_cast<std::size_t>(w_old)];
        const double k_old = diag[static_cast<std::size_t>(w_old)];
        double best_delta = 0.0;
        Eigen::Index best_z = -1;
        for (Eigen::Index z = 0; z < n; ++z) {
            if (z == w_old) continue;
            const double d_self = -2.0 * h_old + k_old +
                                  2.0 * (h[static_cast<std::size_t>(z)] - kv(w_old, z)) +
                                  diag[static_cast<std::size_t>(z)];
            const double delta = d_self / (sd * sd) -
                                 2.0 * (g[static_cast<std::size_t>(z)] - g_old) / (nd * sd);
            if (delta < best_delta) {
                best_delta = delta;
                best_z = z;
            }
        }
        if (best_z >= 0) {
            for (Eigen::Index v = 0; v < n; ++v)
                h[static_cast<std::size_t>(v)] += kv(best_z, v) - kv(w_old, v);
            S[static_cast<std::size_t>(pos)] = best_z;
        }
    }

    Coreset out;
    out.provenance = Provenance::Swapped;
    out.split_index = best->split_index;
    // Guard against accumulated round-off in the incremental sums: keep the
    // refined coreset only if a fresh evaluation confirms it is no worse.
    if (fresh_mmd_sq(S) <= best_val) {
        out.indices = std::move(S);
    } else {
        out.indices = best->indices;
    }
    return out;
}

}  // namespace

Coreset kt_swap(const KernelSpec& k, const PointSet& points,
                const std::vector<Coreset>& candidates, const Coreset& baseline,
                const ThinningOptions& opts) {
    k.validate();
    points.require_finite();
    if (points.dim() != k.dim)
        throw std::invalid_argument("kt_swap: point dimension does not match kernel");
    const KernelEvaluator ev(k, /*unit_scale=*/true);
    return kt_swap_impl(ev, points, candidates, baseline, opts);
}

ThinningResult kernel_thinning(const KernelSpec& k, const KernelSpec& krt,
                               const PointSet& points, int m,
                               const DeltaSchedule& schedule, std::uint64_t seed,
                               const ThinningOptions& opts) {
    k.validate();
    krt.validate();
    if (k.dim != krt.dim)
        throw std::invalid_argument("kernel_thinning: kernel dimensions disagree");
    if (points.dim() != k.dim)
        throw std::invalid_argument("kernel_thinning: point dimension does not match kernel");

    SplitResult split = kt_split(krt, points, m, schedule, seed, opts);
    const Eigen::Index out_size = split.state.points_consumed >> m;
    const Coreset baseline = standard_thin(points.size(), out_size);

    const KernelEvaluator ev(k, /*unit_scale=*/true);
    ThinningResult r;
    r.coreset = kt_swap_impl(ev, points, split.coresets, baseline, opts);
    r.kernel_evals = split.state.kernel_evals + ev.eval_count();
    r.dropped_tail = split.state.dropped_tail;
    r.split_state = std::move(split.state);
    return r;
}

HalvingResult kernel_halving(const KernelSpec& k, const PointSet& points,
                             const std::vector<double>& deltas, std::uint64_t seed,
                             const ThinningOptions& opts) {
    k.validate();
    points.require_finite();
    if (points.dim() != k.dim)
        throw std::invalid_argument("kernel_halving: point dimension does not match kernel");
    const Eigen::Index n = points.size();
    if (n < 2 || n % 2 != 0)
        throw std::invalid_argument("kernel_halving: need an even number of points");
    if (static_cast<Eigen::Index>(deltas.size()) != n / 2)
        throw std::invalid_argument("kernel_halving: need one delta per round");

    const KernelEvaluator ev(k, /*unit_scale=*/true);
    const PairKernel kv(ev, points, opts.gram_budget_bytes);
    Rng rng(seed);

    std::vector<Eigen::Index> prefix;  // all points streamed so far, in order
    prefix.reserve(static_cast<std::size_t>(n));
    std::vector<Eigen::Index> s1, s2;
    s1.reserve(static_cast<std::size_t>(n / 2));
    s2.reserve(static_cast<std::size_t>(n / 2));
    // Signed weights of the running balance state; +/-1 per assigned point,
    // fractional corrections once a round has failed.
    std::vector<double> coeff(static_cast<std::size_t>(n), 0.0);
    bool failed = false;
    Eigen::Index failure_round = 0;
    double sigma_sq = 0.0;

    for (Eigen::Index i = 1; i <= n / 2; ++i) {
        const Eigen::Index x = 2 * i - 2;
        const Eigen::Index y = 2 * i - 1;
        const double b_sq = pair_b_sq(kv, x, y);
        double a = 0.0;
        if (b_sq > 0.0) {
            const SwapParams sp =
                get_swap_params(sigma_sq, b_sq, deltas[static_cast<std::size_t>(i - 1)], 4.0);
            a = sp.a;
            sigma_sq = sp.sigma_sq;
        }
        double alpha = 0.0;
        if (b_sq > 0.0) {
            if (!failed) {
                alpha = pair_alpha(kv, prefix, prefix.size(), s1, x, y);
            } else {
                double acc = 0.0;
                for (Eigen::Index v = 0; v < x; ++v) {
                    const double cv = coeff[static_cast<std::size_t>(v)];
                    if (cv != 0.0) acc += cv * (kv(x, v) - kv(y, v));
                }
                alpha = acc;
            }
        }
        const double u = rng.uniform();
        if (b_sq > 0.0 && std::abs(alpha) > a) {
            if (!failed) {
                failed = true;
                failure_round = i;
            }
            const double r = alpha / a;
            coeff[static_cast<std::size_t>(x)] -= r;
            coeff[static_cast<std::size_t>(y)] += r;
        } else {
            const double p =
                (b_sq > 0.0) ? std::min(1.0, 0.5 * std::max(0.0, 1.0 - alpha / a)) : 0.5;
            const bool swap = (u < p);
            const double eta = swap ? 1.0 : -1.0;
            if (!failed) {
                if (swap) {
                    s1.push_back(y);
                    s2.push_back(x);
                } else {
                    s1.push_back(x);
                    s2.push_back(y);
                }
            }
            coeff[static_cast<std::size_t>(x)] += eta;
            coeff[static_cast<std::size_t>(y)] -= eta;
        }
        prefix.push_back(x);
        prefix.push_back(y);
    }

    HalvingResult out;
    out.failed = failed;
    out.failure_round = failure_round;
    out.first.provenance = Provenance::Split;
    out.first.split_index = 1;
    out.second.provenance = Provenance::Split;
    out.second.split_index = 2;
    out.first.indices = std::move(s1);
    out.second.indices = std::move(s2);
    return out;
}

}  // namespace kthin
