#include "kthin/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "kthin/mmd.hpp"
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

bool is_power_of_four(Eigen::Index n) {
    if (n < 1) return false;
    while (n % 4 == 0) n /= 4;
    return n == 1;
}

int half_log2(Eigen::Index n) {
    int e = 0;
    Eigen::Index v = n;
    while (v > 1) {
        v >>= 1;
        ++e;
    }
    return e / 2;
}

constexpr int kMethodStreamTag(Method m) {
    return m == Method::StandardThin ? 1 : 2;
}

}  // namespace

std::string method_name(Method m) {
    return m == Method::StandardThin ? "standard-thin" : "kt";
}

Method method_from_name(const std::string& name) {
    if (name == "standard-thin" || name == "iid") return Method::StandardThin;
    if (name == "kt") return Method::KernelThinning;
    throw std::invalid_argument("unknown method: " + name);
}

std::vector<Eigen::Index> ExperimentConfig::default_sizes(bool include_large) {
    std::vector<Eigen::Index> sizes;
    for (int e = 4; e <= (include_large ? 16 : 14); e += 2)
        sizes.push_back(Eigen::Index{1} << e);
    return sizes;
}

void ExperimentConfig::validate() const {
    target.validate();
    if (input_points) {
        input_points->require_finite();
        if (input_points->dim() < 1)
            throw std::invalid_argument("experiment: input points have no columns");
    }
    if (sizes.empty()) throw std::invalid_argument("experiment: no input sizes");
    for (const Eigen::Index n : sizes) {
        if (!is_power_of_four(n) || n < 4)
            throw std::invalid_argument("experiment: sizes must be powers of 4 (>= 4)");
        if (input_points && input_points->size() < n)
            throw std::invalid_argument("experiment: input file has fewer rows than n");
    }
    if (reps < 2) throw std::invalid_argument("experiment: need at least 2 replications");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("experiment: delta must lie in (0, 1)");
    if (methods.empty()) throw std::invalid_argument("experiment: no methods selected");
    if (report == ReportMetric::MmdToTarget && input_points)
        throw std::invalid_argument(
            "experiment: target MMD reporting requires a synthetic target, not an input file");
    if (threads < 0) throw std::invalid_argument("experiment: negative thread count");
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {

int input_dim(const ExperimentConfig& c) {
    return c.input_points ? static_cast<int>(c.input_points->dim()) : c.target.dim;
}

double resolve_sigma(const ExperimentConfig& c, const PointSet& sample) {
    if (c.sigma > 0.0) return c.sigma;
    if (c.sigma2_rule_2d) return std::sqrt(2.0 * static_cast<double>(sample.dim()));
    const MedianBandwidth mb = median_heuristic(sample);
    if (mb.degenerate)
        throw std::runtime_error("median bandwidth is degenerate (all distances zero)");
    return mb.sigma;
}

struct RunOutcome {
    double mmd = 0.0;
    double seconds = 0.0;
};

RunOutcome run_one(const ExperimentConfig& config, Eigen::Index n, Method method, int rep,
                   std::size_t gram_budget) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t stream =
        derive_stream(config.seed, static_cast<std::uint64_t>(n),
                      static_cast<std::uint64_t>(kMethodStreamTag(method)),
                      static_cast<std::uint64_t>(rep));
    const std::uint64_t input_seed = derive_stream(stream, 0);
    const std::uint64_t algo_seed = derive_stream(stream, 1);

    PointSet sample;
    if (config.input_points) {
        PointMatrix head = config.input_points->matrix().topRows(n);
        sample = PointSet(std::move(head));
    } else {
        sample = sample_target(config.target, n, input_seed);
    }

    const int m = half_log2(n);
    const Eigen::Index out_size = n >> m;
    const double sigma = resolve_sigma(config, sample);
    const KernelSpec k = KernelSpec::gaussian(static_cast<int>(sample.dim()), sigma);

    Coreset coreset;
    if (method == Method::StandardThin) {
        coreset = standard_thin(n, out_size);
    } else {
        const KernelSpec krt = sqrt_kernel_of(k);
        ThinningOptions opts;
        opts.variant = config.variant;
        opts.gram_budget_bytes = gram_budget;
        const DeltaSchedule schedule =
            DeltaSchedule::constant(config.delta / (2.0 * static_cast<double>(n)));
        coreset = kernel_thinning(k, krt, sample, m, schedule, algo_seed, opts).coreset;
    }

    PointMatrix sel(static_cast<Eigen::Index>(coreset.indices.size()), sample.dim());
    for (std::size_t i = 0; i < coreset.indices.size(); ++i)
        sel.row(static_cast<Eigen::Index>(i)) = sample.matrix().row(coreset.indices[i]);
    const PointSet coreset_points(std::move(sel));

    RunOutcome out;
    if (config.report == ReportMetric::MmdToTarget) {
        out.mmd = std::sqrt(mmd_sq_to_target(k, config.target, coreset_points));
    } else {
        out.mmd = std::sqrt(mmd_sq_empirical(k, sample, coreset_points));
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
    config.validate();

    if (config.report == ReportMetric::MmdToTarget) {
        // Refuse to report target MMD unless the closed forms check out
        // against independent estimates.
        const int d = input_dim(config);
        const double probe_sigma =
            config.sigma > 0.0 ? config.sigma : std::sqrt(2.0 * static_cast<double>(d));
        const KernelSpec probe = KernelSpec::gaussian(d, probe_sigma);
        const OracleGateReport moments =
            validate_target_moments_mc(probe, config.target, derive_stream(config.seed, 977));
        if (!moments.passed)
            throw std::runtime_error("oracle gate failed (target moments): " + moments.detail);
        const OracleGateReport spline = validate_bspline_convolution();
        if (!spline.passed)
            throw std::runtime_error("oracle gate failed (B-spline values): " + spline.detail);
    }

    struct Task {
        std::size_t method_idx;
        std::size_t size_idx;
        int rep;
    };
    std::vector<Task> tasks;
    for (std::size_t mi = 0; mi < config.methods.size(); ++mi)
        for (std::size_t si = 0; si < config.sizes.size(); ++si)
            for (int rep = 0; rep < config.reps; ++rep) tasks.push_back({mi, si, rep});

    const int threads =
        std::min<int>(resolve_threads(config.threads), static_cast<int>(tasks.size()));
    const std::size_t gram_budget =
        std::max<std::size_t>(std::size_t{64} << 20,
                              (std::size_t{3} << 30) / static_cast<std::size_t>(threads));

    std::vector<RunOutcome> outcomes(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= tasks.size()) return;
            const Task& t = tasks[idx];
            const Eigen::Index n = config.sizes[t.size_idx];
            const Method method = config.methods[t.method_idx];
            try {
                outcomes[idx] = run_one(config, n, method, t.rep, gram_budget);
            } catch (const std::exception& e) {
                std::ostringstream msg;
                msg << "run failed (method=" << method_name(method) << ", n=" << n
                    << ", rep=" << t.rep << "): " << e.what();
                errors[idx] = msg.str();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    for (const std::string& err : errors)
        if (!err.empty()) throw std::runtime_error(err);

    // Deterministic fold in task order.
    std::vector<ResultRow> rows;
    rows.reserve(config.methods.size() * config.sizes.size());
    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        for (std::size_t si = 0; si < config.sizes.size(); ++si) {
            const Eigen::Index n = config.sizes[si];
            KahanSum mean_acc, time_acc;
            std::vector<double> values;
            values.reserve(static_cast<std::size_t>(config.reps));
            for (std::size_t idx = 0; idx < tasks.size(); ++idx) {
                if (tasks[idx].method_idx != mi || tasks[idx].size_idx != si) continue;
                values.push_back(outcomes[idx].mmd);
                mean_acc.add(outcomes[idx].mmd);
                time_acc.add(outcomes[idx].seconds);
            }
            const double reps = static_cast<double>(values.size());
            const double mean = mean_acc.sum / reps;
            KahanSum var_acc;
            for (const double v : values) var_acc.add((v - mean) * (v - mean));
            const double sample_var = values.size() > 1 ? var_acc.sum / (reps - 1.0) : 0.0;
            ResultRow row;
            row.method = method_name(config.methods[mi]);
            row.n = n;
            row.coreset_size = n >> half_log2(n);
            row.mean_mmd = mean;
            row.stderr_mmd = std::sqrt(sample_var / reps);
            row.wall_time_s = time_acc.sum / reps;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

double fit_loglog_slope(const std::vector<ResultRow>& rows, Eigen::Index min_n) {
    std::vector<double> xs, ys;
    std::vector<Eigen::Index> seen;
    for (const ResultRow& r : rows) {
        if (r.n < min_n) continue;
        if (!(r.mean_mmd > 0.0))
            throw std::invalid_argument("slope fit: nonpositive mean MMD");
        if (std::find(seen.begin(), seen.end(), r.n) != seen.end())
            throw std::invalid_argument("slope fit: duplicate n (filter to one method first)");
        seen.push_back(r.n);
        xs.push_back(std::log(static_cast<double>(r.n)));
        ys.push_back(std::log(r.mean_mmd));
    }
    if (xs.size() < 3)
        throw std::invalid_argument("slope fit: need at least 3 distinct n values");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return sxy / sxx;
}

double fit_loglog_slope(const std::vector<ResultRow>& rows, const std::string& method,
                        Eigen::Index min_n) {
    std::vector<ResultRow> filtered;
    for (const ResultRow& r : rows)
        if (r.method == method) filtered.push_back(r);
    return fit_loglog_slope(filtered, min_n);
}

OracleGateReport validate_target_moments_mc(const KernelSpec& k, const TargetSpec& target,
                                            std::uint64_t seed, Eigen::Index draws,
                                            double rel_tol) {
    k.validate();
    target.validate();
    if (k.dim != target.dim)
        throw std::invalid_argument("oracle gate: kernel/target dimension mismatch");
    if (draws < 1000) throw std::invalid_argument("oracle gate: too few draws");

    const PointSet Z = sample_target(target, draws, seed);
    const KernelEvaluator ev(k);
    const int d = k.dim;

    std::vector<std::vector<double>> probes;
    probes.push_back(std::vector<double>(static_cast<std::size_t>(d), 0.0));
    if (target.kind == TargetKind::MixtureOfGaussians) {
        std::vector<double> p1(static_cast<std::size_t>(d));
        std::vector<double> p2(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
            p1[static_cast<std::size_t>(j)] = target.means(0, j);
            p2[static_cast<std::size_t>(j)] = target.means(0, j) + (j == 0 ? 1.0 : 0.0);
        }
        probes.push_back(std::move(p1));
        probes.push_back(std::move(p2));
    } else {
        std::vector<double> p1(static_cast<std::size_t>(d), 0.5);
        std::vector<double> p2(static_cast<std::size_t>(d), 0.0);
        p2[0] = 2.0;
        probes.push_back(std::move(p1));
        probes.push_back(std::move(p2));
    }

    OracleGateReport report;
    report.passed = true;
    std::ostringstream detail;
    for (std::size_t pi = 0; pi < probes.size(); ++pi) {
        KahanSum acc;
        for (Eigen::Index i = 0; i < draws; ++i) acc.add(ev(probes[pi].data(), Z.row(i)));
        const double mc = acc.sum / static_cast<double>(draws);
        const double closed = mean_embedding(k, target, probes[pi].data());
        const double rel = std::abs(mc - closed) / std::max(1e-300, std::abs(closed));
        report.worst_rel_err = std::max(report.worst_rel_err, rel);
        detail << "Pk probe " << pi << ": closed=" << closed << " mc=" << mc << " rel=" << rel
               << "; ";
    }
    {
        // Independent pairs (Z_i, Z_{i + draws/2}) estimate the double integral.
        const Eigen::Index half = draws / 2;
        KahanSum acc;
        for (Eigen::Index i = 0; i < half; ++i) acc.add(ev(Z.row(i), Z.row(i + half)));
        const double mc = acc.sum / static_cast<double>(half);
        const double closed = target_double_integral(k, target);
        const double rel = std::abs(mc - closed) / std::max(1e-300, std::abs(closed));
        report.worst_rel_err = std::max(report.worst_rel_err, rel);
        detail << "PPk: closed=" << closed << " mc=" << mc << " rel=" << rel;
    }
    report.passed = report.worst_rel_err <= rel_tol;
    report.detail = detail.str();
    return report;
}

OracleGateReport validate_bspline_convolution() {
    const int per_unit = 512;
    const double h = 1.0 / per_unit;
    const int half_width = 3 * per_unit;  // grid spans [-3, 3]
    const int N = 2 * half_width + 1;
    auto grid_t = [&](int i) { return (i - half_width) * h; };
    auto indicator = [](double t) { return std::abs(t) < 0.5 ? 1.0 : 0.0; };

    // First convolution on cell centers: both factors jump only at cell
    // edges, the integrand is constant per cell, and the midpoint sum is
    // exact.  (On the node grid the shared jump at |t| = 1/2 would cost an
    // O(h) error because the half-weight trick averages the factor, not the
    // product.)
    std::vector<double> f2(static_cast<std::size_t>(N), 0.0);
    for (int i = 0; i < N; ++i) {
        double acc = 0.0;
        for (int j = -per_unit / 2; j < per_unit / 2; ++j) {
            const double s = (j + 0.5) * h;  // centers covering |s| < 1/2
            acc += indicator(grid_t(i) - s);
        }
        f2[static_cast<std::size_t>(i)] = acc * h;
    }

    // Later convolutions have a continuous factor, so the node grid with a
    // half weight exactly at the indicator's jump is O(h^2)-accurate.
    std::vector<double> f1(static_cast<std::size_t>(N), 0.0);
    for (int i = 0; i < N; ++i) {
        const double t = std::abs(grid_t(i));
        if (t < 0.5 - 1e-12)
            f1[static_cast<std::size_t>(i)] = 1.0;
        else if (std::abs(t - 0.5) <= 1e-12)
            f1[static_cast<std::size_t>(i)] = 0.5;
    }
    auto convolve_with_f1 = [&](const std::vector<double>& f) {
        std::vector<double> out(static_cast<std::size_t>(N), 0.0);
        for (int i = 0; i < N; ++i) {
            double acc = 0.0;
            for (int off = -per_unit / 2; off <= per_unit / 2; ++off) {
                const int j = i - off;
                if (j < 0 || j >= N) continue;
                const int fi = off + half_width;
                acc += f[static_cast<std::size_t>(j)] * f1[static_cast<std::size_t>(fi)];
            }
            out[static_cast<std::size_t>(i)] = acc * h;
        }
        return out;
    };

    OracleGateReport report;
    std::ostringstream detail;
    double worst = 0.0;
    std::vector<double> conv = f2;
    for (int order = 2; order <= 4; ++order) {
        if (order > 2) conv = convolve_with_f1(conv);
        double max_err = 0.0;
        for (int i = 0; i < N; ++i) {
            const double t = grid_t(i);
            if (std::abs(t) > 2.5) continue;
            const double err = std::abs(conv[static_cast<std::size_t>(i)] -
                                        bspline_univariate(order, t));
            max_err = std::max(max_err, err);
        }
        worst = std::max(worst, max_err);
        detail << "order " << order << ": max_abs_err=" << max_err << "; ";
    }
    report.worst_rel_err = worst;
    report.passed = worst <= 5e-5;
    report.detail = detail.str();
    return report;
}

}  // namespace kthin
