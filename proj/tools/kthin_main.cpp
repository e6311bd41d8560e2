#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kthin/balance.hpp"
#include "kthin/bench.hpp"
#include "kthin/io.hpp"
#include "kthin/kernels.hpp"
#include "kthin/mmd.hpp"
#include "kthin/rng.hpp"
#include "kthin/targets.hpp"
#include "kthin/thinning.hpp"

namespace {

using namespace kthin;

double parse_double_strict(const std::string& text, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid " + what + ": " + text);
    }
    if (used != text.size()) throw std::invalid_argument("invalid " + what + ": " + text);
    return v;
}

long parse_int_strict(const std::string& text, const std::string& what) {
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(text, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid " + what + ": " + text);
    }
    if (used != text.size()) throw std::invalid_argument("invalid " + what + ": " + text);
    return v;
}

struct KernelFlag {
    enum class Mode { FixedSigma, Rule2d, Median } mode = Mode::Rule2d;
    double sigma = 0.0;
};

KernelFlag parse_kernel_flag(const std::string& text) {
    KernelFlag f;
    if (text == "median") {
        f.mode = KernelFlag::Mode::Median;
        return f;
    }
    const std::string prefix = "gaussian:";
    if (text.rfind(prefix, 0) == 0) {
        const std::string rest = text.substr(prefix.size());
        if (rest.rfind("sigma2=", 0) == 0) {
            const std::string val = rest.substr(7);
            if (val == "2d") {
                f.mode = KernelFlag::Mode::Rule2d;
                return f;
            }
            const double s2 = parse_double_strict(val, "kernel bandwidth");
            if (!(s2 > 0.0)) throw std::invalid_argument("kernel: sigma2 must be positive");
            f.mode = KernelFlag::Mode::FixedSigma;
            f.sigma = std::sqrt(s2);
            return f;
        }
        if (rest.rfind("sigma=", 0) == 0) {
            const double s = parse_double_strict(rest.substr(6), "kernel bandwidth");
            if (!(s > 0.0)) throw std::invalid_argument("kernel: sigma must be positive");
            f.mode = KernelFlag::Mode::FixedSigma;
            f.sigma = s;
            return f;
        }
    }
    throw std::invalid_argument(
        "unrecognized --kernel value: " + text +
        " (expected gaussian:sigma=<f>, gaussian:sigma2=<f|2d>, or median)");
}

double resolve_sigma_flag(const KernelFlag& f, const PointSet& pts) {
    switch (f.mode) {
        case KernelFlag::Mode::FixedSigma:
            return f.sigma;
        case KernelFlag::Mode::Rule2d:
            return std::sqrt(2.0 * static_cast<double>(pts.dim()));
        case KernelFlag::Mode::Median: {
            const MedianBandwidth mb = median_heuristic(pts);
            if (mb.degenerate)
                throw std::runtime_error(
                    "median bandwidth is degenerate (all pairwise distances zero)");
            return mb.sigma;
        }
    }
    throw std::logic_error("unreachable kernel mode");
}

TargetSpec parse_target_flag(const std::string& text, bool means_as_printed) {
    if (text.rfind("gaussian:d=", 0) == 0) {
        const long d = parse_int_strict(text.substr(11), "target dimension");
        if (d < 1) throw std::invalid_argument("target: dimension must be positive");
        return TargetSpec::std_gaussian(static_cast<int>(d));
    }
    if (text.rfind("mog:M=", 0) == 0) {
        const long M = parse_int_strict(text.substr(6), "mixture size");
        return TargetSpec::mixture(static_cast<int>(M), means_as_printed);
    }
    throw std::invalid_argument("unrecognized --target value: " + text +
                                " (expected gaussian:d=K or mog:M=K)");
}

int env_threads() {
    const char* raw = std::getenv("KT_THREADS");
    if (raw == nullptr || *raw == '\0') return 0;
    try {
        const long v = parse_int_strict(raw, "KT_THREADS");
        return v > 0 ? static_cast<int>(v) : 0;
    } catch (const std::exception&) {
        return 0;
    }
}

std::vector<Eigen::Index> parse_sizes(const std::string& csv) {
    std::vector<Eigen::Index> sizes;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        sizes.push_back(static_cast<Eigen::Index>(parse_int_strict(tok, "size")));
    }
    if (sizes.empty()) throw std::invalid_argument("no sizes given");
    return sizes;
}

std::vector<Method> parse_methods(const std::string& csv) {
    std::vector<Method> methods;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        methods.push_back(method_from_name(tok));
    }
    if (methods.empty()) throw std::invalid_argument("no methods given");
    return methods;
}

struct ThinArgs {
    std::string input;
    std::string target = "gaussian:d=2";
    bool means_as_printed = false;
    long n = 0;
    long m = -1;
    std::string m_rule = "half-log2";
    std::string kernel = "gaussian:sigma2=2d";
    double delta = 0.5;
    std::string schedule = "fixed";
    std::string variant = "main";
    std::uint64_t seed = 0;
    bool strict = false;
    std::string output;
};

int run_thin(const ThinArgs& a) {
    const std::uint64_t input_seed = derive_stream(a.seed, 0);
    const std::uint64_t algo_seed = derive_stream(a.seed, 1);

    PointSet sample;
    std::string source;
    if (!a.input.empty()) {
        PointSet file_pts = read_points(a.input);
        if (a.n > 0) {
            if (file_pts.size() < a.n)
                throw std::invalid_argument("input file has fewer rows than --n");
            PointMatrix head = file_pts.matrix().topRows(a.n);
            sample = PointSet(std::move(head));
        } else {
            sample = std::move(file_pts);
        }
        source = "input=" + a.input;
    } else {
        if (a.n <= 0) throw std::invalid_argument("--n is required with --target");
        const TargetSpec target = parse_target_flag(a.target, a.means_as_printed);
        sample = sample_target(target, a.n, input_seed);
        source = "target=" + a.target;
    }
    const Eigen::Index n = sample.size();

    int m = static_cast<int>(a.m);
    if (m < 0) {
        if (a.m_rule != "half-log2")
            throw std::invalid_argument("unknown --m-rule: " + a.m_rule);
        int e = 0;
        for (Eigen::Index v = n; v > 1; v >>= 1) ++e;
        m = e / 2;
    }
    if (m < 1) throw std::invalid_argument("thin: resolved m must be >= 1");

    const KernelFlag kf = parse_kernel_flag(a.kernel);
    const double sigma = resolve_sigma_flag(kf, sample);
    const KernelSpec k = KernelSpec::gaussian(static_cast<int>(sample.dim()), sigma);
    const KernelSpec krt = sqrt_kernel_of(k);

    DeltaSchedule schedule;
    if (a.schedule == "fixed")
        schedule = DeltaSchedule::fixed_n(a.delta, n, m);
    else if (a.schedule == "anytime")
        schedule = DeltaSchedule::anytime(a.delta, m);
    else
        throw std::invalid_argument("unknown --schedule: " + a.schedule);

    ThinningOptions opts;
    opts.strict = a.strict;
    if (a.variant == "main")
        opts.variant = ThresholdVariant::Main;
    else if (a.variant == "journal")
        opts.variant = ThresholdVariant::Journal;
    else
        throw std::invalid_argument("unknown --threshold-variant: " + a.variant);

    const ThinningResult result = kernel_thinning(k, krt, sample, m, schedule, algo_seed, opts);

    std::ostringstream meta;
    meta << "command=thin " << source << " n=" << n << " m=" << m
         << " kernel=gaussian sigma=" << format_double(sigma) << " delta="
         << format_double(a.delta) << " schedule=" << a.schedule << " variant=" << a.variant
         << " seed=" << a.seed << " strict=" << (a.strict ? "true" : "false")
         << " coreset_size=" << result.coreset.indices.size()
         << " dropped_tail=" << result.dropped_tail;
    if (result.dropped_tail > 0)
        std::cerr << "warning: " << result.dropped_tail
                  << " trailing points were excluded from halving (input size not divisible "
                     "by 2^m); they remain available to the swap stage\n";

    if (!a.output.empty()) {
        write_coreset(a.output, result.coreset, meta.str());
    } else {
        std::cout << "# meta: " << meta.str() << '\n';
        for (const Eigen::Index idx : result.coreset.indices) std::cout << idx << '\n';
    }
    return 0;
}

struct BenchArgs {
    std::string input;
    std::string target = "gaussian:d=2";
    bool means_as_printed = false;
    std::string sizes;
    bool include_large = false;
    int reps = 10;
    double delta = 0.5;
    std::string kernel = "gaussian:sigma2=2d";
    std::string methods = "standard-thin,kt";
    std::string report = "mmd-to-target";
    std::uint64_t seed = 0;
    long min_n_fit = 64;
    std::string variant = "main";
    std::string output;
};

int run_bench(const BenchArgs& a) {
    ExperimentConfig config;
    if (!a.input.empty()) {
        config.input_points = read_points(a.input);
        config.target = TargetSpec::std_gaussian(static_cast<int>(config.input_points->dim()));
    } else {
        config.target = parse_target_flag(a.target, a.means_as_printed);
    }
    config.sizes =
        a.sizes.empty() ? ExperimentConfig::default_sizes(a.include_large) : parse_sizes(a.sizes);
    config.reps = a.reps;
    config.delta = a.delta;
    const KernelFlag kf = parse_kernel_flag(a.kernel);
    switch (kf.mode) {
        case KernelFlag::Mode::FixedSigma:
            config.sigma = kf.sigma;
            config.sigma2_rule_2d = false;
            break;
        case KernelFlag::Mode::Rule2d:
            config.sigma = 0.0;
            config.sigma2_rule_2d = true;
            break;
        case KernelFlag::Mode::Median:
            config.sigma = 0.0;
            config.sigma2_rule_2d = false;
            break;
    }
    config.methods = parse_methods(a.methods);
    if (a.report == "mmd-to-target")
        config.report = ReportMetric::MmdToTarget;
    else if (a.report == "mmd-to-input")
        config.report = ReportMetric::MmdToInput;
    else
        throw std::invalid_argument("unknown --report: " + a.report);
    config.seed = a.seed;
    config.min_n_for_fit = a.min_n_fit;
    config.threads = env_threads();
    if (a.variant == "main")
        config.variant = ThresholdVariant::Main;
    else if (a.variant == "journal")
        config.variant = ThresholdVariant::Journal;
    else
        throw std::invalid_argument("unknown --threshold-variant: " + a.variant);

    const std::vector<ResultRow> rows = run_experiment(config);
    if (!a.output.empty()) write_results_csv(a.output, rows);
    for (const Method method : config.methods) {
        const std::string name = method_name(method);
        try {
            const double slope = fit_loglog_slope(rows, name, config.min_n_for_fit);
            std::cout << "slope(" << name << ") = " << format_double(slope) << '\n';
        } catch (const std::invalid_argument& e) {
            std::cerr << "slope(" << name << ") not fitted: " << e.what() << '\n';
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel thinning: compress n points to a sqrt(n) coreset with low MMD"};
    app.require_subcommand(1);

    ThinArgs thin_args;
    CLI::App* thin = app.add_subcommand("thin", "thin a point set to a coreset");
    thin->add_option("--input", thin_args.input, "points file (CSV or whitespace)");
    thin->add_option("--target", thin_args.target, "synthetic target (gaussian:d=K | mog:M=K)");
    thin->add_flag("--means-as-printed", thin_args.means_as_printed,
                   "use the verbatim mixture means table (repeated row)");
    thin->add_option("--n", thin_args.n, "number of input points");
    thin->add_option("--m", thin_args.m, "number of halving levels");
    thin->add_option("--m-rule", thin_args.m_rule, "m rule when --m is absent (half-log2)");
    thin->add_option("--kernel", thin_args.kernel,
                     "gaussian:sigma=<f> | gaussian:sigma2=<f|2d> | median");
    thin->add_option("--delta", thin_args.delta, "total failure budget in (0,1)");
    thin->add_option("--schedule", thin_args.schedule, "delta schedule (fixed | anytime)");
    thin->add_option("--threshold-variant", thin_args.variant, "main | journal");
    thin->add_option("--seed", thin_args.seed, "RNG seed");
    thin->add_flag("--strict", thin_args.strict, "reject n not divisible by 2^m");
    thin->add_option("--output", thin_args.output, "write the coreset here (default stdout)");

    BenchArgs bench_args;
    CLI::App* bench = app.add_subcommand("bench", "MMD decay benchmark: thinning vs baseline");
    bench->add_option("--input", bench_args.input, "points file (CSV or whitespace)");
    bench->add_option("--target", bench_args.target,
                      "synthetic target (gaussian:d=K | mog:M=K)");
    bench->add_flag("--means-as-printed", bench_args.means_as_printed,
                    "use the verbatim mixture means table (repeated row)");
    bench->add_option("--sizes", bench_args.sizes, "comma-separated input sizes (powers of 4)");
    bench->add_flag("--include-large", bench_args.include_large,
                    "extend the default sizes to 2^16");
    bench->add_option("--reps", bench_args.reps, "replications per (method, n)");
    bench->add_option("--delta", bench_args.delta, "total failure budget in (0,1)");
    bench->add_option("--kernel", bench_args.kernel,
                      "gaussian:sigma=<f> | gaussian:sigma2=<f|2d> | median");
    bench->add_option("--methods", bench_args.methods,
                      "comma-separated subset of {standard-thin|iid, kt}");
    bench->add_option("--report", bench_args.report, "mmd-to-target | mmd-to-input");
    bench->add_option("--seed", bench_args.seed, "RNG seed");
    bench->add_option("--min-n-fit", bench_args.min_n_fit, "smallest n included in slope fits");
    bench->add_option("--threshold-variant", bench_args.variant, "main | journal");
    bench->add_option("--output", bench_args.output, "write the results CSV here");

    std::string mmd_x, mmd_y, mmd_kernel = "gaussian:sigma2=2d";
    CLI::App* mmd = app.add_subcommand("mmd", "empirical MMD between two point files");
    mmd->add_option("--x", mmd_x, "first points file")->required();
    mmd->add_option("--y", mmd_y, "second points file")->required();
    mmd->add_option("--kernel", mmd_kernel,
                    "gaussian:sigma=<f> | gaussian:sigma2=<f|2d> | median");

    std::string median_input;
    long median_max_points = 16384;
    CLI::App* median =
        app.add_subcommand("median-bandwidth", "median pairwise-distance bandwidth");
    median->add_option("--input", median_input, "points file")->required();
    median->add_option("--max-points", median_max_points,
                       "subsample cap before the all-pairs median");

    long bal_n = 64, bal_d = 8;
    double bal_delta = 0.5;
    std::uint64_t bal_seed = 0;
    CLI::App* bal =
        app.add_subcommand("balance-demo", "online vector balancing walk demonstration");
    bal->add_option("--n", bal_n, "number of vectors");
    bal->add_option("--d", bal_d, "dimension");
    bal->add_option("--delta", bal_delta, "failure probability in (0,1)");
    bal->add_option("--seed", bal_seed, "RNG seed");

    thin->callback([&]() { run_thin(thin_args); });
    bench->callback([&]() { run_bench(bench_args); });
    mmd->callback([&]() {
        const PointSet X = read_points(mmd_x);
        const PointSet Y = read_points(mmd_y);
        const KernelFlag kf = parse_kernel_flag(mmd_kernel);
        const double sigma = resolve_sigma_flag(kf, X);
        const KernelSpec k = KernelSpec::gaussian(static_cast<int>(X.dim()), sigma);
        std::cout << format_double(std::sqrt(mmd_sq_empirical(k, X, Y))) << '\n';
    });
    median->callback([&]() {
        const PointSet pts = read_points(median_input);
        if (median_max_points < 2)
            throw std::invalid_argument("--max-points must be at least 2");
        const MedianBandwidth mb = median_heuristic(pts, median_max_points);
        std::cout << format_double(mb.sigma) << '\n';
        if (mb.degenerate) std::cerr << "warning: all sampled pairwise distances are zero\n";
    });
    bal->callback([&]() {
        if (bal_n < 1 || bal_d < 1)
            throw std::invalid_argument("balance-demo: n and d must be positive");
        if (!(bal_delta > 0.0 && bal_delta < 1.0))
            throw std::invalid_argument("balance-demo: delta must lie in (0,1)");
        Rng gen(derive_stream(bal_seed, 0));
        std::vector<Eigen::VectorXd> vectors;
        vectors.reserve(static_cast<std::size_t>(bal_n));
        for (long i = 0; i < bal_n; ++i) {
            Eigen::VectorXd v(bal_d);
            double norm = 0.0;
            do {
                for (long j = 0; j < bal_d; ++j) v[j] = gen.normal();
                norm = v.norm();
            } while (norm == 0.0);
            vectors.push_back(v / norm);
        }
        const BalanceResult res =
            balance_vectors(vectors, bal_delta, derive_stream(bal_seed, 1));
        const double max_abs = res.w.size() > 0 ? res.w.cwiseAbs().maxCoeff() : 0.0;
        const double bound = std::sqrt(2.0 * std::log(4.0 * bal_d / bal_delta) *
                                       std::log(4.0 * bal_n / bal_delta));
        std::cout << "max_abs = " << format_double(max_abs) << '\n';
        std::cout << "bound = " << format_double(bound) << '\n';
        std::cout << "exceeded = " << (res.exceeded ? "true" : "false") << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
