#include "kthin/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

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

}  // namespace

double mmd_sq_empirical(const KernelSpec& k, const PointSet& X, const PointSet& Y) {
    k.validate();
    X.require_finite();
    Y.require_finite();
    if (X.dim() != k.dim || Y.dim() != k.dim)
        throw std::invalid_argument("mmd: point dimension does not match kernel");
    if (X.size() < 1 || Y.size() < 1) throw std::invalid_argument("mmd: empty point set");

    const KernelEvaluator ev(k);
    const Eigen::Index n = X.size(), m = Y.size();
    KahanSum xx, yy, xy;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) xx.add(ev(X.row(i), X.row(j)));
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) yy.add(ev(Y.row(i), Y.row(j)));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < m; ++j) xy.add(ev(X.row(i), Y.row(j)));
    const double nd = static_cast<double>(n), md = static_cast<double>(m);
    const double v = (xx.sum / (nd * nd) + yy.sum / (md * md)) - 2.0 * (xy.sum / (nd * md));
    return std::max(0.0, v);
}

namespace {

Eigen::Index checked_input_size(const KernelSpec& k, const PointSet& pts) {
    pts.require_finite();
    if (pts.dim() != k.dim)
        throw std::invalid_argument("mmd workspace: point dimension does not match kernel");
    if (pts.size() < 1) throw std::invalid_argument("mmd workspace: empty input");
    return pts.size();
}

}  // namespace

MmdWorkspace::MmdWorkspace(const KernelSpec& k, const PointSet& pts,
                           std::size_t gram_budget_bytes)
    : ev_(k), pts_(pts), n_(checked_input_size(k, pts)), kv_(ev_, pts_, gram_budget_bytes) {
    diag_.resize(static_cast<std::size_t>(n_));
    for (Eigen::Index z = 0; z < n_; ++z) diag_[static_cast<std::size_t>(z)] = kv_(z, z);
    g_.resize(static_cast<std::size_t>(n_));
    for (Eigen::Index z = 0; z < n_; ++z) {
        KahanSum acc;
        // kv_ is symmetric; (z, i) keeps a cached matrix row-contiguous.
        for (Eigen::Index i = 0; i < n_; ++i) acc.add(kv_(z, i));
        g_[static_cast<std::size_t>(z)] = acc.sum;
    }
    KahanSum tot;
    for (const double v : g_) tot.add(v);
    total_ = tot.sum;
}

double MmdWorkspace::mmd_sq_of(const std::vector<Eigen::Index>& coreset) const {
    const Eigen::Index s = static_cast<Eigen::Index>(coreset.size());
    if (s < 1) throw std::invalid_argument("mmd workspace: empty coreset");
    KahanSum self, cross;
    for (const Eigen::Index w : coreset) {
        if (w < 0 || w >= n_) throw std::invalid_argument("mmd workspace: index out of range");
        cross.add(g_[static_cast<std::size_t>(w)]);
    }
    for (const Eigen::Index a : coreset)
        for (const Eigen::Index b : coreset) self.add(kv_(a, b));
    const double nd = static_cast<double>(n_), sd = static_cast<double>(s);
    const double v =
        (total_ / (nd * nd) + self.sum / (sd * sd)) - 2.0 * (cross.sum / (nd * sd));
    return std::max(0.0, v);
}

void MmdWorkspace::set_coreset(const std::vector<Eigen::Index>& coreset) {
    const Eigen::Index s = static_cast<Eigen::Index>(coreset.size());
    if (s < 1) throw std::invalid_argument("mmd workspace: empty coreset");
    for (const Eigen::Index w : coreset)
        if (w < 0 || w >= n_) throw std::invalid_argument("mmd workspace: index out of range");
    coreset_ = coreset;
    h_.assign(static_cast<std::size_t>(n_), 0.0);
    for (Eigen::Index z = 0; z < n_; ++z) {
        KahanSum acc;
        for (const Eigen::Index w : coreset_) acc.add(kv_(z, w));
        h_[static_cast<std::size_t>(z)] = acc.sum;
    }
    KahanSum self, cross;
    for (const Eigen::Index a : coreset_)
        for (const Eigen::Index b : coreset_) self.add(kv_(a, b));
    for (const Eigen::Index w : coreset_) cross.add(g_[static_cast<std::size_t>(w)]);
    self_ = self.sum;
    cross_ = cross.sum;
}

void MmdWorkspace::require_coreset() const {
    if (coreset_.empty())
        throw std::logic_error("mmd workspace: no active coreset");
}

double MmdWorkspace::mmd_sq() const {
    require_coreset();
    const double nd = static_cast<double>(n_);
    const double sd = static_cast<double>(coreset_.size());
    const double v = (total_ / (nd * nd) + self_ / (sd * sd)) - 2.0 * (cross_ / (nd * sd));
    return std::max(0.0, v);
}

double MmdWorkspace::swap_delta_at(Eigen::Index position, Eigen::Index z) const {
    require_coreset();
    const Eigen::Index s = static_cast<Eigen::Index>(coreset_.size());
    if (position < 0 || position >= s)
        throw std::invalid_argument("mmd workspace: position out of range");
    if (z < 0 || z >= n_) throw std::invalid_argument("mmd workspace: index out of range");
    const Eigen::Index w_old = coreset_[static_cast<std::size_t>(position)];
    if (z == w_old) return 0.0;
    const double d_self = -2.0 * h_[static_cast<std::size_t>(w_old)] +
                          diag_[static_cast<std::size_t>(w_old)] +
                          2.0 * (h_[static_cast<std::size_t>(z)] - kv_(z, w_old)) +
                          diag_[static_cast<std::size_t>(z)];
    const double nd = static_cast<double>(n_), sd = static_cast<double>(s);
    return d_self / (sd * sd) -
           2.0 * (g_[static_cast<std::size_t>(z)] - g_[static_cast<std::size_t>(w_old)]) /
               (nd * sd);
}

void MmdWorkspace::apply_swap_at(Eigen::Index position, Eigen::Index z) {
    require_coreset();
    const Eigen::Index s = static_cast<Eigen::Index>(coreset_.size());
    if (position < 0 || position >= s)
        throw std::invalid_argument("mmd workspace: position out of range");
    if (z < 0 || z >= n_) throw std::invalid_argument("mmd workspace: index out of range");
    const Eigen::Index w_old = coreset_[static_cast<std::size_t>(position)];
    if (z == w_old) return;
    const double d_self = -2.0 * h_[static_cast<std::size_t>(w_old)] +
                          diag_[static_cast<std::size_t>(w_old)] +
                          2.0 * (h_[static_cast<std::size_t>(z)] - kv_(z, w_old)) +
                          diag_[static_cast<std::size_t>(z)];
    for (Eigen::Index v = 0; v < n_; ++v)
        h_[static_cast<std::size_t>(v)] += kv_(z, v) - kv_(w_old, v);
    self_ += d_self;
    cross_ += g_[static_cast<std::size_t>(z)] - g_[static_cast<std::size_t>(w_old)];
    coreset_[static_cast<std::size_t>(position)] = z;
}

bool MmdWorkspace::coherent(double rel_tol) const {
    require_coreset();
    KahanSum self, cross;
    for (const Eigen::Index a : coreset_)
        for (const Eigen::Index b : coreset_) self.add(kv_(a, b));
    for (const Eigen::Index w : coreset_) cross.add(g_[static_cast<std::size_t>(w)]);
    const auto close = [rel_tol](double a, double b) {
        return std::abs(a - b) <= rel_tol * (1.0 + std::max(std::abs(a), std::abs(b)));
    };
    if (!close(self.sum, self_) || !close(cross.sum, cross_)) return false;
    for (Eigen::Index z = 0; z < n_; ++z) {
        KahanSum acc;
        for (const Eigen::Index w : coreset_) acc.add(kv_(z, w));
        if (!close(acc.sum, h_[static_cast<std::size_t>(z)])) return false;
    }
    return true;
}

double mmd_to_input(const MmdWorkspace& ws, Eigen::Index n, const Coreset& coreset) {
    if (n != ws.input_size())
        throw std::invalid_argument("mmd_to_input: n does not match the workspace input");
    return std::sqrt(ws.mmd_sq_of(coreset.indices));
}

double swap_delta(MmdWorkspace& ws, const Coreset& coreset, Eigen::Index position,
                  Eigen::Index z) {
    if (!ws.has_coreset() || ws.coreset() != coreset.indices)
        ws.set_coreset(coreset.indices);
    return ws.swap_delta_at(position, z);
}

void apply_swap(MmdWorkspace& ws, Coreset& coreset, Eigen::Index position, Eigen::Index z) {
    if (!ws.has_coreset() || ws.coreset() != coreset.indices)
        ws.set_coreset(coreset.indices);
    ws.apply_swap_at(position, z);
    coreset.indices[static_cast<std::size_t>(position)] = z;
}

namespace {

void require_gaussian(const KernelSpec& k) {
    k.validate();
    if (k.family != KernelFamily::Gaussian)
        throw std::domain_error("closed-form target moments require a Gaussian kernel");
}

}  // namespace

double mean_embedding(const KernelSpec& k, const TargetSpec& target, const double* x) {
    require_gaussian(k);
    target.validate();
    if (k.dim != target.dim)
        throw std::invalid_argument("mean_embedding: kernel/target dimension mismatch");
    const double s2 = k.sigma * k.sigma;
    const double denom = 2.0 * (s2 + 1.0);
    const double pref = k.scale * std::exp(0.5 * k.dim * std::log(s2 / (s2 + 1.0)));
    if (target.kind == TargetKind::StdGaussian) {
        double sq = 0.0;
        for (int j = 0; j < k.dim; ++j) sq += x[j] * x[j];
        return pref * std::exp(-sq / denom);
    }
    const int M = target.components();
    double acc = 0.0;
    for (int c = 0; c < M; ++c) {
        double sq = 0.0;
        for (int j = 0; j < k.dim; ++j) {
            const double d = x[j] - target.means(c, j);
            sq += d * d;
        }
        acc += std::exp(-sq / denom);
    }
    return pref * acc / M;
}

double target_double_integral(const KernelSpec& k, const TargetSpec& target) {
    require_gaussian(k);
    target.validate();
    if (k.dim != target.dim)
        throw std::invalid_argument("target_double_integral: kernel/target dimension mismatch");
    const double s2 = k.sigma * k.sigma;
    const double pref = k.scale * std::exp(0.5 * k.dim * std::log(s2 / (s2 + 2.0)));
    if (target.kind == TargetKind::StdGaussian) return pref;
    const int M = target.components();
    const double denom = 2.0 * (s2 + 2.0);
    double acc = 0.0;
    for (int a = 0; a < M; ++a) {
        for (int b = 0; b < M; ++b) {
            double sq = 0.0;
            for (int j = 0; j < k.dim; ++j) {
                const double d = target.means(a, j) - target.means(b, j);
                sq += d * d;
            }
            acc += std::exp(-sq / denom);
        }
    }
    return pref * acc / (M * M);
}

double mmd_sq_to_target(const KernelSpec& k, const TargetSpec& target, const PointSet& S) {
    require_gaussian(k);
    target.validate();
    S.require_finite();
    if (S.dim() != k.dim)
        throw std::invalid_argument("mmd_sq_to_target: point dimension does not match kernel");
    const Eigen::Index s = S.size();
    if (s < 1) throw std::invalid_argument("mmd_sq_to_target: empty coreset");
    const double ppk = target_double_integral(k, target);
    KahanSum embed;
    for (Eigen::Index i = 0; i < s; ++i) embed.add(mean_embedding(k, target, S.row(i)));
    const KernelEvaluator ev(k);
    KahanSum self;
    for (Eigen::Index i = 0; i < s; ++i)
        for (Eigen::Index j = 0; j < s; ++j) self.add(ev(S.row(i), S.row(j)));
    const double sd = static_cast<double>(s);
    const double v = ppk - 2.0 * embed.sum / sd + self.sum / (sd * sd);
    return std::max(0.0, v);
}

}  // namespace kthin
