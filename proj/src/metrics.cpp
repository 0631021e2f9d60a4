#include "vib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace vib {

double relevance_bound(const PairedDataset& data, const ResponseStats& stats, const Matrix& Sigma,
                       const Decoder& dec) {
    return relevance_term(data, stats, Sigma, dec);
}

double relevance_bound(const PairedDataset& data, const LinearEncoder& enc, const Decoder& dec) {
    return relevance_term(data, linear_stats(data, enc.W), enc.Sigma, dec);
}

double compression_bound(const ResponseStats& stats, const Matrix& Sigma, const StudentMarginal& marg) {
    return compression_term(stats, Sigma, marg);
}

double compression_bound(const LinearEncoder& enc, const PairedDataset& data, const StudentMarginal& marg) {
    return compression_term(linear_stats(data, enc.W), enc.Sigma, marg);
}

double excess_kurtosis(const Eigen::Ref<const Vector>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = v.mean();
    const Eigen::ArrayXd c = v.array() - mu;
    const double m2 = c.square().mean();
    if (!(m2 > 0)) return 0.0;
    const double m4 = c.square().square().mean();
    return m4 / (m2 * m2) - 3.0;
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<UnitReport> unit_reports(const ResponseStats& stats, const Matrix& Sigma) {
    const Matrix second = stats.second_moment();
    std::vector<UnitReport> out;
    for (Index i = 0; i < stats.mean.cols(); ++i) {
        UnitReport r;
        r.unit = i;
        const double signal = std::max(second(i, i), 0.0);
        const double total = signal + Sigma(i, i);
        r.signal_fraction = total > 0 ? std::clamp(signal / total, 0.0, 1.0) : 0.0;
        const Vector col = stats.mean.col(i);
        r.variance = (col.array() - col.mean()).square().mean();
        r.excess_kurtosis = excess_kurtosis(col);
        out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const UnitReport& a, const UnitReport& b) { return a.variance > b.variance; });
    return out;
}

std::vector<UnitReport> unit_reports(const LinearEncoder& enc, const PairedDataset& data) {
    return unit_reports(linear_stats(data, enc.W), enc.Sigma);
}

double median_excess_kurtosis(const std::vector<UnitReport>& reports) {
    std::vector<double> k;
    for (const auto& r : reports) k.push_back(r.excess_kurtosis);
    return median(std::move(k));
}

Matrix reconstruct(const Decoder& dec, const Matrix& responses) {
    return responses * dec.U.transpose();
}

namespace {

void check_grid(const std::vector<double>& grid) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (!(grid[k] > 0 && grid[k] < 1)) throw InvalidArgument("gamma grid values must lie in (0, 1)");
        if (k && !(grid[k] < grid[k - 1])) throw InvalidArgument("gamma grid must be sorted descending");
    }
}

// Units a strong bottleneck switched off stay near the W = 0 fixed point
// when warm-started; give them a fresh random start for the next γ.
template <typename Enc>
void reseed_dead_units(Enc& W, Matrix& Sigma, const ResponseStats& stats, std::uint64_t seed) {
    const auto reports = unit_reports(stats, Sigma);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(std::max<Index>(W.cols(), 1))));
    for (const auto& r : reports) {
        if (r.signal_fraction >= 1e-2) continue;
        const Index i = r.unit;
        for (Index j = 0; j < W.cols(); ++j) W(i, j) = normal(rng);
        Sigma.row(i).setZero();
        Sigma.col(i).setZero();
        Sigma(i, i) = 0.1;
    }
}

}  // namespace

std::vector<InfoPoint> info_curve(const PairedDataset& data, const BottleneckConfig& cfg,
                                  const std::vector<double>& gamma_grid, std::vector<LinearFit>* fits) {
    check_grid(gamma_grid);
    std::vector<InfoPoint> curve;
    LinearFit prev;
    bool have_prev = false;
    for (std::size_t k = 0; k < gamma_grid.size(); ++k) {
        BottleneckConfig c = cfg;
        c.gamma = gamma_grid[k];
        InfoPoint pt;
        pt.gamma = c.gamma;
        try {
            if (have_prev) {
                reseed_dead_units(prev.enc.W, prev.enc.Sigma, linear_stats(data, prev.enc.W), cfg.seed + k);
            }
            LinearFit fit = fit_sparse_ib(data, c, have_prev ? &prev : nullptr);
            const ResponseStats stats = linear_stats(data, fit.enc.W);
            const auto parts = objective(data, stats, fit.enc.Sigma, fit.dec, fit.marg, c.gamma);
            pt.relevance_bound = parts.relevance;
            pt.compression_bound = parts.compression;
            pt.objective = parts.value;
            if (fits) fits->push_back(fit);
            prev = std::move(fit);
            have_prev = true;
        } catch (const Error& e) {
            pt.ok = false;
            pt.error = e.what();
        }
        curve.push_back(pt);
    }
    return curve;
}

std::vector<InfoPoint> kernel_info_curve(const PairedDataset& data, const DualProblem& prob, const KrrResult& krr,
                                         const std::vector<Index>& subset, const BottleneckConfig& cfg,
                                         const std::vector<double>& gamma_grid, std::vector<KernelFit>* fits) {
    check_grid(gamma_grid);
    std::vector<InfoPoint> curve;
    KernelFit prev;
    bool have_prev = false;
    for (std::size_t k = 0; k < gamma_grid.size(); ++k) {
        BottleneckConfig c = cfg;
        c.gamma = gamma_grid[k];
        InfoPoint pt;
        pt.gamma = c.gamma;
        try {
            if (have_prev) reseed_dead_units(prev.enc.A, prev.enc.Sigma, dual_stats(prob, prev.enc.A), cfg.seed + k);
            KernelFit fit = fit_dual_ib(data, prob, krr, subset, c, have_prev ? &prev : nullptr);
            const auto parts = objective(data, dual_stats(prob, fit.enc.A), fit.enc.Sigma, fit.dec, fit.marg, c.gamma);
            pt.relevance_bound = parts.relevance;
            pt.compression_bound = parts.compression;
            pt.objective = parts.value;
            if (fits) fits->push_back(fit);
            prev = std::move(fit);
            have_prev = true;
        } catch (const Error& e) {
            pt.ok = false;
            pt.error = e.what();
        }
        curve.push_back(pt);
    }
    return curve;
}

std::vector<InfoPoint> null_model_curve(const PairedDataset& data, const std::vector<double>& sigma2_grid) {
    const Index dx = data.dim_x();
    const ResponseStats stats = linear_stats(data, Matrix::Identity(dx, dx));
    std::vector<InfoPoint> curve;
    for (double s2 : sigma2_grid) {
        InfoPoint pt;
        pt.gamma = 0.0;
        try {
            if (!(s2 > 0)) throw InvalidArgument("null model noise variance must be > 0");
            const Matrix Sigma = s2 * Matrix::Identity(dx, dx);
            const Decoder dec = update_decoder(data, stats, Sigma);
            const StudentMarginal marg = initial_marginal(MarginalKind::gaussian, stats.r2(Sigma));
            pt.relevance_bound = relevance_term(data, stats, Sigma, dec);
            pt.compression_bound = compression_term(stats, Sigma, marg);
            pt.objective = pt.relevance_bound;
        } catch (const Error& e) {
            pt.ok = false;
            pt.error = e.what();
        }
        curve.push_back(pt);
    }
    return curve;
}

std::vector<double> default_null_grid(const PairedDataset& data, int points) {
    const double v = data.Cxx.trace() / double(std::max<Index>(data.dim_x(), 1));
    std::vector<double> g;
    for (int k = 0; k < points; ++k) {
        const double e = -4.0 + 6.0 * double(k) / double(std::max(points - 1, 1));
        g.push_back(v * std::pow(10.0, e));
    }
    return g;
}

double dominant_orientation(const Eigen::Ref<const RowVector>& filter, int height, int width) {
    if (filter.size() != Index(height) * width) throw InvalidArgument("orientation: filter size mismatch");
    if (filter.squaredNorm() < 1e-12) return std::numeric_limits<double>::quiet_NaN();
    constexpr int radii = 32;
    constexpr int candidates = 180;
    const double pi = std::numbers::pi;

    // Circular taper with the tapered mean removed: the square patch edge and
    // the DC leakage would otherwise pull estimates towards the grid axes.
    const Index n = filter.size();
    const double cy = 0.5 * (height - 1), cx = 0.5 * (width - 1);
    const double radius = 0.5 * std::max(height, width) + 0.5;
    Vector x(n), y(n), taper(n);
    for (int v = 0; v < height; ++v) {
        for (int h = 0; h < width; ++h) {
            const Index k = Index(v) * width + h;
            x(k) = h - cx;
            y(k) = cy - v;
            const double r = std::hypot(x(k), y(k));
            taper(k) = r < radius ? 0.5 * (1.0 + std::cos(pi * r / radius)) : 0.0;
        }
    }
    const double tmean = taper.dot(filter.transpose()) / taper.sum();
    const Vector f = taper.cwiseProduct((filter.transpose().array() - tmean).matrix());

    // Spectral energy along each candidate's normal, sampled on a polar grid
    // up to the Nyquist radius; a bar runs perpendicular to that normal.
    std::vector<double> energy(candidates, 0.0);
    for (int c = 0; c < candidates; ++c) {
        const double t = pi * c / candidates;
        const Vector proj = -std::sin(t) * x + std::cos(t) * y;
        for (int j = 0; j < radii; ++j) {
            const double rho = 0.5 * (j + 0.5) / radii;
            double re = 0.0, im = 0.0;
            for (Index k = 0; k < n; ++k) {
                const double phase = 2.0 * pi * rho * proj(k);
                re += f(k) * std::cos(phase);
                im -= f(k) * std::sin(phase);
            }
            energy[std::size_t(c)] += rho * (re * re + im * im);
        }
    }
    const auto best = std::max_element(energy.begin(), energy.end()) - energy.begin();
    return pi * double(best) / candidates;
}

OrientationHistogram orientation_distribution(const Matrix& filters, int height, int width, const Vector& weights,
                                              int bins) {
    if (filters.cols() != Index(height) * width) throw InvalidArgument("orientation: filter size mismatch");
    if (weights.size() != filters.rows()) throw InvalidArgument("orientation: one weight per filter");
    const double pi = std::numbers::pi;
    OrientationHistogram h;
    h.weights.assign(std::size_t(bins), 0.0);
    double total = 0.0;
    for (Index k = 0; k < filters.rows(); ++k) {
        const double angle = dominant_orientation(filters.row(k), height, width);
        h.unit_angle.push_back(angle);
        if (std::isnan(angle)) continue;
        // Bin b covers [b − ½, b + ½)·π/bins, so bin 0 contains 0 rad.
        int b = int(std::floor(angle / pi * bins + 0.5)) % bins;
        h.weights[std::size_t(b)] += weights(k);
        total += weights(k);
    }
    if (total > 0)
        for (auto& w : h.weights) w /= total;
    return h;
}

int histogram_min_bin(const std::vector<double>& weights) {
    const int n = int(weights.size());
    if (n == 0) return -1;
    const double lo = *std::min_element(weights.begin(), weights.end());
    auto at_min = [&](int b) { return weights[std::size_t(((b % n) + n) % n)] <= lo; };
    if (std::all_of(weights.begin(), weights.end(), [&](double w) { return w <= lo; })) return 0;
    // Longest circular run of minimal bins; the first one wins ties.
    int best_start = -1, best_len = 0;
    for (int b = 0; b < n; ++b) {
        if (!at_min(b) || at_min(b - 1)) continue;
        int len = 0;
        while (at_min(b + len)) ++len;
        if (len > best_len) {
            best_len = len;
            best_start = b;
        }
    }
    return (best_start + (best_len - 1) / 2) % n;
}

}  // namespace vib
