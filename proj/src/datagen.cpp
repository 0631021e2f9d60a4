#include "vib/datagen.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace vib {

void PatchSpec::validate() const {
    if (side < 3) throw InvalidArgument("patch side must be >= 3");
    if (n_bars < 0) throw InvalidArgument("n_bars must be >= 0");
    if (!(bar_width > 0)) throw InvalidArgument("bar_width must be > 0");
    if (!(amplitude_std > 0)) throw InvalidArgument("amplitude_std must be > 0");
}

void NoiseSpec::validate() const {
    if (kind == NoiseKind::white || kind == NoiseKind::correlated) {
        if (!(variance > 0)) throw InvalidArgument("noise variance must be > 0");
    }
    if (kind == NoiseKind::correlated && !(envelope_std_v > 0 && envelope_std_h > 0))
        throw InvalidArgument("correlated noise envelope stds must be > 0");
}

void add_bar(Eigen::Ref<RowVector, 0, Eigen::InnerStride<>> image, int side, const BarParams& bar, double bar_width) {
    const double centre = 0.5 * (side - 1);
    // Unit normal of the bar's centre line.
    const double nx = -std::sin(bar.angle);
    const double ny = std::cos(bar.angle);
    const double inv2w2 = 1.0 / (2.0 * bar_width * bar_width);
    for (int v = 0; v < side; ++v) {
        const double y = centre - v;
        for (int h = 0; h < side; ++h) {
            const double x = h - centre;
            const double dist = x * nx + y * ny - bar.offset;
            image(v * side + h) += bar.amplitude * std::exp(-dist * dist * inv2w2);
        }
    }
}

std::vector<BarParams> draw_bar_params(const PatchSpec& spec, Index n_patches) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    const double reach = spec.side / std::numbers::sqrt2;
    std::uniform_real_distribution<double> offset(-reach, reach);
    std::normal_distribution<double> amplitude(0.0, spec.amplitude_std);

    std::vector<BarParams> bars;
    bars.reserve(std::size_t(n_patches) * std::size_t(spec.n_bars));
    for (Index n = 0; n < n_patches; ++n) {
        for (int b = 0; b < spec.n_bars; ++b) {
            BarParams p;
            p.angle = angle(rng);
            p.offset = offset(rng);
            p.amplitude = amplitude(rng);
            bars.push_back(p);
        }
    }
    return bars;
}

Matrix generate_bar_patches(const PatchSpec& spec, Index n_patches) {
    if (n_patches < 0) throw InvalidArgument("n_patches must be >= 0");
    const auto bars = draw_bar_params(spec, n_patches);
    Matrix patches = Matrix::Zero(n_patches, Index(spec.side) * spec.side);
    std::size_t k = 0;
    for (Index n = 0; n < n_patches; ++n)
        for (int b = 0; b < spec.n_bars; ++b)
            add_bar(patches.row(n), spec.side, bars[k++], spec.bar_width);
    return patches;
}

Matrix noise_covariance(const NoiseSpec& noise, int side) {
    noise.validate();
    const Index d = Index(side) * side;
    if (noise.kind == NoiseKind::white) return noise.variance * Matrix::Identity(d, d);

    Matrix cov(d, d);
    const double sv = 2.0 * noise.envelope_std_v * noise.envelope_std_v;
    const double sh = 2.0 * noise.envelope_std_h * noise.envelope_std_h;
    for (Index p = 0; p < d; ++p) {
        const double vp = double(p / side), hp = double(p % side);
        for (Index q = 0; q < d; ++q) {
            const double dv = vp - double(q / side), dh = hp - double(q % side);
            cov(p, q) = noise.variance * std::exp(-dv * dv / sv - dh * dh / sh);
        }
    }
    return cov;
}

Matrix apply_noise(const Matrix& patches, const NoiseSpec& noise, int side, std::uint64_t seed) {
    noise.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix X = patches;

    if (noise.kind == NoiseKind::white) {
        const double sd = std::sqrt(noise.variance);
        for (Index n = 0; n < X.rows(); ++n)
            for (Index j = 0; j < X.cols(); ++j) X(n, j) += sd * normal(rng);
        return X;
    }

    if (patches.cols() != Index(side) * side)
        throw InvalidArgument("correlated noise needs side×side patches");
    Matrix cov = noise_covariance(noise, side);
    symmetrize(cov);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) throw NumericalError("noise covariance eigendecomposition failed");
    const Vector& ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-8 * std::max(1.0, ev.maxCoeff()))
        throw NumericalError("noise covariance is not positive semi-definite");
    const Matrix root = es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();

    Matrix z(X.rows(), X.cols());
    for (Index n = 0; n < z.rows(); ++n)
        for (Index j = 0; j < z.cols(); ++j) z(n, j) = normal(rng);
    X.noalias() += z * root.transpose();
    return X;
}

PairedDataset dataset_from_pairs(Matrix X, Matrix Y) {
    if (X.rows() != Y.rows()) throw InvalidArgument("X and Y row counts differ");
    if (X.rows() < 1) throw InvalidArgument("dataset needs at least one sample");
    PairedDataset d;
    const double inv_n = 1.0 / double(X.rows());
    d.Cxx.noalias() = inv_n * X.transpose() * X;
    d.Cxy.noalias() = inv_n * X.transpose() * Y;
    d.Cyy.noalias() = inv_n * Y.transpose() * Y;
    symmetrize(d.Cxx);
    symmetrize(d.Cyy);
    d.X = std::move(X);
    d.Y = std::move(Y);

    // The relevance bound is offset by ½log|C_yy|; rank-deficient targets get
    // the same jitter repair as Λ so the constant stays finite.
    Matrix cyy = d.Cyy;
    repair_pd(cyy);
    d.log_det_cyy = d.dim_y() ? log_det_spd(cyy, "C_yy") : 0.0;
    return d;
}

OcclusionLayout occlusion_layout(int side, int left_cols, int right_cols) {
    if (side < 1 || left_cols < 0 || right_cols < 0)
        throw InvalidArgument("occlusion split: negative geometry");
    if (left_cols + right_cols == 0) throw InvalidArgument("occlusion split: X would be empty");
    if (left_cols + right_cols >= side) throw InvalidArgument("occlusion split: Y would be empty");
    OcclusionLayout l;
    l.side = side;
    l.left_cols = left_cols;
    l.right_cols = right_cols;
    for (int v = 0; v < side; ++v) {
        for (int h = 0; h < side; ++h) {
            const Index p = Index(v) * side + h;
            if (h < left_cols || h >= side - right_cols)
                l.x_pixels.push_back(p);
            else
                l.y_pixels.push_back(p);
        }
    }
    return l;
}

PairedDataset make_occlusion_split(const Matrix& patches, int side, int left_cols, int right_cols) {
    const auto l = occlusion_layout(side, left_cols, right_cols);
    if (patches.cols() != Index(side) * side) throw InvalidArgument("occlusion split: patch size mismatch");
    Matrix X(patches.rows(), Index(l.x_pixels.size()));
    Matrix Y(patches.rows(), Index(l.y_pixels.size()));
    for (Index j = 0; j < X.cols(); ++j) X.col(j) = patches.col(l.x_pixels[j]);
    for (Index j = 0; j < Y.cols(); ++j) Y.col(j) = patches.col(l.y_pixels[j]);
    return dataset_from_pairs(std::move(X), std::move(Y));
}

Matrix reassemble_occlusion(const Matrix& X, const Matrix& Y, const OcclusionLayout& l) {
    Matrix patches(X.rows(), Index(l.side) * l.side);
    for (Index j = 0; j < X.cols(); ++j) patches.col(l.x_pixels[j]) = X.col(j);
    for (Index j = 0; j < Y.cols(); ++j) patches.col(l.y_pixels[j]) = Y.col(j);
    return patches;
}

}  // namespace vib
