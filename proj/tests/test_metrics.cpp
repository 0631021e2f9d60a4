#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vib/datagen.hpp"
#include "vib/metrics.hpp"

using namespace vib;

namespace {

constexpr double kPi = std::numbers::pi;

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

// 1-D pair with exact second moments C_xx = 1, C_yy = 1, C_xy = rho.
PairedDataset exact_pair(double rho, Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix target(2, 2);
    target << 1.0, rho, rho, 1.0;
    const Matrix Z = oracle::with_exact_moments(oracle::randn(n, 2, rng), target);
    return dataset_from_pairs(Z.col(0), Z.col(1));
}

}  // namespace

TEST_CASE("relevance bound: dead channel and noiseless 1-D channel") {
    const double rho = 0.8;
    const PairedDataset d = exact_pair(rho, 4000, 1);
    LinearEncoder dead{Matrix::Zero(1, 1), Matrix::Identity(1, 1)};
    CHECK(std::abs(relevance_bound(d, dead, update_decoder(d, dead))) < 1e-14);

    LinearEncoder pass{Matrix::Ones(1, 1), 1e-13 * Matrix::Identity(1, 1)};
    const double rb = relevance_bound(d, pass, update_decoder(d, pass));
    CHECK(std::abs(rb - oracle::gaussian_mi_quadrature(rho)) < 1e-6);
    CHECK(std::abs(rb - 0.5 * std::log(1.0 / (1.0 - rho * rho))) < 1e-9);
}

TEST_CASE("compression bound: dead channel, 1-D gaussian tightness and student comparison") {
    std::mt19937_64 rng(2);
    Matrix X, Y;
    oracle::linear_pair(100, 3, 2, rng, X, Y);
    const PairedDataset d0 = dataset_from_pairs(X, Y);
    Matrix Sigma = Matrix::Zero(2, 2);
    Sigma.diagonal() << 0.5, 2.0;
    LinearEncoder dead{Matrix::Zero(2, 3), Sigma};
    StudentMarginal g0 = initial_marginal(MarginalKind::gaussian, linear_stats(d0, dead.W).r2(Sigma));
    CHECK(std::abs(compression_bound(dead, d0, g0)) < 1e-14);

    const PairedDataset d = exact_pair(0.5, 3000, 3);
    const double w = 1.3, s2 = 0.4;
    LinearEncoder enc{Matrix::Constant(1, 1, w), Matrix::Constant(1, 1, s2)};
    const Matrix r2 = linear_stats(d, enc.W).r2(enc.Sigma);
    const StudentMarginal gm = initial_marginal(MarginalKind::gaussian, r2);
    const double cg = compression_bound(enc, d, gm);
    // Population channel with gaussian input: correlation² of (R, X) is t/(1+t).
    const double t = w * w / s2;
    CHECK(std::abs(cg - oracle::gaussian_mi_quadrature(std::sqrt(t / (1.0 + t)))) < 1e-6);
    std::vector<double> xs(d.X.data(), d.X.data() + d.size());
    CHECK(cg >= oracle::mixture_channel_mi(xs, w, s2) - 1e-9);

    StudentMarginal sm = initial_marginal(MarginalKind::student, r2);
    for (int k = 0; k < 200; ++k) sm = solve_nu(update_marginal(r2, sm));
    CHECK(compression_bound(enc, d, sm) >= cg - 1e-9);
}

TEST_CASE("rotations: relevance invariant, objective invariant under signed permutations") {
    std::mt19937_64 rng(4);
    fixture::LinearState s = fixture::linear_state(rng, 5, 3, 3, 200, MarginalKind::gaussian);
    const LinearEncoder enc{s.W, s.Sigma};
    const Matrix Q = oracle::randn(3, 3, rng).householderQr().householderQ();
    const LinearEncoder rot{Q * s.W, Q * s.Sigma * Q.transpose()};
    const Decoder drot{s.dec.U * Q.transpose(), s.dec.Lambda};
    CHECK(std::abs(relevance_bound(s.data, enc, s.dec) - relevance_bound(s.data, rot, drot)) < 1e-9);

    Matrix P = Matrix::Zero(3, 3);
    P(0, 2) = -1.0;
    P(1, 0) = 1.0;
    P(2, 1) = -1.0;
    const LinearEncoder perm{P * s.W, P * s.Sigma * P.transpose()};
    const Decoder dperm{s.dec.U * P.transpose(), s.dec.Lambda};
    StudentMarginal mperm = s.marg;
    mperm.omega2 = (P.cwiseAbs() * s.marg.omega2).eval();
    const double a = objective(s.data, enc, s.dec, s.marg, s.gamma).value;
    const double b = objective(s.data, perm, dperm, mperm, s.gamma).value;
    CHECK(std::abs(a - b) < 1e-9);
}

TEST_CASE("bound sandwich on 1-D gaussian data") {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 4; ++k) {
        const double rho = 0.3 + 0.15 * k;
        const PairedDataset d = exact_pair(rho, 800, 10 + k);
        LinearEncoder enc{Matrix::Constant(1, 1, 0.5 + 0.4 * k), Matrix::Constant(1, 1, 0.3)};
        const Decoder dec = update_decoder(d, enc);
        const double t = enc.W(0, 0) * enc.W(0, 0) / 0.3;
        const double true_ry = oracle::gaussian_mi_quadrature(rho * std::sqrt(t / (1.0 + t)));
        CHECK(relevance_bound(d, enc, dec) <= true_ry + 1e-9);
        Decoder off = dec;
        off.U *= 0.7;
        CHECK(relevance_bound(d, enc, off) < true_ry);
    }
}

TEST_CASE("unit reports") {
    std::mt19937_64 rng(6);
    const Matrix X = oracle::randn(2000, 3, rng);
    const PairedDataset d = dataset_from_pairs(X, X.leftCols(1));
    Matrix W = oracle::randn(4, 3, rng);
    W.row(2).setZero();
    Matrix Sigma = Matrix::Identity(4, 4);
    Sigma(0, 0) = 1e-14;
    const auto reps = unit_reports(LinearEncoder{W, Sigma}, d);
    REQUIRE(reps.size() == 4);
    std::vector<int> seen(4, 0);
    for (std::size_t k = 0; k < reps.size(); ++k) {
        ++seen[std::size_t(reps[k].unit)];
        CHECK(reps[k].signal_fraction >= 0.0);
        CHECK(reps[k].signal_fraction <= 1.0);
        if (k) CHECK(reps[k].variance <= reps[k - 1].variance);
        if (reps[k].unit == 0) CHECK(reps[k].signal_fraction == doctest::Approx(1.0).epsilon(1e-12));
        if (reps[k].unit == 2) CHECK(reps[k].signal_fraction == 0.0);
        if (reps[k].unit != 2) CHECK(std::abs(reps[k].excess_kurtosis) < 0.2);
    }
    CHECK(seen == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("reconstruction is linear") {
    std::mt19937_64 rng(7);
    const Decoder dec{oracle::randn(5, 3, rng), Matrix::Identity(5, 5)};
    const Matrix r1 = oracle::randn(4, 3, rng), r2 = oracle::randn(4, 3, rng);
    CHECK(reconstruct(dec, Matrix::Zero(4, 3)).isZero(0.0));
    CHECK(max_abs(reconstruct(dec, r1 + r2) - reconstruct(dec, r1) - reconstruct(dec, r2)) < 1e-14);
}

TEST_CASE("information curves: closing bottleneck, monotone compression, null model") {
    std::mt19937_64 rng(8);
    Matrix X, Y;
    oracle::linear_pair(400, 4, 3, rng, X, Y);
    const PairedDataset d = dataset_from_pairs(X, Y);
    BottleneckConfig cfg;
    cfg.n_units = 3;
    cfg.marginal = MarginalKind::gaussian;
    cfg.max_iters = 3000;
    cfg.rel_tol = 1e-12;
    cfg.seed = 1;
    const std::vector<double> grid{0.999, 0.8, 0.6, 0.4, 0.2, 0.05};
    const auto curve = info_curve(d, cfg, grid);
    REQUIRE(curve.size() == grid.size());
    CHECK(curve[0].ok);
    CHECK(curve[0].compression_bound < 1e-4);
    CHECK(curve[0].relevance_bound < 1e-4);
    int violations = 0;
    for (std::size_t k = 1; k < curve.size(); ++k) {
        CHECK(curve[k].ok);
        if (curve[k].compression_bound < curve[k - 1].compression_bound - 1e-9) ++violations;
        CHECK(curve[k].gamma == grid[k]);
    }
    CHECK(violations <= 1);
    CHECK_THROWS_AS(info_curve(d, cfg, {0.2, 0.5}), InvalidArgument);

    const auto null = null_model_curve(d, default_null_grid(d));
    for (std::size_t k = 1; k < null.size(); ++k) {
        CHECK(null[k].compression_bound < null[k - 1].compression_bound);
        CHECK(null[k].relevance_bound < null[k - 1].relevance_bound);
    }
}

TEST_CASE("orientation of rendered bars") {
    for (double offset : {0.0, 1.5, -3.0}) {
        for (int deg = 0; deg < 180; deg += 10) {
            Eigen::RowVectorXd img = Eigen::RowVectorXd::Zero(81);
            oracle::render_bar(img, 9, deg * kPi / 180.0, offset, 1.0, 1.2);
            const double est = dominant_orientation(img, 9, 9) * 180.0 / kPi;
            double err = std::abs(est - deg);
            err = std::min(err, 180.0 - err);
            INFO("angle ", deg, " offset ", offset, " estimate ", est);
            CHECK(err < 5.0);
        }
    }
    CHECK(std::isnan(dominant_orientation(Eigen::RowVectorXd::Zero(81), 9, 9)));

    Matrix filters = Matrix::Zero(3, 81);
    oracle::render_bar(filters.row(0), 9, 0.0, 1.0, 1.0, 1.2);
    oracle::render_bar(filters.row(1), 9, kPi / 2, 0.0, -2.0, 1.2);
    const Vector w = Vector::Constant(3, 1.0);
    const OrientationHistogram h = orientation_distribution(filters, 9, 9, w);
    REQUIRE(h.weights.size() == 18);
    CHECK(h.weights[0] == 0.5);
    CHECK(h.weights[9] == 0.5);
    CHECK(std::isnan(h.unit_angle[2]));
}

TEST_CASE("histogram minimum bin") {
    CHECK(histogram_min_bin({3, 1, 2, 5}) == 1);
    CHECK(histogram_min_bin({1, 1, 1, 1}) == 0);
    // Longest circular run of zeros is bins 7..11: middle 9.
    std::vector<double> h(18, 1.0);
    for (int b = 7; b <= 11; ++b) h[std::size_t(b)] = 0.0;
    h[2] = 0.0;
    CHECK(histogram_min_bin(h) == 9);
    // Run wrapping around the end: 16, 17, 0 → middle 17.
    std::vector<double> w(18, 2.0);
    w[16] = w[17] = w[0] = 0.5;
    CHECK(histogram_min_bin(w) == 17);
    // Even run 4..7: lower middle 5.
    std::vector<double> e(18, 2.0);
    for (int b = 4; b <= 7; ++b) e[std::size_t(b)] = 0.0;
    CHECK(histogram_min_bin(e) == 5);
}

TEST_CASE("excess kurtosis and median") {
    std::mt19937_64 rng(9);
    std::exponential_distribution<double> ex(1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    Vector lap(100000);
    for (Index k = 0; k < lap.size(); ++k) lap(k) = (ex(rng) - ex(rng));
    CHECK(excess_kurtosis(lap) == doctest::Approx(3.0).epsilon(0.1));
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}
