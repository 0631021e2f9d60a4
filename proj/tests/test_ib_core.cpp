#include <cmath>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vib/ib_core.hpp"

using namespace vib;

namespace {

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("decoder: dead channel and near-noiseless identity channel") {
    std::mt19937_64 rng(1);
    Matrix X, Y;
    oracle::linear_pair(300, 4, 3, rng, X, Y);
    const PairedDataset d = dataset_from_pairs(X, Y);
    LinearEncoder enc{Matrix::Zero(2, 4), 0.5 * Matrix::Identity(2, 2)};
    const Decoder dead = update_decoder(d, enc);
    CHECK(dead.U.isZero(0.0));
    CHECK(max_abs(dead.Lambda - d.Cyy) < 1e-14);

    const PairedDataset id = dataset_from_pairs(X, X);
    LinearEncoder pass{Matrix::Identity(4, 4), 1e-8 * Matrix::Identity(4, 4)};
    const Decoder dec = update_decoder(id, pass);
    CHECK(max_abs(dec.U - Matrix::Identity(4, 4)) < 1e-4);
    CHECK(dec.Lambda.trace() < 1e-6);
}

TEST_CASE("decoder: matches black-box maximization of the relevance term") {
    std::mt19937_64 rng(7);
    Matrix X, Y;
    oracle::linear_pair(200, 5, 2, rng, X, Y);
    const PairedDataset d = dataset_from_pairs(X, Y);
    const Matrix W = oracle::randn(2, 5, rng, 0.5);
    const Matrix Sigma = 0.3 * oracle::random_spd(2, rng);
    const Decoder dec = update_decoder(d, LinearEncoder{W, Sigma});

    // Parameters: U (2×2) then the Cholesky factor of Λ with log diagonal.
    auto unpack = [](const oracle::Vector& p, Matrix& U, Matrix& Lambda) {
        U = Eigen::Map<const Matrix>(p.data(), 2, 2);
        Matrix L = Matrix::Zero(2, 2);
        L(0, 0) = std::exp(p(4));
        L(1, 0) = p(5);
        L(1, 1) = std::exp(p(6));
        Lambda = L * L.transpose();
    };
    auto neg = [&](const oracle::Vector& p) {
        Matrix U, Lambda;
        unpack(p, U, Lambda);
        return -oracle::relevance_loop(X, Y, W, Sigma, U, Lambda);
    };
    oracle::Vector p0 = oracle::Vector::Zero(7);
    const oracle::Vector p = oracle::minimize(neg, p0, 5000, 1e-12);
    Matrix U, Lambda;
    unpack(p, U, Lambda);
    CHECK(max_abs(U - dec.U) < 1e-5);
    CHECK(max_abs(Lambda - dec.Lambda) < 1e-5);
}

TEST_CASE("marginal: update order, gaussian limit and shape bookkeeping") {
    std::mt19937_64 rng(3);
    const Matrix r2 = oracle::randn(500, 3, rng).cwiseAbs2() + Matrix::Constant(500, 3, 0.01);
    StudentMarginal m = initial_marginal(MarginalKind::student, r2, 4.0);
    m.nu << 1.5, 4.0, 20.0;
    const StudentMarginal u = update_marginal(r2, m);
    for (Index i = 0; i < 3; ++i) {
        CHECK(u.a(i) == 0.5 * (m.nu(i) + 1.0));
        CHECK(u.nu(i) == m.nu(i));
        // ξ from the previous ω², ω² from the new ξ.
        const Eigen::ArrayXd xi = (m.nu(i) + 1.0) / (m.nu(i) + r2.col(i).array() / m.omega2(i));
        CHECK(max_abs(u.Xi.col(i) - xi.matrix()) < 1e-15);
        CHECK(u.omega2(i) == doctest::Approx((xi * r2.col(i).array()).mean()).epsilon(1e-14));
    }

    StudentMarginal big = m;
    big.nu.setConstant(1e8);
    const StudentMarginal g = update_marginal(r2, big);
    CHECK((g.Xi.array() - 1.0).abs().maxCoeff() < 1e-6);
    for (Index i = 0; i < 3; ++i) CHECK(g.omega2(i) == doctest::Approx(r2.col(i).mean()).epsilon(1e-6));
}

TEST_CASE("nu: clamping at the gaussian end and root of the stationarity equation") {
    StudentMarginal m;
    m.kind = MarginalKind::student;
    m.omega2 = Vector::Ones(2);
    m.nu = Vector::Constant(2, 1e6);
    m.a = (m.nu.array() + 1.0) / 2.0;
    m.Xi = Matrix::Ones(100, 2);
    int clamps = 0;
    const StudentMarginal c = solve_nu(m, &clamps);
    CHECK(c.nu(0) == kNuMax);
    CHECK(clamps == 2);

    // ψ(z) − log z is negative and increasing, so the bracket is valid.
    double prev = -1e300;
    for (double z = 1e-3; z < 1e4; z *= 1.3) {
        const double v = oracle::digamma(z) - std::log(z);
        CHECK(v < 0.0);
        CHECK(v > prev);
        prev = v;
    }

    std::mt19937_64 rng(5);
    std::gamma_distribution<double> gam(2.0, 0.5);
    for (Index n = 0; n < 100; ++n) m.Xi(n, 0) = m.Xi(n, 1) = gam(rng);
    m.a.setConstant(2.0);
    const StudentMarginal s = solve_nu(m);
    const auto xi = m.Xi.col(0).array();
    const double rhs = 1.0 + oracle::digamma(2.0) - std::log(2.0) + xi.log().mean() - xi.mean();
    const double lhs = oracle::digamma(0.5 * s.nu(0)) - std::log(0.5 * s.nu(0));
    CHECK(s.nu(0) > kNuMin);
    CHECK(s.nu(0) < kNuMax);
    CHECK(std::abs(lhs - rhs) < 1e-10);
}

TEST_CASE("marginal EM on student-t samples matches numeric maximum likelihood") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> g(0.0, 1.0);
    std::chi_squared_distribution<double> chi(3.0);
    const Index n = 10000;
    std::vector<double> r(static_cast<std::size_t>(n));
    Matrix r2(n, 1);
    for (Index k = 0; k < n; ++k) {
        const double v = std::sqrt(2.0) * g(rng) / std::sqrt(chi(rng) / 3.0);
        r[std::size_t(k)] = v;
        r2(k, 0) = v * v;
    }
    StudentMarginal m = initial_marginal(MarginalKind::student, r2);
    for (int it = 0; it < 5000; ++it) {
        const StudentMarginal next = solve_nu(update_marginal(r2, m));
        const bool done = std::abs(next.nu(0) - m.nu(0)) < 1e-12 * m.nu(0) &&
                          std::abs(next.omega2(0) - m.omega2(0)) < 1e-12 * m.omega2(0);
        m = next;
        if (done) break;
    }
    const auto [w2, nu] = oracle::student_mle(r);
    CHECK(m.omega2(0) == doctest::Approx(w2).epsilon(0.02));
    CHECK(m.nu(0) == doctest::Approx(nu).epsilon(0.02));
}

TEST_CASE("sigma: dead decoder, gaussian reduction and stationarity") {
    std::mt19937_64 rng(11);
    fixture::LinearState s = fixture::linear_state(rng, 4, 3, 3, 200, MarginalKind::student);

    Decoder dead = s.dec;
    dead.U.setZero();
    StudentMarginal pinned = s.marg;
    pinned.Xi.setOnes();
    CHECK(max_abs(update_sigma(dead, pinned, s.gamma) - Matrix(s.marg.omega2.asDiagonal())) < 1e-14);
    CHECK(max_abs(update_sigma(s.dec, pinned, s.gamma) - update_sigma_gaussian(s.dec, s.marg.omega2, s.gamma)) <
          1e-10);

    for (MarginalKind kind : {MarginalKind::gaussian, MarginalKind::student}) {
        fixture::LinearState t = fixture::linear_state(rng, 5, 3, 4, 200, kind);
        const Matrix Sigma = kind == MarginalKind::gaussian ? update_sigma_gaussian(t.dec, t.marg.omega2, t.gamma)
                                                            : update_sigma(t.dec, t.marg, t.gamma);
        const ResponseStats stats = linear_stats(t.data, t.W);
        // Symmetric perturbations keep Σ a covariance.
        Matrix fd(4, 4);
        const double h = 1e-6;
        for (Index i = 0; i < 4; ++i) {
            for (Index j = 0; j < 4; ++j) {
                Matrix E = Matrix::Zero(4, 4);
                E(i, j) += 0.5 * h;
                E(j, i) += 0.5 * h;
                fd(i, j) = (objective(t.data, stats, Sigma + E, t.dec, t.marg, t.gamma).value -
                            objective(t.data, stats, Sigma - E, t.dec, t.marg, t.gamma).value) /
                           (2.0 * h);
            }
        }
        CHECK(max_abs(fd) < 1e-6);
        const Matrix gs = grad_Sigma(Sigma, t.dec, t.marg, t.gamma);
        CHECK(max_abs(0.5 * (gs + gs.transpose())) < 1e-8);
    }
}

TEST_CASE("W: gradient matches finite differences and vanishes at the solution") {
    std::mt19937_64 rng(13);
    for (MarginalKind kind : {MarginalKind::gaussian, MarginalKind::student}) {
        fixture::LinearState s = fixture::linear_state(rng, 3, 3, 3, 150, kind);
        auto f = [&](const Matrix& W) {
            return objective(s.data, linear_stats(s.data, W), s.Sigma, s.dec, s.marg, s.gamma).value;
        };
        const Matrix g = grad_W(s.data, s.W, s.dec, s.marg, s.gamma);
        CHECK(fixture::rel_err(g, oracle::fd_gradient(f, s.W, 1e-5)) < 1e-5);

        const Matrix W = solve_W(s.data, s.dec, s.marg, s.gamma);
        CHECK(max_abs(grad_W(s.data, W, s.dec, s.marg, s.gamma)) < 1e-8);
        CHECK(max_abs(oracle::fd_gradient(f, W, 1e-5)) < 1e-6);
    }
}

TEST_CASE("W: dense, iterative and closed-form paths agree") {
    std::mt19937_64 rng(17);
    fixture::LinearState s = fixture::linear_state(rng, 6, 4, 3, 300, MarginalKind::student);
    WSolveOptions dense, iter;
    dense.force_dense = true;
    iter.force_iterative = true;
    iter.tol = 1e-13;
    const Matrix Wd = solve_W(s.data, s.dec, s.marg, s.gamma, dense);
    const Matrix Wi = solve_W(s.data, s.dec, s.marg, s.gamma, iter);
    CHECK(max_abs(Wd - Wi) < 1e-8 * std::max(1.0, max_abs(Wd)));

    StudentMarginal pinned = s.marg;
    pinned.Xi.setOnes();
    const Matrix Wp = solve_W(s.data, s.dec, pinned, s.gamma, dense);
    const Matrix Wg = solve_W_gaussian(s.data, s.dec, s.marg.omega2, s.gamma);
    CHECK(max_abs(Wp - Wg) < 1e-10 * std::max(1.0, max_abs(Wg)));

    // No input/target coupling: W = 0 is the only stationary point.
    Matrix X, Y;
    oracle::linear_pair(100, 4, 2, rng, X, Y);
    const Matrix Q = X.householderQr().householderQ() * Matrix::Identity(100, 4);
    Y -= Q * (Q.transpose() * Y);
    const PairedDataset z = dataset_from_pairs(X, Y);
    REQUIRE(max_abs(z.Cxy) < 1e-12);
    const Decoder dec{oracle::randn(2, 2, rng), oracle::random_spd(2, rng)};
    StudentMarginal m = initial_marginal(MarginalKind::student, Matrix::Ones(100, 2));
    CHECK(max_abs(solve_W(z, dec, m, 0.4)) < 1e-12);
}

TEST_CASE("objective: dead channel reads zero") {
    std::mt19937_64 rng(19);
    Matrix X, Y;
    oracle::linear_pair(100, 3, 2, rng, X, Y);
    const PairedDataset d = dataset_from_pairs(X, Y);
    Matrix Sigma = Matrix::Zero(2, 2);
    Sigma.diagonal() << 0.3, 1.7;
    LinearEncoder enc{Matrix::Zero(2, 3), Sigma};
    const Decoder dec = update_decoder(d, enc);
    StudentMarginal m = initial_marginal(MarginalKind::gaussian, linear_stats(d, enc.W).r2(Sigma));
    CHECK(max_abs(m.omega2 - Sigma.diagonal()) < 1e-15);
    const ObjectiveParts o = objective(d, enc, dec, m, 0.5);
    CHECK(std::abs(o.relevance) < 1e-12);
    CHECK(std::abs(o.compression) < 1e-12);
}

TEST_CASE("objective: agrees with a Monte Carlo estimate") {
    std::mt19937_64 rng(23);
    for (MarginalKind kind : {MarginalKind::gaussian, MarginalKind::student}) {
        fixture::LinearState s = fixture::linear_state(rng, 3, 2, 2, 60, kind);
        const bool student = kind == MarginalKind::student;
        const oracle::McObjective mc =
            oracle::mc_objective(s.data.X, s.data.Y, s.W, s.Sigma, s.dec.U, s.dec.Lambda, s.marg.omega2, s.marg.nu,
                                 s.marg.Xi, s.marg.a, student, s.gamma, 1000000, 99);
        const ObjectiveParts o = objective(s.data, LinearEncoder{s.W, s.Sigma}, s.dec, s.marg, s.gamma);
        CHECK(std::abs(o.relevance - mc.relevance) < 3.0 * mc.relevance_se);
        CHECK(std::abs(o.compression - mc.compression) < 3.0 * mc.compression_se);
        CHECK(std::abs(o.value - mc.value) < 3.0 * mc.value_se);
        // The closed-form relevance also matches the per-sample loop exactly.
        CHECK(o.relevance == doctest::Approx(oracle::relevance_loop(s.data.X, s.data.Y, s.W, s.Sigma, s.dec.U,
                                                                   s.dec.Lambda))
                                 .epsilon(1e-11));
    }
}

TEST_CASE("fit: scalar gaussian channel reaches the analytic optimum") {
    std::mt19937_64 rng(29);
    const Index n = 2000;
    Matrix X = oracle::randn(n, 1, rng);
    Matrix Y = 0.8 * X + 0.6 * oracle::randn(n, 1, rng);
    const PairedDataset d = dataset_from_pairs(X, Y);
    const double rho2 = d.Cxy(0, 0) * d.Cxy(0, 0) / (d.Cxx(0, 0) * d.Cyy(0, 0));
    const double gamma = 0.3;
    REQUIRE(rho2 > gamma);

    BottleneckConfig cfg;
    cfg.gamma = gamma;
    cfg.n_units = 1;
    cfg.marginal = MarginalKind::gaussian;
    cfg.max_iters = 20000;
    cfg.rel_tol = 1e-15;
    cfg.seed = 1;
    const LinearFit fit = fit_sparse_ib(d, cfg);

    // Signal fraction u = w²C_xx/(w²C_xx + σ²) maximizes
    // −½log(1 − ρ²u) + (γ/2)log(1 − u).
    const double u_star = (rho2 - gamma) / (rho2 * (1.0 - gamma));
    const double L_star = -0.5 * std::log(1.0 - rho2 * u_star) + 0.5 * gamma * std::log(1.0 - u_star);
    const double s = fit.enc.W(0, 0) * fit.enc.W(0, 0) * d.Cxx(0, 0);
    const double u = s / (s + fit.enc.Sigma(0, 0));
    CHECK(u == doctest::Approx(u_star).epsilon(1e-6));
    const double L = objective(d, fit.enc, fit.dec, fit.marg, gamma).value;
    CHECK(std::abs(L - L_star) < 1e-6);
}

TEST_CASE("fit: stationarity, PD preservation and ascent per update") {
    std::mt19937_64 rng(31);
    for (MarginalKind kind : {MarginalKind::gaussian, MarginalKind::student}) {
        Matrix X, Y;
        oracle::linear_pair(300, 4, 3, rng, X, Y, true);
        const PairedDataset d = dataset_from_pairs(X, Y);
        BottleneckConfig cfg;
        cfg.gamma = 0.4;
        cfg.n_units = 2;
        cfg.marginal = kind;
        cfg.max_iters = 20000;
        cfg.rel_tol = 1e-15;
        cfg.seed = 3;
        double prev = -1e300;
        int drops = 0;
        const LinearFit fit = fit_sparse_ib(d, cfg, nullptr, [&](int, UpdateStep, double v) {
            if (v < prev - 1e-8 * std::abs(prev)) ++drops;
            prev = v;
        });
        CHECK(drops == 0);
        CHECK(min_eigenvalue(fit.enc.Sigma) > 0.0);
        CHECK(min_eigenvalue(fit.dec.Lambda) > 0.0);
        CHECK(max_abs(grad_W(d, fit.enc.W, fit.dec, fit.marg, cfg.gamma)) < 1e-6);
        CHECK(grad_Sigma(fit.enc.Sigma, fit.dec, fit.marg, cfg.gamma).norm() < 1e-6);
    }
}

TEST_CASE("initial encoder is seeded") {
    const LinearEncoder a = initial_encoder(50, 81, 4);
    CHECK(a.W == initial_encoder(50, 81, 4).W);
    CHECK(a.W != initial_encoder(50, 81, 5).W);
    CHECK(a.Sigma == 0.1 * Matrix::Identity(50, 50));
    CHECK(a.W.array().square().mean() == doctest::Approx(1.0 / 81).epsilon(0.05));
}
