#pragma once

// Random but valid solver states shared by the unit and acceptance tests.

#include <random>

#include "oracles.hpp"
#include "vib/ib_core.hpp"
#include "vib/kernel_ib.hpp"

namespace fixture {

using namespace vib;

struct LinearState {
    PairedDataset data;
    Matrix W;
    Matrix Sigma;
    Decoder dec;
    StudentMarginal marg;
    double gamma = 0.5;
};

// Random data, encoder, decoder and marginal. The marginal is moved away from
// its initialization so that ξ, ω² and ν are all non-trivial.
inline LinearState linear_state(std::mt19937_64& rng, Index dx, Index dy, Index nr, Index n, MarginalKind kind) {
    LinearState s;
    Matrix X, Y;
    oracle::linear_pair(n, dx, dy, rng, X, Y, true);
    s.data = dataset_from_pairs(X, Y);
    s.W = oracle::randn(nr, dx, rng, 1.0 / std::sqrt(double(dx)));
    s.Sigma = 0.3 * oracle::random_spd(nr, rng, 0.2);
    const ResponseStats stats = linear_stats(s.data, s.W);
    s.dec = update_decoder(s.data, stats, s.Sigma);
    s.dec.U += 0.1 * oracle::randn(dy, nr, rng);
    s.dec.Lambda += 0.1 * oracle::random_spd(dy, rng, 0.1);
    const Matrix r2 = stats.r2(s.Sigma);
    s.marg = initial_marginal(kind, r2);
    if (kind == MarginalKind::student) {
        for (int k = 0; k < 3; ++k) s.marg = solve_nu(update_marginal(r2, s.marg));
    }
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (Index i = 0; i < nr; ++i) s.marg.omega2(i) *= u(rng);
    std::uniform_real_distribution<double> gam(0.1, 0.9);
    s.gamma = gam(rng);
    return s;
}

struct DualState {
    PairedDataset data;
    DualProblem prob;
    Matrix A;
    Matrix Sigma;
    Decoder dec;
    StudentMarginal marg;
    double gamma = 0.5;
};

// Random dual problem on m of the n samples (all of them, in order, when
// m == n).
inline DualState dual_state(std::mt19937_64& rng, Index dx, Index dy, Index nr, Index n, Index m,
                            MarginalKind kind, double lambda) {
    DualState s;
    Matrix X, Y;
    oracle::linear_pair(n, dx, dy, rng, X, Y, true);
    s.data = dataset_from_pairs(X, Y);
    const bool full = m == n;
    const std::vector<Index> subset = full ? identity_subset(n) : draw_subset(n, m, rng());
    KernelConfig k;
    k.kappa = 1.5 * median_pairwise_distance(X);
    k.lambda = lambda;
    s.prob = make_dual_problem(s.data, subset, k);
    s.A = oracle::randn(nr, m, rng, 1.0 / std::sqrt(double(m)));
    s.Sigma = 0.3 * oracle::random_spd(nr, rng, 0.2);
    const ResponseStats stats = dual_stats(s.prob, s.A);
    s.dec = update_decoder(s.data, stats, s.Sigma);
    s.dec.U += 0.1 * oracle::randn(dy, nr, rng);
    s.dec.Lambda += 0.1 * oracle::random_spd(dy, rng, 0.1);
    const Matrix r2 = stats.r2(s.Sigma);
    s.marg = initial_marginal(kind, r2);
    if (kind == MarginalKind::student) {
        for (int k2 = 0; k2 < 3; ++k2) s.marg = solve_nu(update_marginal(r2, s.marg));
    }
    std::uniform_real_distribution<double> gam(0.1, 0.9);
    s.gamma = gam(rng);
    return s;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

}  // namespace fixture
