#include "vib/kernel_ib.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>

#include "alternating.hpp"

namespace vib {
namespace {

struct DecoderProducts {
    Matrix LinvU;
    Matrix B;
};

DecoderProducts decoder_products(const Decoder& dec) {
    Eigen::LLT<Matrix> llt(dec.Lambda);
    if (llt.info() != Eigen::Success) throw NumericalError("decoder covariance Λ is not positive definite");
    DecoderProducts p;
    p.LinvU = llt.solve(dec.U);
    p.B.noalias() = dec.U.transpose() * p.LinvU;
    symmetrize(p.B);
    return p;
}

}  // namespace

Matrix squared_distances(const Matrix& A, const Matrix& B) {
    if (A.cols() != B.cols()) throw InvalidArgument("gram matrix: feature dimensions differ");
    const Matrix At = A.transpose();
    const Matrix Bt = B.transpose();
    Matrix d2(A.rows(), B.rows());
    for (Index j = 0; j < Bt.cols(); ++j)
        for (Index i = 0; i < At.cols(); ++i) d2(i, j) = (At.col(i) - Bt.col(j)).squaredNorm();
    return d2;
}

Matrix gram_matrix(const Matrix& X_rows, const Matrix& X_cols, double kappa) {
    if (!(kappa > 0)) throw InvalidArgument("kernel scale κ must be > 0");
    const double s = -1.0 / (2.0 * kappa * kappa);
    return (squared_distances(X_rows, X_cols).array() * s).exp().matrix();
}

double median_pairwise_distance(const Matrix& X) {
    const Index n = std::min<Index>(X.rows(), 500);
    if (n < 2) return 1.0;
    const Matrix head = X.topRows(n);
    const Matrix d2 = squared_distances(head, head);
    std::vector<double> d;
    d.reserve(std::size_t(n * (n - 1) / 2));
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < j; ++i) d.push_back(std::sqrt(d2(i, j)));
    auto mid = d.begin() + std::ptrdiff_t(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0 ? *mid : 1.0;
}

std::vector<double> default_kappa_grid(const Matrix& X) {
    const double med = median_pairwise_distance(X);
    std::vector<double> g;
    for (int k = -3; k <= 3; ++k) g.push_back(med * std::pow(2.0, 0.5 * k));
    return g;
}

std::vector<double> default_lambda_grid() { return {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1}; }

std::vector<Index> draw_subset(Index n, Index m, std::uint64_t seed) {
    if (m < 1 || m > n) throw InvalidArgument("subset size must lie in [1, N]");
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index(0));
    std::mt19937_64 rng(seed);
    // Partial Fisher–Yates; the first m entries are the sample.
    for (Index i = 0; i < m; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(idx[std::size_t(i)], idx[std::size_t(pick(rng))]);
    }
    idx.resize(std::size_t(m));
    return idx;
}

std::vector<Index> identity_subset(Index n) {
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index(0));
    return idx;
}

Matrix select_rows(const Matrix& X, const std::vector<Index>& idx) {
    Matrix out(Index(idx.size()), X.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= X.rows()) throw InvalidArgument("subset index out of range");
        out.row(Index(k)) = X.row(idx[k]);
    }
    return out;
}

Matrix krr_coefficients(const Matrix& Knm, const Matrix& Kmm, const Matrix& Y, double lambda, bool full_set) {
    Matrix H;
    Matrix rhs;
    if (full_set) {
        H = Knm;
        H.diagonal().array() += lambda;
        rhs = Y;
    } else {
        H = Knm.transpose() * Knm + lambda * Kmm;
        rhs = Knm.transpose() * Y;
    }
    symmetrize(H);
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success || !(llt.rcond() > std::numeric_limits<double>::epsilon()))
        throw NumericalError("KRR system is numerically singular at λ = " + std::to_string(lambda));
    return llt.solve(rhs).transpose();
}

KrrResult fit_krr(const PairedDataset& train, const PairedDataset& holdout, const std::vector<double>& kappa_grid,
                  const std::vector<double>& lambda_grid, const std::vector<Index>& subset) {
    if (kappa_grid.empty() || lambda_grid.empty()) throw InvalidArgument("KRR grids must be non-empty");
    const Matrix anchors = select_rows(train.X, subset);
    const bool full = Index(subset.size()) == train.size() && subset == identity_subset(train.size());
    const Matrix d2_train = squared_distances(train.X, anchors);
    const Matrix d2_hold = squared_distances(holdout.X, anchors);

    KrrResult best;
    double best_mse = std::numeric_limits<double>::infinity();
    for (double kappa : kappa_grid) {
        if (!(kappa > 0)) throw InvalidArgument("kernel scale κ must be > 0");
        const double s = -1.0 / (2.0 * kappa * kappa);
        const Matrix Knm = (d2_train.array() * s).exp().matrix();
        const Matrix Khm = (d2_hold.array() * s).exp().matrix();
        const Matrix Kmm = full ? Knm : select_rows(Knm, subset);
        for (double lambda : lambda_grid) {
            KrrCell cell{kappa, lambda, std::numeric_limits<double>::quiet_NaN(), false};
            try {
                Matrix A = krr_coefficients(Knm, Kmm, train.Y, lambda, full);
                const Matrix pred = Khm * A.transpose();
                cell.holdout_mse = (pred - holdout.Y).squaredNorm() / double(std::max<Index>(pred.size(), 1));
                cell.ok = std::isfinite(cell.holdout_mse);
                if (cell.ok && cell.holdout_mse < best_mse) {
                    best_mse = cell.holdout_mse;
                    best.config = KernelConfig{kappa, lambda, Index(subset.size())};
                    best.A = std::move(A);
                }
            } catch (const NumericalError& e) {
                std::cerr << "warning: skipping KRR grid point (κ=" << kappa << ", λ=" << lambda
                          << "): " << e.what() << "\n";
            }
            best.grid.push_back(cell);
        }
    }
    if (!std::isfinite(best_mse)) throw NumericalError("every KRR grid point was singular");
    return best;
}

DualProblem dual_problem_from(Matrix Knm, Matrix Kmm, double lambda, bool full_set) {
    DualProblem p;
    p.KtK.noalias() = Knm.transpose() * Knm;
    symmetrize(p.KtK);
    p.Knm = std::move(Knm);
    p.Kmm = std::move(Kmm);
    p.lambda = lambda;
    p.full_set = full_set;
    return p;
}

DualProblem make_dual_problem(const PairedDataset& train, const std::vector<Index>& subset, const KernelConfig& k) {
    const Matrix anchors = select_rows(train.X, subset);
    Matrix Knm = gram_matrix(train.X, anchors, k.kappa);
    Matrix Kmm = gram_matrix(anchors, anchors, k.kappa);
    const bool full = Index(subset.size()) == train.size() && subset == identity_subset(train.size());
    return dual_problem_from(std::move(Knm), std::move(Kmm), k.lambda, full);
}

ResponseStats dual_stats(const DualProblem& prob, const Matrix& A) {
    ResponseStats s;
    s.mean.noalias() = prob.Knm * A.transpose();
    s.extra = (prob.lambda / double(prob.Knm.rows())) * (A * prob.Kmm * A.transpose());
    symmetrize(s.extra);
    return s;
}

Matrix solve_A_gaussian(const Decoder& dec, const Vector& omega2, const Matrix& A_krr, double gamma) {
    const auto p = decoder_products(dec);
    Matrix left = p.B;
    left.diagonal() += gamma * omega2.cwiseInverse();
    Eigen::LLT<Matrix> llt(left);
    if (llt.info() != Eigen::Success) throw NumericalError("singular bracket UᵀΛ⁻¹U + γΩ⁻¹");
    return llt.solve(p.LinvU.transpose() * A_krr);
}

namespace {

// T(A) = (1/N)[(Z B + (Z∘Ξ)C)ᵀK_NM + λ(B + C⟨Ξ⟩)A K_MM], Z = K_NM Aᵀ, C = γΩ⁻¹.
struct DualOperator {
    const DualProblem& prob;
    const Matrix& B;
    const Matrix& Xi;
    Vector c;
    Vector c_xi_mean;
    // On the full set every term carries a right factor K; dropping it
    // leaves a system in K + λI instead of K(K + λI).
    bool reduced = false;

    Matrix operator()(const Matrix& A) const {
        const double inv_n = 1.0 / double(prob.Knm.rows());
        const Matrix Z = prob.Knm * A.transpose();
        Matrix left = Z * B;
        left.noalias() += (Z.array() * Xi.array()).matrix() * c.asDiagonal();
        Matrix reg = B * A;
        reg.noalias() += c_xi_mean.asDiagonal() * A;
        Matrix out;
        if (reduced) {
            out = left.transpose() + prob.lambda * reg;
        } else {
            out = left.transpose() * prob.Knm;
            out.noalias() += prob.lambda * reg * prob.Kmm;
        }
        out *= inv_n;
        return out;
    }
};

}  // namespace

Matrix grad_A(const PairedDataset& data, const DualProblem& prob, const Matrix& A, const Decoder& dec,
              const StudentMarginal& marg, double gamma) {
    const auto p = decoder_products(dec);
    const Vector c = gamma * marg.omega2.cwiseInverse();
    const Vector xi_mean = marg.Xi.colwise().mean().transpose();
    DualOperator op{prob, p.B, marg.Xi, c, c.cwiseProduct(xi_mean)};
    Matrix g = p.LinvU.transpose() * (data.Y.transpose() * prob.Knm);
    g /= double(data.size());
    g -= op(A);
    return g;
}

Matrix solve_A(const PairedDataset& data, const DualProblem& prob, const Decoder& dec, const StudentMarginal& marg,
               double gamma, const ASolveOptions& opts, const Matrix* A0, krylov::Report* report) {
    if (!(prob.lambda > 0))
        throw InvalidArgument("kernel IB needs λ > 0; without the L2 term the dual problem is degenerate");
    const auto p = decoder_products(dec);
    const Index nr = p.B.rows();
    const Index m = prob.Kmm.rows();
    const Vector c = gamma * marg.omega2.cwiseInverse();
    const Vector xi_mean = marg.Xi.colwise().mean().transpose();
    DualOperator op{prob, p.B, marg.Xi, c, c.cwiseProduct(xi_mean), prob.full_set};

    Matrix b = p.LinvU.transpose() * data.Y.transpose();
    if (!prob.full_set) b = b * prob.Knm;
    b /= double(data.size());

    // Preconditioner: Ξ_n replaced by its mean, (B + C⟨Ξ⟩) A G with
    // G = (K_MN K_NM + λK_MM)/N, or (K + λI)/N on the full set.
    Matrix left = p.B;
    left.diagonal() += c.cwiseProduct(xi_mean);
    Eigen::LLT<Matrix> left_llt(left);
    Matrix G;
    if (prob.full_set) {
        G = prob.Kmm;
        G.diagonal().array() += prob.lambda;
    } else {
        G = prob.KtK + prob.lambda * prob.Kmm;
    }
    G /= double(data.size());
    symmetrize(G);
    if (!prob.full_set) G.diagonal().array() += 1e-12 * std::max(G.trace() / double(std::max<Index>(m, 1)), 1e-300);
    Eigen::LLT<Matrix> right_llt(G);
    if (left_llt.info() != Eigen::Success || right_llt.info() != Eigen::Success)
        throw NumericalError("singular dual system; check λ and the kernel scale");
    auto precond = [&](const Matrix& R) -> Matrix {
        Matrix t = left_llt.solve(R);
        return right_llt.solve(t.transpose()).transpose();
    };

    Matrix A = (A0 && A0->rows() == nr && A0->cols() == m) ? *A0 : Matrix::Zero(nr, m);
    const int max_iter = opts.max_iter > 0 ? opts.max_iter : int(std::min<Index>(10 * nr * m, 1000000));
    const auto rep = krylov::cgs(op, precond, b, A, opts.tol, max_iter);
    if (report) *report = rep;
    if (!rep.converged) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "A solve did not converge after %d iterations (relative residual %.3e)",
                      rep.iterations, rep.residual);
        throw NumericalError(buf);
    }
    return A;
}

Matrix dual_responses(const DualEncoder& dual, const Matrix& X_new) {
    return gram_matrix(X_new, dual.anchors, dual.kernel.kappa) * dual.A.transpose();
}

namespace {

struct DualModel {
    const PairedDataset& data;
    const DualProblem& prob;
    const Matrix& A_krr;
    DualEncoder& enc;
    MarginalKind kind;

    ResponseStats stats() const { return dual_stats(prob, enc.A); }
    Matrix& sigma() { return enc.Sigma; }
    void update_encoder(const Decoder& dec, const StudentMarginal& marg, double gamma) {
        if (kind == MarginalKind::gaussian)
            enc.A = solve_A_gaussian(dec, marg.omega2, A_krr, gamma);
        else
            enc.A = solve_A(data, prob, dec, marg, gamma, {}, &enc.A);
    }
};

}  // namespace

KernelFit fit_dual_ib(const PairedDataset& train, const DualProblem& prob, const KrrResult& krr,
                      const std::vector<Index>& subset, const BottleneckConfig& cfg, const KernelFit* warm,
                      const StepObserver& observer) {
    cfg.validate();
    const Index m = Index(subset.size());
    KernelFit fit;
    fit.krr = krr;
    fit.enc.subset_idx = subset;
    fit.enc.kernel = krr.config;
    fit.enc.kernel.subset_size = m;
    fit.enc.anchors = select_rows(train.X, subset);

    bool fresh = true;
    if (warm && warm->enc.A.rows() == cfg.n_units && warm->enc.A.cols() == m) {
        fit.enc.A = warm->enc.A;
        fit.enc.Sigma = warm->enc.Sigma;
        fit.dec = warm->dec;
        fit.marg = warm->marg;
        fresh = false;
    } else {
        const LinearEncoder init = initial_encoder(cfg.n_units, m, cfg.seed);
        fit.enc.A = init.W;
        fit.enc.Sigma = init.Sigma;
    }
    DualModel model{train, prob, krr.A, fit.enc, cfg.marginal};
    fit.trace = detail::alternate(train, cfg, model, fit.dec, fit.marg, fresh, observer);
    return fit;
}

KernelFit fit_kernel_ib(const PairedDataset& train, const PairedDataset& holdout, const BottleneckConfig& cfg,
                        const KernelGrid& grid, Index subset_size, const std::vector<Index>* subset,
                        const StepObserver& observer) {
    cfg.validate();
    const std::vector<Index> idx =
        subset ? *subset : draw_subset(train.size(), subset_size > 0 ? subset_size : train.size(), cfg.seed);
    const auto kappas = grid.kappas.empty() ? default_kappa_grid(train.X) : grid.kappas;
    const auto lambdas = grid.lambdas.empty() ? default_lambda_grid() : grid.lambdas;
    const KrrResult krr = fit_krr(train, holdout, kappas, lambdas, idx);
    const DualProblem prob = make_dual_problem(train, idx, krr.config);
    return fit_dual_ib(train, prob, krr, idx, cfg, nullptr, observer);
}

}  // namespace vib
