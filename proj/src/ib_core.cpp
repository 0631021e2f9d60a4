#include "vib/ib_core.hpp"

#include <cmath>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "alternating.hpp"
#include "vib/krylov.hpp"

namespace vib {
namespace {

double digamma(double x) { return boost::math::digamma(x); }

// Λ⁻¹U and UᵀΛ⁻¹U.
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

Vector mean_xi(const StudentMarginal& marg) {
    return marg.Xi.colwise().mean().transpose();
}

// Row i of the result is (1/N) Σ_n ξ_ni (v_i·x_n) x_nᵀ.
Matrix weighted_moment_product(const Matrix& X, const Matrix& Xi, const Matrix& V) {
    Matrix z = X * V.transpose();
    z.array() *= Xi.array();
    Matrix out = z.transpose() * X;
    out /= double(X.rows());
    return out;
}

}  // namespace

void BottleneckConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
    if (!(rel_tol > 0.0)) throw InvalidArgument("rel_tol must be > 0");
    if (n_units < 1) throw InvalidArgument("n_units must be >= 1");
    if (max_iters < 0) throw InvalidArgument("max_iters must be >= 0");
}

const char* to_string(UpdateStep step) {
    switch (step) {
        case UpdateStep::decoder: return "decoder";
        case UpdateStep::marginal: return "marginal";
        case UpdateStep::nu: return "nu";
        case UpdateStep::sigma: return "sigma";
        case UpdateStep::encoder: return "encoder";
    }
    return "?";
}

Matrix ResponseStats::second_moment() const {
    Matrix m = mean.transpose() * mean;
    m /= double(std::max<Index>(mean.rows(), 1));
    if (extra.size()) m += extra;
    symmetrize(m);
    return m;
}

Matrix ResponseStats::cross_moment(const Matrix& Y) const {
    Matrix m = mean.transpose() * Y;
    m /= double(std::max<Index>(mean.rows(), 1));
    return m;
}

Matrix ResponseStats::r2(const Matrix& Sigma) const {
    Matrix out = mean.array().square().matrix();
    RowVector offset = Sigma.diagonal().transpose();
    if (extra.size()) offset += extra.diagonal().transpose();
    out.rowwise() += offset;
    return out;
}

ResponseStats linear_stats(const PairedDataset& data, const Matrix& W) {
    ResponseStats s;
    s.mean.noalias() = data.X * W.transpose();
    s.extra = Matrix::Zero(W.rows(), W.rows());
    return s;
}

// ---- decoder -----------------------------------------------------------------

Decoder update_decoder(const PairedDataset& data, const ResponseStats& stats, const Matrix& Sigma, int* repairs) {
    Matrix cr = stats.second_moment() + Sigma;
    symmetrize(cr);
    const Matrix ry = stats.cross_moment(data.Y);  // N_r×D_y

    Eigen::LLT<Matrix> llt(cr);
    if (llt.info() != Eigen::Success)
        throw NumericalError("singular response covariance W C_xx Wᵀ + Σ; check Σ conditioning");
    Decoder dec;
    dec.U = llt.solve(ry).transpose();
    dec.Lambda = data.Cyy - dec.U * ry;
    if (repair_pd(dec.Lambda) && repairs) ++*repairs;
    return dec;
}

Decoder update_decoder(const PairedDataset& data, const LinearEncoder& enc, int* repairs) {
    return update_decoder(data, linear_stats(data, enc.W), enc.Sigma, repairs);
}

// ---- marginal ----------------------------------------------------------------

StudentMarginal initial_marginal(MarginalKind kind, const Matrix& r2, double nu0) {
    StudentMarginal m;
    m.kind = kind;
    const Index nr = r2.cols();
    m.omega2 = r2.colwise().mean().transpose();
    m.Xi = Matrix::Ones(r2.rows(), nr);
    if (kind == MarginalKind::gaussian) {
        m.nu = Vector::Constant(nr, kGaussianNu);
        m.a = Vector::Ones(nr);
    } else {
        m.nu = Vector::Constant(nr, nu0);
        m.a = (m.nu.array() + 1.0) / 2.0;
    }
    return m;
}

StudentMarginal update_marginal(const Matrix& r2, const StudentMarginal& marg) {
    StudentMarginal m = marg;
    const Index nr = r2.cols();
    if (m.kind == MarginalKind::gaussian) {
        m.Xi = Matrix::Ones(r2.rows(), nr);
        m.omega2 = r2.colwise().mean().transpose();
        m.a = Vector::Ones(nr);
        return m;
    }
    m.Xi.resize(r2.rows(), nr);
    for (Index i = 0; i < nr; ++i) {
        const double nu = m.nu(i);
        const double w2 = marg.omega2(i);
        m.Xi.col(i) = (nu + 1.0) / (nu + r2.col(i).array() / w2);
        m.omega2(i) = m.Xi.col(i).cwiseProduct(r2.col(i)).mean();
        m.a(i) = 0.5 * (nu + 1.0);
    }
    return m;
}

StudentMarginal update_marginal(const LinearEncoder& enc, const PairedDataset& data, const StudentMarginal& marg) {
    return update_marginal(linear_stats(data, enc.W).r2(enc.Sigma), marg);
}

StudentMarginal solve_nu(const StudentMarginal& marg, int* clamps) {
    if (marg.kind == MarginalKind::gaussian) return marg;
    StudentMarginal m = marg;
    auto lhs = [](double nu) { return digamma(0.5 * nu) - std::log(0.5 * nu); };
    for (Index i = 0; i < m.n_units(); ++i) {
        const double a = m.a(i);
        const auto xi = m.Xi.col(i).array();
        const double rhs = 1.0 + digamma(a) - std::log(a) + xi.log().mean() - xi.mean();
        double lo = std::log(kNuMin), hi = std::log(kNuMax);
        if (lhs(kNuMax) <= rhs) {
            m.nu(i) = kNuMax;
            if (clamps) ++*clamps;
            continue;
        }
        if (lhs(kNuMin) >= rhs) {
            m.nu(i) = kNuMin;
            if (clamps) ++*clamps;
            continue;
        }
        for (int k = 0; k < 200 && hi - lo > 1e-13; ++k) {
            const double mid = 0.5 * (lo + hi);
            (lhs(std::exp(mid)) < rhs ? lo : hi) = mid;
        }
        m.nu(i) = std::exp(0.5 * (lo + hi));
    }
    return m;
}

// ---- encoder -----------------------------------------------------------------

Matrix update_sigma(const Decoder& dec, const StudentMarginal& marg, double gamma) {
    const auto p = decoder_products(dec);
    Matrix prec = p.B / gamma;
    prec.diagonal() += (mean_xi(marg).array() / marg.omega2.array()).matrix();
    symmetrize(prec);
    return inverse_spd(prec, "noise precision (1/γ)UᵀΛ⁻¹U + Ω⁻¹⟨Ξ⟩");
}

Matrix update_sigma_gaussian(const Decoder& dec, const Vector& omega2, double gamma) {
    const auto p = decoder_products(dec);
    Matrix prec = p.B / gamma;
    prec.diagonal() += omega2.cwiseInverse();
    symmetrize(prec);
    return inverse_spd(prec, "noise precision (1/γ)UᵀΛ⁻¹U + Ω⁻¹");
}

Matrix solve_W(const PairedDataset& data, const Decoder& dec, const StudentMarginal& marg, double gamma,
               const WSolveOptions& opts, const Matrix* W0) {
    const auto p = decoder_products(dec);
    const Index nr = p.B.rows();
    const Index dx = data.dim_x();
    const Matrix F = p.LinvU.transpose() * data.Cxy.transpose();  // UᵀΛ⁻¹C_xyᵀ
    const Vector c = gamma * marg.omega2.cwiseInverse();
    const Index n = nr * dx;

    const bool dense = !opts.force_iterative && (opts.force_dense || n <= opts.dense_limit);
    if (dense) {
        Matrix big(n, n);
        const double inv_n = 1.0 / double(data.size());
        for (Index i = 0; i < nr; ++i) {
            for (Index j = 0; j < nr; ++j) big.block(i * dx, j * dx, dx, dx) = p.B(i, j) * data.Cxx;
            Matrix Mi = data.X.transpose() * marg.Xi.col(i).asDiagonal() * data.X;
            big.block(i * dx, i * dx, dx, dx) += (c(i) * inv_n) * Mi;
        }
        symmetrize(big);
        Vector rhs(n);
        for (Index i = 0; i < nr; ++i) rhs.segment(i * dx, dx) = F.row(i).transpose();
        Eigen::LLT<Matrix> llt(big);
        if (llt.info() != Eigen::Success)
            throw NumericalError("singular W system; add jitter to Σ/Λ or use fewer units");
        const Vector w = llt.solve(rhs);
        Matrix W(nr, dx);
        for (Index i = 0; i < nr; ++i) W.row(i) = w.segment(i * dx, dx).transpose();
        return W;
    }

    auto apply = [&](const Matrix& V) -> Matrix {
        Matrix out = p.B * V * data.Cxx;
        out += c.asDiagonal() * weighted_moment_product(data.X, marg.Xi, V);
        return out;
    };

    // Preconditioner: the operator with Ξ_n replaced by its mean, which factors
    // as (B + γΩ⁻¹⟨Ξ⟩) V C_xx.
    Matrix left = p.B;
    left.diagonal() += c.cwiseProduct(mean_xi(marg));
    Eigen::LLT<Matrix> left_llt(left);
    Matrix cxx = data.Cxx;
    cxx.diagonal().array() += 1e-12 * std::max(cxx.trace() / double(dx), 1e-300);
    Eigen::LLT<Matrix> right_llt(cxx);
    if (left_llt.info() != Eigen::Success || right_llt.info() != Eigen::Success)
        throw NumericalError("singular W system; add jitter to Σ/Λ or use fewer units");
    auto precond = [&](const Matrix& R) -> Matrix {
        Matrix t = left_llt.solve(R);                          // N_r×D_x
        return right_llt.solve(t.transpose()).transpose();     // · C_xx⁻¹
    };

    Matrix W = (W0 && W0->rows() == nr && W0->cols() == dx) ? *W0 : Matrix::Zero(nr, dx);
    const int max_iter = opts.max_iter > 0 ? opts.max_iter : int(std::min<Index>(10 * n, 100000));
    const auto rep = krylov::pcg(apply, precond, F, W, opts.tol, max_iter);
    if (!rep.converged)
        throw NumericalError("W solve did not converge (relative residual " + std::to_string(rep.residual) +
                             "); add jitter or use fewer units");
    return W;
}

Matrix solve_W_gaussian(const PairedDataset& data, const Decoder& dec, const Vector& omega2, double gamma) {
    const auto p = decoder_products(dec);
    Matrix left = p.B;
    left.diagonal() += gamma * omega2.cwiseInverse();
    Eigen::LLT<Matrix> left_llt(left);
    Eigen::LLT<Matrix> cxx_llt(data.Cxx);
    if (left_llt.info() != Eigen::Success || cxx_llt.info() != Eigen::Success)
        throw NumericalError("singular W system (C_xx or UᵀΛ⁻¹U + γΩ⁻¹ not invertible)");
    const Matrix F = p.LinvU.transpose() * data.Cxy.transpose();
    const Matrix t = left_llt.solve(F);
    return cxx_llt.solve(t.transpose()).transpose();
}

Matrix grad_W(const PairedDataset& data, const Matrix& W, const Decoder& dec, const StudentMarginal& marg,
              double gamma) {
    const auto p = decoder_products(dec);
    Matrix g = p.LinvU.transpose() * data.Cxy.transpose();
    g.noalias() -= p.B * W * data.Cxx;
    g.noalias() -= (gamma * marg.omega2.cwiseInverse()).asDiagonal() * weighted_moment_product(data.X, marg.Xi, W);
    return g;
}

Matrix grad_Sigma(const Matrix& Sigma, const Decoder& dec, const StudentMarginal& marg, double gamma) {
    const auto p = decoder_products(dec);
    Matrix g = 0.5 * gamma * inverse_spd(Sigma, "Σ");
    g -= 0.5 * p.B;
    g.diagonal() -= (0.5 * gamma) * (mean_xi(marg).array() / marg.omega2.array()).matrix();
    return g;
}

// ---- objective ---------------------------------------------------------------

double relevance_term(const PairedDataset& data, const ResponseStats& stats, const Matrix& Sigma,
                      const Decoder& dec) {
    const Matrix ry = stats.cross_moment(data.Y);
    const Matrix uy = dec.U * ry;  // U W C_xy
    Matrix S = data.Cyy - uy - uy.transpose() + dec.U * (stats.second_moment() + Sigma) * dec.U.transpose();
    symmetrize(S);
    Eigen::LLT<Matrix> llt(dec.Lambda);
    if (llt.info() != Eigen::Success) throw NumericalError("decoder covariance Λ is not positive definite");
    const double log_det_lambda = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double trace = llt.solve(S).trace();
    const double dy = double(data.dim_y());
    return 0.5 * data.log_det_cyy + 0.5 * dy - 0.5 * log_det_lambda - 0.5 * trace;
}

double compression_term(const ResponseStats& stats, const Matrix& Sigma, const StudentMarginal& marg) {
    const Matrix r2 = stats.r2(Sigma);
    const Index nr = r2.cols();
    double total = 0.0;
    for (Index i = 0; i < nr; ++i) {
        const double w2 = marg.omega2(i);
        if (marg.kind == MarginalKind::gaussian) {
            total += 0.5 * std::log(w2) + r2.col(i).mean() / (2.0 * w2);
            continue;
        }
        const double nu = marg.nu(i);
        const double a = marg.a(i);
        const auto xi = marg.Xi.col(i).array();
        const double xi_mean = xi.mean();
        const double log_xi_mean = xi.log().mean();
        const double weighted = (xi * r2.col(i).array()).mean();
        // E_q[log η] = ψ(a) − log(a/ξ), averaged over n; gamma entropy with
        // shape a and rate a/ξ is a − log(a/ξ) + lgamma(a) + (1 − a)ψ(a).
        const double e_log_eta = digamma(a) - std::log(a) + log_xi_mean;
        const double entropy = a - std::log(a) + log_xi_mean + std::lgamma(a) + (1.0 - a) * digamma(a);
        const double f = std::lgamma(0.5 * nu) - 0.5 * nu * std::log(0.5 * nu) -
                         (0.5 * (nu - 1.0) * e_log_eta - 0.5 * nu * xi_mean + entropy);
        total += 0.5 * std::log(w2) + weighted / (2.0 * w2) + f;
    }
    return total - 0.5 * double(nr) - 0.5 * log_det_spd(Sigma, "encoding noise covariance Σ");
}

ObjectiveParts objective(const PairedDataset& data, const ResponseStats& stats, const Matrix& Sigma,
                         const Decoder& dec, const StudentMarginal& marg, double gamma) {
    ObjectiveParts o;
    o.relevance = relevance_term(data, stats, Sigma, dec);
    o.compression = compression_term(stats, Sigma, marg);
    o.value = o.relevance - gamma * o.compression;
    return o;
}

ObjectiveParts objective(const PairedDataset& data, const LinearEncoder& enc, const Decoder& dec,
                         const StudentMarginal& marg, double gamma) {
    return objective(data, linear_stats(data, enc.W), enc.Sigma, dec, marg, gamma);
}

// ---- fitting -----------------------------------------------------------------

LinearEncoder initial_encoder(Index n_units, Index dim_x, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(std::max<Index>(dim_x, 1))));
    LinearEncoder enc;
    enc.W.resize(n_units, dim_x);
    for (Index i = 0; i < n_units; ++i)
        for (Index j = 0; j < dim_x; ++j) enc.W(i, j) = normal(rng);
    enc.Sigma = 0.1 * Matrix::Identity(n_units, n_units);
    return enc;
}

namespace {

struct LinearModel {
    const PairedDataset& data;
    LinearEncoder& enc;
    MarginalKind kind;
    WSolveOptions opts;

    ResponseStats stats() const { return linear_stats(data, enc.W); }
    Matrix& sigma() { return enc.Sigma; }
    void update_encoder(const Decoder& dec, const StudentMarginal& marg, double gamma) {
        if (kind == MarginalKind::gaussian)
            enc.W = solve_W_gaussian(data, dec, marg.omega2, gamma);
        else
            enc.W = solve_W(data, dec, marg, gamma, opts, &enc.W);
    }
};

}  // namespace

LinearFit fit_sparse_ib(const PairedDataset& data, const BottleneckConfig& cfg, const LinearFit* warm,
                        const StepObserver& observer) {
    cfg.validate();
    LinearFit fit;
    bool fresh = true;
    if (warm && warm->enc.W.rows() == cfg.n_units && warm->enc.W.cols() == data.dim_x()) {
        fit.enc = warm->enc;
        fit.dec = warm->dec;
        fit.marg = warm->marg;
        fresh = false;
    } else {
        fit.enc = initial_encoder(cfg.n_units, data.dim_x(), cfg.seed);
    }
    WSolveOptions opts;
    opts.dense_limit = cfg.dense_limit;
    LinearModel model{data, fit.enc, cfg.marginal, opts};
    fit.trace = detail::alternate(data, cfg, model, fit.dec, fit.marg, fresh, observer);
    return fit;
}

}  // namespace vib
