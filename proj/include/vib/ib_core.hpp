#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vib/common.hpp"
#include "vib/datagen.hpp"

namespace vib {

// p(r|x) = Normal(r | W x, Σ)
struct LinearEncoder {
    Matrix W;      // N_r×D_x, rows are the encoding filters w_i
    Matrix Sigma;  // N_r×N_r encoding noise covariance
};

// q(y|r) = Normal(y | U r, Λ)
struct Decoder {
    Matrix U;       // D_y×N_r
    Matrix Lambda;  // D_y×D_y
};

enum class MarginalKind { gaussian, student };

// Factorized response marginal q(r) = Π_i Student(r_i | 0, ω_i², ν_i) and the
// variational parameters of its scale-mixture bound. With kind == gaussian,
// q(r_i) = Normal(0, ω_i²), ξ ≡ 1, a ≡ 1 and ν holds kGaussianNu.
struct StudentMarginal {
    MarginalKind kind = MarginalKind::student;
    Vector omega2;  // N_r
    Vector nu;      // N_r
    Matrix Xi;      // N×N_r, ξ_ni
    Vector a;       // N_r

    Index n_units() const { return omega2.size(); }
};

inline constexpr double kGaussianNu = 1e8;
inline constexpr double kNuMin = 1e-2;
inline constexpr double kNuMax = 1e3;

struct BottleneckConfig {
    double gamma = 0.5;
    int n_units = 10;
    int max_iters = 500;
    double rel_tol = 1e-7;
    std::uint64_t seed = 0;
    MarginalKind marginal = MarginalKind::student;
    // N_r·D_x at or below which solve_W builds the dense vectorized system.
    Index dense_limit = 1024;

    void validate() const;
};

struct FitTrace {
    std::vector<double> objective;  // L̃ after each full cycle
    bool converged = false;
    int iterations = 0;
    int pd_repairs = 0;
    int nu_clamps = 0;
};

// First and second moments of the encoder's mean responses over the data.
// For a linear encoder `mean` = X Wᵀ and `extra` = 0; the kernel encoder adds
// its L2 term to `extra`, so ⟨r_ni²⟩ = mean_ni² + extra_ii + Σ_ii throughout.
struct ResponseStats {
    Matrix mean;   // N×N_r
    Matrix extra;  // N_r×N_r

    /// W C_xx Wᵀ analogue: meanᵀmean/N + extra.
    Matrix second_moment() const;
    /// W C_xy analogue: meanᵀY/N.
    Matrix cross_moment(const Matrix& Y) const;
    /// ⟨r_ni²⟩ for all n, i.
    Matrix r2(const Matrix& Sigma) const;
};

ResponseStats linear_stats(const PairedDataset& data, const Matrix& W);

// ---- decoder -------------------------------------------------------------

/// U = C_xyᵀWᵀ(WC_xxWᵀ+Σ)⁻¹ and Λ = C_yy − U W C_xy, with Λ symmetrized and
/// repaired to positive definite. Increments *repairs when a repair happened.
Decoder update_decoder(const PairedDataset& data, const ResponseStats& stats, const Matrix& Sigma,
                       int* repairs = nullptr);
Decoder update_decoder(const PairedDataset& data, const LinearEncoder& enc, int* repairs = nullptr);

// ---- marginal ------------------------------------------------------------

/// Initial marginal: ξ = 1, ν = nu0 (kGaussianNu for gaussian), a = (ν+1)/2
/// (1 for gaussian), ω² = mean of ⟨r²⟩ over the data.
StudentMarginal initial_marginal(MarginalKind kind, const Matrix& r2, double nu0 = 2.5);

/// One Gauss–Seidel sweep: ξ from the previous ω², then ω² from the new ξ,
/// then a = (ν+1)/2. ν is left unchanged. `r2` holds ⟨r_ni²⟩.
StudentMarginal update_marginal(const Matrix& r2, const StudentMarginal& marg);
StudentMarginal update_marginal(const LinearEncoder& enc, const PairedDataset& data,
                                const StudentMarginal& marg);

/// Solves ψ(ν/2) − log(ν/2) = 1 + mean_n[ψ(a) − log(a/ξ_n) − ξ_n] per unit by
/// bisection on log ν over [kNuMin, kNuMax]; roots outside the bracket clamp
/// to the nearest end. Gaussian marginals are returned unchanged.
StudentMarginal solve_nu(const StudentMarginal& marg, int* clamps = nullptr);

// ---- encoder -------------------------------------------------------------

/// Σ = [(1/γ)UᵀΛ⁻¹U + (1/N)Ω⁻¹ΣΞ_n]⁻¹, symmetrized.
Matrix update_sigma(const Decoder& dec, const StudentMarginal& marg, double gamma);

/// Gaussian-marginal noise update, Σ = [(1/γ)UᵀΛ⁻¹U + Ω⁻¹]⁻¹.
Matrix update_sigma_gaussian(const Decoder& dec, const Vector& omega2, double gamma);

struct WSolveOptions {
    Index dense_limit = 1024;
    double tol = 1e-10;
    int max_iter = 0;  // 0: 10·N_r·D_x
    bool force_dense = false;
    bool force_iterative = false;
};

/// W solving ∂L̃/∂W = 0 (a linear system coupling rows through UᵀΛ⁻¹U and
/// columns through the ξ-weighted input moments). Small systems are solved
/// through the dense vectorized matrix, larger ones by preconditioned CG.
/// `W0` seeds the iterative solver.
Matrix solve_W(const PairedDataset& data, const Decoder& dec, const StudentMarginal& marg, double gamma,
               const WSolveOptions& opts = {}, const Matrix* W0 = nullptr);

/// Closed-form W for gaussian marginals: (UᵀΛ⁻¹U + γΩ⁻¹)⁻¹UᵀΛ⁻¹C_xyᵀC_xx⁻¹.
Matrix solve_W_gaussian(const PairedDataset& data, const Decoder& dec, const Vector& omega2, double gamma);

/// ∂L̃/∂W = UᵀΛ⁻¹C_xyᵀ − UᵀΛ⁻¹UWC_xx − γΩ⁻¹(1/N)ΣΞ_nWx_nx_nᵀ.
Matrix grad_W(const PairedDataset& data, const Matrix& W, const Decoder& dec, const StudentMarginal& marg,
              double gamma);

/// ∂L̃/∂Σ treating every entry of Σ as an independent coordinate.
Matrix grad_Sigma(const Matrix& Sigma, const Decoder& dec, const StudentMarginal& marg, double gamma);

// ---- objective -------------------------------------------------------------

struct ObjectiveParts {
    double relevance = 0.0;    // lower bound on I(R;Y), nats
    double compression = 0.0;  // upper bound on I(R;X), nats
    double value = 0.0;        // relevance − γ·compression
};

/// ½log|C_yy| + D_y/2 − ½log|Λ| − ½tr(Λ⁻¹S) with S the expected squared
/// decoding error. At the optimal decoder this is ½log(|C_yy|/|Λ|).
double relevance_term(const PairedDataset& data, const ResponseStats& stats, const Matrix& Sigma,
                      const Decoder& dec);

/// Σ_i[½logω_i² + (1/(2Nω_i²))Σ_nξ_ni⟨r_ni²⟩ + f_i] − N_r/2 − ½log|Σ|, with
/// f_i the gamma-mixture terms (zero for gaussian marginals). Zero for a dead
/// channel with a gaussian marginal matched to the noise.
double compression_term(const ResponseStats& stats, const Matrix& Sigma, const StudentMarginal& marg);

ObjectiveParts objective(const PairedDataset& data, const ResponseStats& stats, const Matrix& Sigma,
                         const Decoder& dec, const StudentMarginal& marg, double gamma);
ObjectiveParts objective(const PairedDataset& data, const LinearEncoder& enc, const Decoder& dec,
                         const StudentMarginal& marg, double gamma);

// ---- fitting ---------------------------------------------------------------

struct LinearFit {
    LinearEncoder enc;
    Decoder dec;
    StudentMarginal marg;
    FitTrace trace;
};

enum class UpdateStep { decoder, marginal, nu, sigma, encoder };
const char* to_string(UpdateStep step);

// Called after every sub-update with the objective value at that point.
// Setting it makes the fit evaluate L̃ after each sub-update.
using StepObserver = std::function<void(int iteration, UpdateStep step, double value)>;

/// Random initial encoder: W_ij ~ Normal(0, 1/D_x), Σ = 0.1·I.
LinearEncoder initial_encoder(Index n_units, Index dim_x, std::uint64_t seed);

/// Alternating maximization of L̃: decoder → (ξ, ω², a) → ν → Σ → W per
/// cycle, until the relative change of L̃ over one cycle drops below rel_tol
/// or max_iters cycles ran. Gaussian marginals skip the ν step and use the
/// closed-form updates. `warm` replaces the random initialization.
LinearFit fit_sparse_ib(const PairedDataset& data, const BottleneckConfig& cfg, const LinearFit* warm = nullptr,
                        const StepObserver& observer = {});

}  // namespace vib
