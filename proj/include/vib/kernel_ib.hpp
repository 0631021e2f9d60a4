#pragma once

#include <cstdint>
#include <vector>

#include "vib/ib_core.hpp"
#include "vib/krylov.hpp"

namespace vib {

// Gaussian kernel k(x, x') = exp(−‖x − x'‖²/(2κ²)).
struct KernelConfig {
    double kappa = 1.0;
    double lambda = 1e-3;
    Index subset_size = 0;  // M; 0 means all training points
};

Matrix squared_distances(const Matrix& A, const Matrix& B);

Matrix gram_matrix(const Matrix& X_rows, const Matrix& X_cols, double kappa);

/// Median pairwise distance over (at most) the first 500 rows.
double median_pairwise_distance(const Matrix& X);

/// 7 log-spaced values median·2^(k/2), k = −3..3.
std::vector<double> default_kappa_grid(const Matrix& X);

/// {1e-6, 1e-5, ..., 1e-1}.
std::vector<double> default_lambda_grid();

/// Uniform sample of `m` distinct indices from [0, n), in draw order.
std::vector<Index> draw_subset(Index n, Index m, std::uint64_t seed);

std::vector<Index> identity_subset(Index n);

Matrix select_rows(const Matrix& X, const std::vector<Index>& idx);

struct KrrCell {
    double kappa = 0.0;
    double lambda = 0.0;
    double holdout_mse = 0.0;
    bool ok = false;
};

struct KrrResult {
    KernelConfig config;
    Matrix A;  // D_y×M, prediction(x) = A·k(x)
    std::vector<KrrCell> grid;
};

/// KRR coefficients for fixed (κ, λ) on the given expansion points:
/// A = Yᵀ(K + λI)⁻¹ when the subset is the whole training set, otherwise
/// the subset-of-regressors solution Yᵀ K_NM (K_MN K_NM + λK_MM)⁻¹.
/// Throws NumericalError if the system is numerically singular.
Matrix krr_coefficients(const Matrix& Knm, const Matrix& Kmm, const Matrix& Y, double lambda, bool full_set);

/// Grid search over (κ, λ) minimizing hold-out mean squared error. Cells whose
/// system is singular are skipped and recorded with ok = false.
KrrResult fit_krr(const PairedDataset& train, const PairedDataset& holdout, const std::vector<double>& kappa_grid,
                  const std::vector<double>& lambda_grid, const std::vector<Index>& subset);

// Kernel quantities the dual solvers share.
struct DualProblem {
    Matrix Knm;  // N×M, row n is k_nᵀ
    Matrix Kmm;  // M×M
    Matrix KtK;  // K_MN K_NM
    double lambda = 0.0;
    bool full_set = false;  // subset is the whole training set in order
};

DualProblem dual_problem_from(Matrix Knm, Matrix Kmm, double lambda, bool full_set);
DualProblem make_dual_problem(const PairedDataset& train, const std::vector<Index>& subset, const KernelConfig& k);

struct DualEncoder {
    Matrix A;  // N_r×M
    std::vector<Index> subset_idx;
    KernelConfig kernel;
    Matrix Sigma;
    Matrix anchors;  // M×D_x, the training inputs at subset_idx
};

/// Response moments of r_n ~ Normal(A k_n, Σ) with the L2 term: the per-sample
/// operator is k_n k_nᵀ + (λ/N)K_MM, so the λ term enters once over the data set.
ResponseStats dual_stats(const DualProblem& prob, const Matrix& A);

/// A = (UᵀΛ⁻¹U + γΩ⁻¹)⁻¹UᵀΛ⁻¹A_KRR.
Matrix solve_A_gaussian(const Decoder& dec, const Vector& omega2, const Matrix& A_krr, double gamma);

/// ∂L̃/∂A = (1/N)[UᵀΛ⁻¹YᵀK_NM − Σ_n(UᵀΛ⁻¹U + γΩ⁻¹Ξ_n)A(k_nk_nᵀ + (λ/N)K_MM)].
Matrix grad_A(const PairedDataset& data, const DualProblem& prob, const Matrix& A, const Decoder& dec,
              const StudentMarginal& marg, double gamma);

struct ASolveOptions {
    double tol = 1e-8;
    int max_iter = 0;  // 0: 10·N_r·M
};

/// Zero of ∂L̃/∂A by preconditioned conjugate gradients squared on the
/// matrix-free operator. λ must be positive. `A0` seeds the solver.
Matrix solve_A(const PairedDataset& data, const DualProblem& prob, const Decoder& dec, const StudentMarginal& marg,
               double gamma, const ASolveOptions& opts = {}, const Matrix* A0 = nullptr,
               krylov::Report* report = nullptr);

/// Mean responses A·k(x, anchors) for new inputs (rows of X_new).
Matrix dual_responses(const DualEncoder& dual, const Matrix& X_new);

struct KernelGrid {
    std::vector<double> kappas;   // empty: default_kappa_grid
    std::vector<double> lambdas;  // empty: default_lambda_grid
};

struct KernelFit {
    DualEncoder enc;
    Decoder dec;
    StudentMarginal marg;
    FitTrace trace;
    KrrResult krr;
};

/// Two-stage kernel IB: KRR grid search on the hold-out split fixes (κ, λ),
/// then the alternating cycle runs with the W step replaced by the A step
/// (closed form for gaussian marginals, Krylov solve otherwise). The subset
/// is drawn uniformly without replacement from cfg.seed unless given.
KernelFit fit_kernel_ib(const PairedDataset& train, const PairedDataset& holdout, const BottleneckConfig& cfg,
                        const KernelGrid& grid, Index subset_size, const std::vector<Index>* subset = nullptr,
                        const StepObserver& observer = {});

/// Runs only the second stage for an already prepared problem; `warm`
/// replaces the random initialization.
KernelFit fit_dual_ib(const PairedDataset& train, const DualProblem& prob, const KrrResult& krr,
                      const std::vector<Index>& subset, const BottleneckConfig& cfg, const KernelFit* warm = nullptr,
                      const StepObserver& observer = {});

}  // namespace vib
