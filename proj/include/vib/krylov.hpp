#pragma once

#include <cmath>

#include "vib/common.hpp"

// Matrix-free Krylov solvers over Eigen matrices treated as flat vectors.
// `apply` maps X -> T(X); `precond` maps a residual R -> P⁻¹R.

namespace vib::krylov {

struct Report {
    int iterations = 0;
    double residual = 0.0;  // ‖b − T x‖ / ‖b‖
    bool converged = false;
};

inline double dot(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

/// Preconditioned conjugate gradients for a symmetric positive-definite operator.
template <typename Apply, typename Precond>
Report pcg(Apply&& apply, Precond&& precond, const Matrix& b, Matrix& x, double tol, int max_iter) {
    Report rep;
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero(b.rows(), b.cols());
        rep.converged = true;
        return rep;
    }
    Matrix r = b - apply(x);
    rep.residual = r.norm() / bnorm;
    if (rep.residual < tol) {
        rep.converged = true;
        return rep;
    }
    Matrix z = precond(r);
    Matrix p = z;
    double rz = dot(r, z);
    for (int it = 1; it <= max_iter; ++it) {
        const Matrix q = apply(p);
        const double pq = dot(p, q);
        if (!(pq > 0.0)) break;  // operator not positive definite along p
        const double alpha = rz / pq;
        x += alpha * p;
        r -= alpha * q;
        rep.iterations = it;
        rep.residual = r.norm() / bnorm;
        if (rep.residual < tol) {
            // Confirm against the true residual; recurrences drift.
            rep.residual = (b - apply(x)).norm() / bnorm;
            if (rep.residual < tol) {
                rep.converged = true;
                return rep;
            }
            r = b - apply(x);
        }
        z = precond(r);
        const double rz_new = dot(r, z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    return rep;
}

/// Preconditioned conjugate gradients squared (Sonneveld). Does not assume
/// symmetry of the operator. Restarts from the true residual whenever the
/// recurrence residual and the true residual disagree or a breakdown occurs.
template <typename Apply, typename Precond>
Report cgs(Apply&& apply, Precond&& precond, const Matrix& b, Matrix& x, double tol, int max_iter) {
    Report rep;
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero(b.rows(), b.cols());
        rep.converged = true;
        return rep;
    }
    Matrix r = b - apply(x);
    rep.residual = r.norm() / bnorm;
    if (rep.residual < tol) {
        rep.converged = true;
        return rep;
    }
    int it = 0;
    int restarts = 0;
    while (it < max_iter && restarts < 50) {
        const Matrix shadow = r;
        Matrix u, p, q;
        double rho_prev = 1.0;
        bool first = true;
        Matrix best_x = x;
        double best_res = rep.residual;
        while (it < max_iter) {
            const double rho = dot(shadow, r);
            if (rho == 0.0) break;
            if (first) {
                u = r;
                p = u;
                first = false;
            } else {
                const double beta = rho / rho_prev;
                u = r + beta * q;
                p = u + beta * (q + beta * p);
            }
            const Matrix phat = precond(p);
            const Matrix vhat = apply(phat);
            const double sv = dot(shadow, vhat);
            if (sv == 0.0) break;
            const double alpha = rho / sv;
            q = u - alpha * vhat;
            const Matrix uhat = precond(Matrix(u + q));
            x += alpha * uhat;
            r -= alpha * apply(uhat);
            rho_prev = rho;
            ++it;
            const double res = r.norm() / bnorm;
            if (!std::isfinite(res)) break;
            if (res < best_res) {
                best_res = res;
                best_x = x;
            }
            if (res < tol) break;
        }
        // CGS residuals can be erratic; keep the best iterate seen.
        x = best_x;
        r = b - apply(x);
        rep.iterations = it;
        rep.residual = r.norm() / bnorm;
        if (rep.residual < tol) {
            rep.converged = true;
            return rep;
        }
        ++restarts;
    }
    return rep;
}

}  // namespace vib::krylov
