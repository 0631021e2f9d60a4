#include "vib/common.hpp"

#include <cmath>
#include <cstdio>

namespace vib {

void symmetrize(Matrix& m) {
    Matrix t = m.transpose();
    m = 0.5 * (m + t);
}

double min_eigenvalue(const Matrix& sym) {
    if (sym.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

bool repair_pd(Matrix& m) {
    symmetrize(m);
    const Index dim = m.rows();
    if (dim == 0) return false;
    // Cholesky succeeding is enough to certify positive definiteness.
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() == Eigen::Success) return false;
    const double lo = min_eigenvalue(m);
    const double scale = std::max(std::abs(m.trace()) / double(dim), 1e-300);
    const double shift = std::max(0.0, -lo) + 1e-10 * scale;
    m.diagonal().array() += shift;
    return true;
}

double log_det_spd(const Matrix& m, std::string_view what) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success)
        throw NumericalError(std::string(what) + " is not positive definite");
    const auto& l = llt.matrixLLT();
    double acc = 0.0;
    for (Index i = 0; i < l.rows(); ++i) acc += std::log(l(i, i));
    return 2.0 * acc;
}

Matrix inverse_spd(const Matrix& m, std::string_view what) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success)
        throw NumericalError(std::string(what) + " is not positive definite");
    Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
    symmetrize(inv);
    return inv;
}

bool all_finite(const Matrix& m) {
    return m.allFinite();
}

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace vib
