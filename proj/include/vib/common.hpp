#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace vib {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// Error hierarchy. The C API maps each class onto a status code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Replaces `m` by (m + mᵀ)/2.
void symmetrize(Matrix& m);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& sym);

/// Symmetrizes `m` and, when its smallest eigenvalue is not positive, shifts
/// the diagonal so that it becomes positive definite again. The shift is the
/// eigenvalue deficit plus 1e-10·trace/dim. Returns true when a shift was applied.
bool repair_pd(Matrix& m);

/// log|m| for a symmetric positive-definite matrix; throws NumericalError
/// naming `what` when the Cholesky factorization fails.
double log_det_spd(const Matrix& m, std::string_view what);

/// Inverse of a symmetric positive-definite matrix (symmetrized).
Matrix inverse_spd(const Matrix& m, std::string_view what);

bool all_finite(const Matrix& m);

/// 64-bit FNV-1a of a byte string, rendered as 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace vib
