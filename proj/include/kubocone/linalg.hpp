#pragma once

#include <complex>

#include <Eigen/Dense>

namespace kubocone {

using Complex = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr Complex kI{0.0, 1.0};

/// Largest singular value, via the Hermitian eigensolver on A^H A.
double operator_norm(const CMat& a);

/// Max-entry deviation from Hermiticity, ||A - A^H||_max.
double hermiticity_defect(const CMat& a);

}  // namespace kubocone
