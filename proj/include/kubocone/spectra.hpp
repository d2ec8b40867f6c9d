#pragma once

#include <optional>
#include <vector>

#include "kubocone/bloch.hpp"
#include "kubocone/linalg.hpp"

namespace kubocone {

/// Eigen-pairs of a Hermitian matrix: ascending eigenvalues, orthonormal
/// eigenvectors in the columns of `vectors`.
struct BandSpectrum {
  Vec2 k = Vec2::Zero();
  RVec values;
  CMat vectors;

  int size() const { return static_cast<int>(values.size()); }
};

/// Cyclic complex Jacobi diagonalization. Each eigenvector is phase-fixed so
/// that its largest-magnitude entry is real and positive.
BandSpectrum eigh(const CMat& h);

/// Number of eigenvalues <= mu.
int occupied_count(const BandSpectrum& spectrum, double mu);

/// Lambda_{m+1} - Lambda_m for m = occupied_count; throws AllBandsOnOneSide
/// when m is 0 or N.
double gap_at(const BandSpectrum& spectrum, double mu);
double gap_at(const HoppingModel& model, const Vec2& k);

/// v_i v_i^H
CMat band_projector(const BandSpectrum& spectrum, int index);

/// Sum of v_i v_i^H over eigenvalues <= mu.
CMat fermi_projector_spectral(const BandSpectrum& spectrum, double mu);

/// Axis-aligned rectangle in the complex energy plane, traversed
/// counter-clockwise: [left, right] x [-half_height, half_height] i.
struct RectangleContour {
  double left = 0.0;
  double right = 0.0;
  double half_height = 1.0;
};

/// Left edge one unit below the spectrum, right edge at mu, half-height
/// max(1, spectral radius).
RectangleContour default_contour(const BandSpectrum& spectrum, double mu);

/// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussRule gauss_legendre(int n);

/// (1 / 2 pi i) \oint (z - H(k))^{-1} dz around the rectangle, with an
/// n-point Gauss-Legendre rule on each edge.
CMat fermi_projector_riesz(const HoppingModel& model, const Vec2& k, double mu,
                           const std::optional<RectangleContour>& contour, int nodes);

/// dP_mu / dk_j from (1 / 2 pi i) \oint R(z) dH/dk_j R(z) dz. The contour
/// crosses the real axis in the middle of the gap and its panels are graded
/// geometrically toward the crossing, so the rule stays accurate as the gap
/// closes.
CMat projector_derivative(const HoppingModel& model, const Vec2& k, double mu, int j);

}  // namespace kubocone
