#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kubocone/bloch.hpp"
#include "kubocone/linalg.hpp"

namespace kubocone {

/// Conical crossing of the two bands adjacent to the Fermi energy.
/// Locally Lambda_pm(k) ~ mu +- sqrt(q.Q q) + tilt.q with q = k - omega.
struct FermiPoint {
  Vec2 omega = Vec2::Zero();
  Mat2 Q = Mat2::Identity();
  Vec2 tilt = Vec2::Zero();
  double residual = 0.0;
  double gap_at_omega = 0.0;
};

struct FermiSearchOptions {
  /// Coarse grid is coarse x coarse.
  int coarse = 48;
  /// Gap tolerance relative to the spectral radius.
  double tolerance = 1e-7;
  /// Offset of the coarse grid in cell widths.
  Vec2 offset = Vec2::Zero();
  /// Throw NoConvergence instead of dropping seeds whose gap stays above tolerance.
  bool strict = false;
};

struct FermiSearchResult {
  /// Sorted by dual coordinates, reduced to the fundamental cell.
  std::vector<Vec2> points;
  /// Smallest gap seen on the coarse grid or after refinement.
  double min_gap = 0.0;
  /// Absolute gap tolerance that was applied.
  double tolerance = 0.0;
  int occupied = 0;
  std::vector<std::string> warnings;
};

FermiSearchResult find_fermi_points(const HoppingModel& model, const FermiSearchOptions& options = {});

struct ConeFit {
  Mat2 Q = Mat2::Identity();
  Vec2 tilt = Vec2::Zero();
  double residual = 0.0;
};

/// {2e-2, 1e-2, 5e-3} times the shortest dual vector.
std::vector<double> default_fit_radii(const Lattice2D& lattice);

/// Least-squares fit of the half-gap squared to q.Q q and of the band mean
/// to tilt.q on circles around omega; per-radius results are extrapolated to
/// r -> 0 by polynomial interpolation in r^2. `directions` must be even.
ConeFit fit_cone(const HoppingModel& model, const Vec2& omega, std::span<const double> radii = {},
                 int directions = 16);

/// find_fermi_points followed by fit_cone at every point.
std::vector<FermiPoint> detect_cones(const HoppingModel& model, const FermiSearchOptions& options = {});

struct ConeCondition {
  bool holds = false;
  double margin = 0.0;
};

/// sqrt(lambda_min(Q)) - |a| > 0
ConeCondition check_cone_condition(const Mat2& Q, const Vec2& tilt);

/// Q proportional to the identity to 1e-9 relative to its trace.
bool is_quantizing(const Mat2& Q);

struct ClosedFormSigma {
  double sigma = 0.0;
  std::vector<double> contributions;
};

/// sigma_jj = sum_l Q_l,jj / (16 sqrt(det Q_l)).
ClosedFormSigma sigma_closed_form(std::span<const FermiPoint> cones, int j);

/// min |S_k (omega_l - omega_j + G)| over all cone pairs and dual vectors G
/// with nonzero argument. With a single cone this is its distance to its own
/// periodic images.
double fermi_separation(const Lattice2D& lattice, std::span<const FermiPoint> cones);

/// 0.3 times the separation.
double default_epsilon(const Lattice2D& lattice, std::span<const FermiPoint> cones);

/// Throws EpsilonTooLarge unless the sets 2|S_l q| < eps are pairwise
/// disjoint (including periodic images). Uses the enclosing disc of each
/// ellipse, so the test is conservative.
void check_epsilon(const Lattice2D& lattice, std::span<const FermiPoint> cones, double eps);

/// Index of the cone whose set 2 sqrt(q.Q q) < eps contains k (q the
/// minimum image of k - omega), if any.
std::optional<int> b_epsilon_membership(const Lattice2D& lattice, std::span<const FermiPoint> cones,
                                        const Vec2& k, double eps);

}  // namespace kubocone
