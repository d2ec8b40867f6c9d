#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kubocone/bloch.hpp"
#include "kubocone/cones.hpp"
#include "kubocone/lattice.hpp"

namespace kubocone {

/// Brillouin-zone partition where base cell c is split into 4^levels[c]
/// equal sub-cells. Sub-cells are generated on the fly, so deep refinement
/// costs no memory.
/// Sub-cell of a base cell: centre in dual coordinates, splitting depth.
struct SubCell {
  Vec2 center;
  int level = 0;
};

struct CellPlan {
  Lattice2D lattice;
  std::vector<Vec2> dual_centers;
  std::vector<Vec2> half_widths;
  std::vector<double> weights;
  std::vector<int> levels;
  /// Explicit sub-cells of graded cells; empty means 4^levels uniform ones.
  std::vector<std::vector<SubCell>> graded;
  std::string label;

  CellPlan() = default;
  CellPlan(const KGrid& grid);  // NOLINT: implicit on purpose

  std::size_t point_count() const;
  double total_weight() const;
  /// Every cell split once more.
  CellPlan doubled() const;
};

/// Cells whose center lies within `radius` (minimum image) of a center get
/// `levels` extra splittings.
CellPlan refined_plan(const KGrid& base, std::span<const Vec2> centers, double radius, int levels);

enum class Quantity { fjl, ftilde, fsing, zeta, schwinger };
std::string_view to_string(Quantity q);

struct KuboEstimate {
  Quantity quantity = Quantity::fjl;
  double eta = 0.0;
  double value = 0.0;
  /// (4/3)|I(G) - I(G doubled)|; zero when not requested.
  double quad_error = 0.0;
  /// |Im| of the direct complex sum (fjl only).
  double imag_residue = 0.0;
  std::size_t grid_points = 0;
  std::string grid;
};

struct EvalOptions {
  /// GridTooCoarse when a cell with gap < 8 eta + spacing * max||dH|| has
  /// spacing * max||dH|| > eta / 4.
  bool check_resolution = true;
  bool estimate_error = true;
};

/// (1/(2 pi)^2) sum_k w sum_{a,b} (J_j)_ba (J_l)_ab (n_a - n_b) i / (eta + i(Lambda_a - Lambda_b)),
/// summed in complex arithmetic.
KuboEstimate fjl_eta(const HoppingModel& model, double eta, int j, int l, const CellPlan& plan,
                     const EvalOptions& options = {});

/// (2/(2 pi)^2) sum_k w sum_{q occ, p empty} |(J_j)_pq|^2 D / (eta^2 + D^2), D = Lambda_q - Lambda_p.
KuboEstimate ftilde_jj(const HoppingModel& model, double eta, int j, const CellPlan& plan,
                       const EvalOptions& options = {});

/// (1/(2 pi)^2) sum_k w Tr(d_j d_l H P_mu)
KuboEstimate schwinger(const HoppingModel& model, int j, int l, const CellPlan& plan,
                       const EvalOptions& options = {});

/// Two-band Lorentzian sum restricted to the cone neighbourhoods 2|S q| < eps.
KuboEstimate fjj_sing(const HoppingModel& model, std::span<const FermiPoint> cones, double eta, int j,
                      double eps, const CellPlan& plan, const EvalOptions& options = {});

/// (1/(2 pi)^2) sum over the cone neighbourhoods of
/// w (L- - L+)/(eta^2 + (L+ - L-)^2) [(L+ - mu) d_j^2 L+ + (L- - mu) d_j^2 L-].
KuboEstimate zeta_jj(const HoppingModel& model, std::span<const FermiPoint> cones, double eta, int j,
                     double eps, const CellPlan& plan, const EvalOptions& options = {});

/// d_j^2 Lambda_n by central differences of the Hellmann-Feynman slope.
double band_curvature(const HoppingModel& model, const Vec2& k, int band, int j);

/// (f(2 eta) - f(eta)) / eta
double sigma_hat(double f_double_eta, double f_eta, double eta);

/// R_i = 2 s_{i+1} - s_i for a sequence at halving eta.
std::vector<double> richardson_sequence(std::span<const double> sigma_hats);

struct GridPolicy {
  int base = 96;
  /// Refinement radius = max(radius_factor * eta_big, 4 eta + max||dH|| h0) / sqrt(lambda_min),
  /// at least one base cell diameter h0.
  double radius_factor = 8.0;
  /// Near a cone, spacing <= eta_small / (spacing_factor * max||dH||).
  double spacing_factor = 8.0;
  /// Further out, spacing * max||dH|| <= sqrt(lambda_min) (distance - spacing) / grade_factor.
  double grade_factor = 16.0;
  int max_levels = 10;
  EvalOptions eval;
};

/// Grid for the eta pair (2 eta, eta).
CellPlan plan_for_eta(const HoppingModel& model, std::span<const FermiPoint> cones, double eta,
                      const GridPolicy& policy);

struct SigmaStep {
  double eta = 0.0;
  double f_double_eta = 0.0;
  double f_eta = 0.0;
  double sigma_hat = 0.0;
  double quad_error = 0.0;
  std::size_t grid_points = 0;
};

struct SigmaSequence {
  Quantity quantity = Quantity::fjl;
  int j = 1;
  int l = 1;
  std::vector<SigmaStep> steps;
  std::vector<double> richardson;
  double value = 0.0;
  bool converged = false;
};

/// {0.2, 0.1, 0.05, 0.025, 0.0125} * spectral radius / 10.
std::vector<double> default_eta_sequence(const HoppingModel& model);

/// Throws InvalidArgument unless etas are positive and halve at each step.
void check_eta_sequence(std::span<const double> etas);

/// sigma-hat sequence of one response function (fjl, ftilde, fsing or zeta).
/// Each consecutive eta pair is evaluated on one shared grid.
SigmaSequence estimate_sigma(const HoppingModel& model, Quantity quantity, int j, int l,
                             std::span<const FermiPoint> cones, std::optional<double> eps,
                             std::span<const double> etas, const GridPolicy& policy = {});

enum class Method { closed_form, kubo_extrapolation };
std::string_view to_string(Method m);

struct ConductivityReport {
  Method method = Method::closed_form;
  Mat2 sigma = Mat2::Zero();
  std::array<std::array<bool, 2>, 2> present{};
  std::vector<FermiPoint> cones;
  /// Closed form: per-cone contributions for each requested (j, j).
  std::vector<std::pair<std::array<int, 2>, std::vector<double>>> contributions;
  /// Kubo: the sigma-hat sequences.
  std::vector<SigmaSequence> sequences;
  double min_gap = 0.0;
  bool converged = true;
};

ConductivityReport sigma_closed(const HoppingModel& model, std::span<const std::array<int, 2>> directions,
                                const FermiSearchOptions& search = {});

/// Kubo estimate of sigma_jl from fjl_eta along the eta sequence.
ConductivityReport sigma_kubo(const HoppingModel& model, int j, int l, std::span<const double> etas,
                              const GridPolicy& policy = {}, std::optional<std::vector<FermiPoint>> cones = {});

/// sigma_12 of a gapped model; Gapless when Fermi points are found or the
/// gap is below 10 max(eta).
ConductivityReport sigma_hall(const HoppingModel& model, std::span<const double> etas,
                              const GridPolicy& policy = {});

}  // namespace kubocone
