#pragma once

#include <array>
#include <span>
#include <vector>

#include "kubocone/lattice.hpp"
#include "kubocone/linalg.hpp"

namespace kubocone {

/// One hopping block T(gamma): amplitudes <alpha, 0| H |beta, gamma> for the
/// cell displacement gamma = m1 a1 + m2 a2.
struct HoppingTerm {
  std::array<int, 2> cell{0, 0};
  CMat matrix;
};

enum class PairingPolicy {
  /// Missing partners T(-gamma) are filled in as T(gamma)^H; conflicts throw.
  Complete,
  /// Every partner must be present and consistent.
  Strict,
};

/// Finite-range tight-binding model. Its Bloch matrix is
///   H(k)_ab = sum_gamma exp(i k.(gamma + r_b - r_a)) T(gamma)_ab,
/// which is Hermitian for real k and covariant under dual-lattice shifts.
class HoppingModel {
 public:
  static HoppingModel create(const Lattice2D& lattice, std::vector<Vec2> orbitals,
                             std::vector<HoppingTerm> terms, double fermi_energy,
                             PairingPolicy policy = PairingPolicy::Complete);

  const Lattice2D& lattice() const { return lattice_; }
  int orbital_count() const { return static_cast<int>(orbitals_.size()); }
  const std::vector<Vec2>& orbitals() const { return orbitals_; }
  const std::vector<HoppingTerm>& terms() const { return terms_; }
  double fermi_energy() const { return fermi_energy_; }

  HoppingModel with_fermi_energy(double mu) const;

  struct Bond {
    int row;
    int col;
    Vec2 displacement;
    Complex amplitude;
  };
  const std::vector<Bond>& bonds() const { return bonds_; }

 private:
  HoppingModel() = default;

  Lattice2D lattice_;
  std::vector<Vec2> orbitals_;
  std::vector<HoppingTerm> terms_;
  std::vector<Bond> bonds_;
  double fermi_energy_ = 0.0;
};

/// Deviation of a term list from the pairing T(-gamma) = T(gamma)^H; returns
/// the largest entrywise mismatch over all pairs present (missing partners are
/// not counted).
double pairing_defect(std::span<const HoppingTerm> terms);

/// H(k) together with its analytic k-derivatives. Directions are 1-based to
/// follow the usual (k1, k2) labelling; d2h holds (11, 12, 22).
struct BlochMatrices {
  CMat h;
  std::array<CMat, 2> dh;
  std::array<CMat, 3> d2h;

  const CMat& current(int j) const { return dh[j - 1]; }
  const CMat& second(int j, int l) const { return d2h[j + l - 2]; }
};

/// order = 0, 1 or 2 selects how many derivatives are filled.
BlochMatrices evaluate(const HoppingModel& model, const Vec2& k, int order);

CMat h_at(const HoppingModel& model, const Vec2& k);
CMat dh_at(const HoppingModel& model, const Vec2& k, int j);
CMat d2h_at(const HoppingModel& model, const Vec2& k, int j, int l);

/// ||H(k + G) - D H(k) D^H|| with G = m1 b1 + m2 b2 and D = diag(exp(-i G.r_a)).
double covariance_defect(const HoppingModel& model, const Vec2& k, int m1, int m2);

/// Max of ||H(k)|| over a uniform grid.
double spectral_radius(const HoppingModel& model, int n = 24);
/// Max of ||dH/dk_j|| over j and a uniform grid.
double max_current_norm(const HoppingModel& model, int n = 24);

/// Haldane model on the honeycomb lattice with nearest-neighbour distance 1;
/// the Fermi energy is set to -3 t2 cos(phi).
HoppingModel preset_haldane(double t1, double t2, double phi, double mass);

/// H(k) = v1 sin k1 s1 + v2 sin k2 s2 + (u + cos k1 + cos k2) s3 on the unit
/// square lattice, Fermi energy 0.
HoppingModel preset_qwz(double u, double v1, double v2);

/// One orbital on the unit square lattice, H(k) = t (cos k1 + cos k2).
HoppingModel preset_square(double t, double fermi_energy);

/// k-independent diagonal model on the unit square lattice.
HoppingModel preset_onsite(std::span<const double> energies, double fermi_energy);

/// Same model with the Cartesian axes exchanged (x <-> y); sigma_11 and
/// sigma_22 trade places.
HoppingModel swap_axes(const HoppingModel& model);

void check_direction(int j);

}  // namespace kubocone
