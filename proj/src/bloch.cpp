#include "kubocone/bloch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

#include "kubocone/error.hpp"
#include "kubocone/spectra.hpp"

namespace kubocone {

namespace {

constexpr double kPairingTolerance = 1e-12;

using CellKey = std::pair<int, int>;

double max_abs_diff(const CMat& a, const CMat& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

void check_direction(int j) {
  if (j != 1 && j != 2) throw Error(ErrorCode::InvalidArgument, "direction index must be 1 or 2");
}

double pairing_defect(std::span<const HoppingTerm> terms) {
  std::map<CellKey, const CMat*> by_cell;
  for (const auto& t : terms) by_cell[{t.cell[0], t.cell[1]}] = &t.matrix;
  double worst = 0.0;
  for (const auto& [cell, matrix] : by_cell) {
    auto partner = by_cell.find({-cell.first, -cell.second});
    if (partner == by_cell.end()) continue;
    if (partner->second->rows() != matrix->rows() || partner->second->cols() != matrix->cols()) {
      return std::numeric_limits<double>::infinity();
    }
    worst = std::max(worst, max_abs_diff(*partner->second, matrix->adjoint()));
  }
  return worst;
}

HoppingModel HoppingModel::create(const Lattice2D& lattice, std::vector<Vec2> orbitals,
                                  std::vector<HoppingTerm> terms, double fermi_energy,
                                  PairingPolicy policy) {
  const int n = static_cast<int>(orbitals.size());
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "model needs at least one orbital");
  if (!std::isfinite(fermi_energy)) throw Error(ErrorCode::InvalidArgument, "fermi energy must be finite");

  // Duplicate cells are summed.
  std::map<CellKey, CMat> by_cell;
  for (auto& t : terms) {
    if (t.matrix.rows() != n || t.matrix.cols() != n) {
      throw Error(ErrorCode::InvalidArgument, "hopping matrix for cell (" + std::to_string(t.cell[0]) +
                                                  "," + std::to_string(t.cell[1]) + ") is not N x N");
    }
    if (!t.matrix.allFinite()) throw Error(ErrorCode::InvalidArgument, "hopping matrix has non-finite entries");
    auto [it, inserted] = by_cell.try_emplace({t.cell[0], t.cell[1]}, t.matrix);
    if (!inserted) it->second += t.matrix;
  }

  std::vector<std::pair<CellKey, CMat>> missing;
  for (const auto& [cell, matrix] : by_cell) {
    const CellKey opposite{-cell.first, -cell.second};
    auto partner = by_cell.find(opposite);
    if (partner == by_cell.end()) {
      if (policy == PairingPolicy::Strict) {
        throw Error(ErrorCode::HermiticityConflict, "missing partner for cell (" + std::to_string(cell.first) +
                                                        "," + std::to_string(cell.second) + ")");
      }
      missing.emplace_back(opposite, matrix.adjoint());
      continue;
    }
    if (max_abs_diff(partner->second, matrix.adjoint()) > kPairingTolerance) {
      throw Error(ErrorCode::HermiticityConflict, "T(-gamma) != T(gamma)^H for cell (" +
                                                      std::to_string(cell.first) + "," +
                                                      std::to_string(cell.second) + ")");
    }
  }
  for (auto& [cell, matrix] : missing) by_cell.emplace(cell, std::move(matrix));

  HoppingModel model;
  model.lattice_ = lattice;
  model.orbitals_ = std::move(orbitals);
  model.fermi_energy_ = fermi_energy;
  for (auto& [cell, matrix] : by_cell) {
    model.terms_.push_back(HoppingTerm{{cell.first, cell.second}, matrix});
    const Vec2 gamma = lattice.cell_vector(cell.first, cell.second);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        const Complex amp = matrix(a, b);
        if (amp == Complex(0.0, 0.0)) continue;
        model.bonds_.push_back(Bond{a, b, gamma + model.orbitals_[b] - model.orbitals_[a], amp});
      }
    }
  }
  return model;
}

HoppingModel HoppingModel::with_fermi_energy(double mu) const {
  HoppingModel copy = *this;
  copy.fermi_energy_ = mu;
  return copy;
}

BlochMatrices evaluate(const HoppingModel& model, const Vec2& k, int order) {
  const int n = model.orbital_count();
  BlochMatrices out;
  out.h = CMat::Zero(n, n);
  if (order >= 1) {
    for (auto& m : out.dh) m = CMat::Zero(n, n);
  }
  if (order >= 2) {
    for (auto& m : out.d2h) m = CMat::Zero(n, n);
  }
  for (const auto& bond : model.bonds()) {
    const double phase = k.dot(bond.displacement);
    const Complex term = bond.amplitude * Complex(std::cos(phase), std::sin(phase));
    out.h(bond.row, bond.col) += term;
    if (order >= 1) {
      const Vec2& d = bond.displacement;
      out.dh[0](bond.row, bond.col) += kI * d.x() * term;
      out.dh[1](bond.row, bond.col) += kI * d.y() * term;
      if (order >= 2) {
        out.d2h[0](bond.row, bond.col) -= d.x() * d.x() * term;
        out.d2h[1](bond.row, bond.col) -= d.x() * d.y() * term;
        out.d2h[2](bond.row, bond.col) -= d.y() * d.y() * term;
      }
    }
  }
  // Pairing holds to 1e-12, and the phase sums cancel imaginary parts only up
  // to rounding; project back onto Hermitian matrices.
  auto hermitian = [](CMat& m) { m = (0.5 * (m + m.adjoint())).eval(); };
  hermitian(out.h);
  if (order >= 1) {
    for (auto& m : out.dh) hermitian(m);
  }
  if (order >= 2) {
    for (auto& m : out.d2h) hermitian(m);
  }
  return out;
}

CMat h_at(const HoppingModel& model, const Vec2& k) { return evaluate(model, k, 0).h; }

CMat dh_at(const HoppingModel& model, const Vec2& k, int j) {
  check_direction(j);
  return evaluate(model, k, 1).current(j);
}

CMat d2h_at(const HoppingModel& model, const Vec2& k, int j, int l) {
  check_direction(j);
  check_direction(l);
  return evaluate(model, k, 2).second(j, l);
}

double covariance_defect(const HoppingModel& model, const Vec2& k, int m1, int m2) {
  const Vec2 g = model.lattice().dual_vector(m1, m2);
  const int n = model.orbital_count();
  CVec diag(n);
  for (int a = 0; a < n; ++a) {
    const double phase = -g.dot(model.orbitals()[a]);
    diag[a] = Complex(std::cos(phase), std::sin(phase));
  }
  const CMat conj = diag.asDiagonal() * h_at(model, k) * diag.conjugate().asDiagonal();
  return operator_norm(h_at(model, k + g) - conj);
}

double spectral_radius(const HoppingModel& model, int n) {
  const KGrid grid = uniform_grid(model.lattice(), n, n);
  double best = 0.0;
  for (const auto& k : grid.points) {
    const RVec values = eigh(h_at(model, k)).values;
    best = std::max({best, std::abs(values[0]), std::abs(values[values.size() - 1])});
  }
  return best;
}

double max_current_norm(const HoppingModel& model, int n) {
  const KGrid grid = uniform_grid(model.lattice(), n, n);
  double best = 0.0;
  for (const auto& k : grid.points) {
    const BlochMatrices m = evaluate(model, k, 1);
    best = std::max({best, operator_norm(m.dh[0]), operator_norm(m.dh[1])});
  }
  return best;
}

HoppingModel preset_haldane(double t1, double t2, double phi, double mass) {
  if (t1 == 0.0) throw Error(ErrorCode::InvalidArgument, "haldane preset requires t1 != 0");
  const double s3 = std::sqrt(3.0);
  const Lattice2D lattice = make_lattice(Vec2(1.5, 0.5 * s3), Vec2(1.5, -0.5 * s3));
  // A at the origin, B one bond length along x; the three bonds A -> B point
  // along (1,0), (-1/2, -sqrt3/2) [cell (-1,0)] and (-1/2, sqrt3/2) [cell (0,-1)].
  std::vector<Vec2> orbitals{Vec2(0.0, 0.0), Vec2(1.0, 0.0)};
  std::vector<HoppingTerm> terms;
  auto block = [](Complex aa, Complex ab, Complex ba, Complex bb) {
    CMat m(2, 2);
    m << aa, ab, ba, bb;
    return m;
  };
  const Complex zero{0.0, 0.0};
  const Complex forward = t2 * std::exp(kI * phi);
  const Complex backward = std::conj(forward);
  // Second-neighbour vectors c1 = a1 - a2, c2 = a2, c3 = -a1 (cells (1,-1),
  // (0,1), (-1,0)) are 120 degrees apart. A hops along +c_i with t2 e^{i phi},
  // B with t2 e^{-i phi}; the -c_i partners come from pairing completion.
  terms.push_back({{0, 0}, block(mass, t1, t1, -mass)});
  terms.push_back({{-1, 0}, block(forward, t1, zero, backward)});
  terms.push_back({{0, -1}, block(backward, t1, zero, forward)});
  terms.push_back({{1, -1}, block(forward, zero, zero, backward)});
  return HoppingModel::create(lattice, std::move(orbitals), std::move(terms), -3.0 * t2 * std::cos(phi));
}

HoppingModel preset_qwz(double u, double v1, double v2) {
  const Lattice2D lattice = make_lattice(Vec2(1.0, 0.0), Vec2(0.0, 1.0));
  const CMat s1 = (CMat(2, 2) << 0.0, 1.0, 1.0, 0.0).finished();
  const CMat s2 = (CMat(2, 2) << 0.0, -kI, kI, 0.0).finished();
  const CMat s3 = (CMat(2, 2) << 1.0, 0.0, 0.0, -1.0).finished();
  std::vector<HoppingTerm> terms;
  terms.push_back({{0, 0}, u * s3});
  terms.push_back({{1, 0}, v1 / (2.0 * kI) * s1 + 0.5 * s3});
  terms.push_back({{0, 1}, v2 / (2.0 * kI) * s2 + 0.5 * s3});
  return HoppingModel::create(lattice, {Vec2::Zero(), Vec2::Zero()}, std::move(terms), 0.0);
}

HoppingModel preset_square(double t, double fermi_energy) {
  const Lattice2D lattice = make_lattice(Vec2(1.0, 0.0), Vec2(0.0, 1.0));
  const CMat half = CMat::Constant(1, 1, 0.5 * t);
  std::vector<HoppingTerm> terms{{{1, 0}, half}, {{0, 1}, half}};
  return HoppingModel::create(lattice, {Vec2::Zero()}, std::move(terms), fermi_energy);
}

HoppingModel preset_onsite(std::span<const double> energies, double fermi_energy) {
  const Lattice2D lattice = make_lattice(Vec2(1.0, 0.0), Vec2(0.0, 1.0));
  const int n = static_cast<int>(energies.size());
  CMat onsite = CMat::Zero(n, n);
  for (int a = 0; a < n; ++a) onsite(a, a) = energies[a];
  return HoppingModel::create(lattice, std::vector<Vec2>(n, Vec2::Zero()), {{{0, 0}, onsite}}, fermi_energy);
}

HoppingModel swap_axes(const HoppingModel& model) {
  auto swap = [](const Vec2& v) { return Vec2(v.y(), v.x()); };
  const Lattice2D& lat = model.lattice();
  const Lattice2D swapped = make_lattice(swap(lat.a2), swap(lat.a1));
  std::vector<Vec2> orbitals;
  for (const auto& r : model.orbitals()) orbitals.push_back(swap(r));
  std::vector<HoppingTerm> terms;
  for (const auto& t : model.terms()) terms.push_back({{t.cell[1], t.cell[0]}, t.matrix});
  return HoppingModel::create(swapped, std::move(orbitals), std::move(terms), model.fermi_energy(),
                              PairingPolicy::Strict);
}

}  // namespace kubocone
