#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kubocone/linalg.hpp"

namespace kubocone {

/// Bravais lattice in two dimensions with its reciprocal basis,
/// a_i . b_j = 2 pi delta_ij.
struct Lattice2D {
  Vec2 a1;
  Vec2 a2;
  Vec2 b1;
  Vec2 b2;

  /// |det[a1 a2]|
  double cell_area() const;
  /// |det[b1 b2]|, the measure of the Brillouin zone.
  double bz_area() const;

  /// Coordinates of k in the dual basis: k = beta1 b1 + beta2 b2.
  Vec2 to_dual(const Vec2& k) const;
  Vec2 from_dual(const Vec2& beta) const;

  /// Coordinates of x in the direct basis.
  Vec2 to_direct(const Vec2& x) const;

  Vec2 cell_vector(int m1, int m2) const { return m1 * a1 + m2 * a2; }
  Vec2 dual_vector(int m1, int m2) const { return m1 * b1 + m2 * b2; }

  /// Length of the shortest nonzero dual lattice vector.
  double shortest_dual_vector() const;
};

Lattice2D make_lattice(const Vec2& a1, const Vec2& a2);

/// Reduces k modulo the dual lattice so its dual coordinates lie in [-1/2, 1/2).
Vec2 reduce_to_cell(const Lattice2D& lattice, const Vec2& k);

/// Shortest representative of k modulo the dual lattice (minimum image).
Vec2 minimum_image(const Lattice2D& lattice, const Vec2& k);

/// Midpoint-rule discretization of the Brillouin zone. Each point is the
/// center of a parallelogram cell given in dual coordinates by its center and
/// half-widths; the quadrature weight is the cell's area.
struct KGrid {
  Lattice2D lattice;
  int n1 = 0;
  int n2 = 0;
  std::vector<Vec2> points;
  std::vector<double> weights;
  std::vector<Vec2> dual_centers;
  std::vector<Vec2> half_widths;

  std::size_t size() const { return points.size(); }
  double total_weight() const;
  /// Cartesian diameter of the largest cell (longest diagonal).
  double max_spacing() const;
  /// Cartesian diameter of cell i.
  double spacing(std::size_t i) const;
};

KGrid uniform_grid(const Lattice2D& lattice, int n1, int n2);

/// Same as uniform_grid but with cell centers shifted by `offset` cell widths
/// (in dual coordinates). offset = (0.5, 0.5) moves nodes to cell corners.
KGrid shifted_uniform_grid(const Lattice2D& lattice, int n1, int n2, const Vec2& offset);

/// Splits every cell whose center lies within `radius` (minimum image) of any
/// of `centers` into 4^levels equal sub-cells.
KGrid refined_grid(const Lattice2D& lattice, const KGrid& base, std::span<const Vec2> centers,
                   double radius, int levels);

/// Every cell split 2x2 once; used for grid-doubling error estimates.
KGrid doubled_grid(const KGrid& base);

}  // namespace kubocone
