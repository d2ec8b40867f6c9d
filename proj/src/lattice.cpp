#include "kubocone/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kubocone/error.hpp"

namespace kubocone {

namespace {

double det2(const Vec2& u, const Vec2& v) { return u.x() * v.y() - u.y() * v.x(); }

}  // namespace

double Lattice2D::cell_area() const { return std::abs(det2(a1, a2)); }

double Lattice2D::bz_area() const { return std::abs(det2(b1, b2)); }

Vec2 Lattice2D::to_dual(const Vec2& k) const {
  // a_i . k = 2 pi beta_i
  return Vec2(a1.dot(k), a2.dot(k)) / (2.0 * kPi);
}

Vec2 Lattice2D::from_dual(const Vec2& beta) const { return beta.x() * b1 + beta.y() * b2; }

Vec2 Lattice2D::to_direct(const Vec2& x) const {
  return Vec2(b1.dot(x), b2.dot(x)) / (2.0 * kPi);
}

double Lattice2D::shortest_dual_vector() const {
  double best = std::numeric_limits<double>::infinity();
  for (int m1 = -2; m1 <= 2; ++m1) {
    for (int m2 = -2; m2 <= 2; ++m2) {
      if (m1 == 0 && m2 == 0) continue;
      best = std::min(best, dual_vector(m1, m2).norm());
    }
  }
  return best;
}

Lattice2D make_lattice(const Vec2& a1, const Vec2& a2) {
  const double det = det2(a1, a2);
  if (std::abs(det) < 1e-12 * a1.norm() * a2.norm() || !std::isfinite(det)) {
    throw Error(ErrorCode::DegenerateBasis, "lattice vectors are linearly dependent");
  }
  Mat2 a;
  a.col(0) = a1;
  a.col(1) = a2;
  // Rows of A^{-1} satisfy row_i . a_j = delta_ij.
  const Mat2 b = 2.0 * kPi * a.inverse().transpose();
  return Lattice2D{a1, a2, b.col(0), b.col(1)};
}

Vec2 reduce_to_cell(const Lattice2D& lattice, const Vec2& k) {
  Vec2 beta = lattice.to_dual(k);
  for (int i = 0; i < 2; ++i) {
    beta[i] -= std::floor(beta[i] + 0.5);
    // floor() can leave exactly +1/2 after rounding in the subtraction.
    if (beta[i] >= 0.5) beta[i] -= 1.0;
  }
  return lattice.from_dual(beta);
}

Vec2 minimum_image(const Lattice2D& lattice, const Vec2& k) {
  const Vec2 reduced = reduce_to_cell(lattice, k);
  Vec2 best = reduced;
  double best_norm = reduced.squaredNorm();
  for (int m1 = -1; m1 <= 1; ++m1) {
    for (int m2 = -1; m2 <= 1; ++m2) {
      const Vec2 candidate = reduced + lattice.dual_vector(m1, m2);
      if (candidate.squaredNorm() < best_norm) {
        best_norm = candidate.squaredNorm();
        best = candidate;
      }
    }
  }
  return best;
}

double KGrid::total_weight() const {
  double total = 0.0;
  for (double w : weights) total += w;
  return total;
}

double KGrid::spacing(std::size_t i) const {
  const Vec2 e1 = 2.0 * half_widths[i].x() * lattice.b1;
  const Vec2 e2 = 2.0 * half_widths[i].y() * lattice.b2;
  return std::max((e1 + e2).norm(), (e1 - e2).norm());
}

double KGrid::max_spacing() const {
  double best = 0.0;
  for (std::size_t i = 0; i < size(); ++i) best = std::max(best, spacing(i));
  return best;
}

KGrid shifted_uniform_grid(const Lattice2D& lattice, int n1, int n2, const Vec2& offset) {
  if (n1 < 1 || n2 < 1) throw Error(ErrorCode::InvalidArgument, "grid counts must be >= 1");
  KGrid grid;
  grid.lattice = lattice;
  grid.n1 = n1;
  grid.n2 = n2;
  const std::size_t count = static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2);
  grid.points.reserve(count);
  grid.weights.assign(count, lattice.bz_area() / static_cast<double>(count));
  grid.dual_centers.reserve(count);
  grid.half_widths.assign(count, Vec2(0.5 / n1, 0.5 / n2));
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const Vec2 beta((i + 0.5 + offset.x()) / n1 - 0.5, (j + 0.5 + offset.y()) / n2 - 0.5);
      grid.dual_centers.push_back(beta);
      grid.points.push_back(lattice.from_dual(beta));
    }
  }
  return grid;
}

KGrid uniform_grid(const Lattice2D& lattice, int n1, int n2) {
  return shifted_uniform_grid(lattice, n1, n2, Vec2::Zero());
}

namespace {

void append_split(const Lattice2D& lattice, const Vec2& center, const Vec2& half, double weight,
                  int levels, KGrid& out) {
  if (levels == 0) {
    out.points.push_back(lattice.from_dual(center));
    out.weights.push_back(weight);
    out.dual_centers.push_back(center);
    out.half_widths.push_back(half);
    return;
  }
  const Vec2 quarter = 0.5 * half;
  for (int s1 : {-1, 1}) {
    for (int s2 : {-1, 1}) {
      const Vec2 sub = center + Vec2(s1 * quarter.x(), s2 * quarter.y());
      append_split(lattice, sub, quarter, 0.25 * weight, levels - 1, out);
    }
  }
}

KGrid empty_like(const KGrid& base) {
  KGrid out;
  out.lattice = base.lattice;
  out.n1 = base.n1;
  out.n2 = base.n2;
  return out;
}

}  // namespace

KGrid refined_grid(const Lattice2D& lattice, const KGrid& base, std::span<const Vec2> centers,
                   double radius, int levels) {
  if (levels < 0) throw Error(ErrorCode::InvalidArgument, "refinement levels must be >= 0");
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "refinement radius must be > 0");
  if (levels == 0 || centers.empty()) return base;
  KGrid out = empty_like(base);
  out.lattice = lattice;
  for (std::size_t i = 0; i < base.size(); ++i) {
    bool inside = false;
    for (const Vec2& c : centers) {
      if (minimum_image(lattice, base.points[i] - c).norm() < radius) {
        inside = true;
        break;
      }
    }
    append_split(lattice, base.dual_centers[i], base.half_widths[i], base.weights[i],
                 inside ? levels : 0, out);
  }
  return out;
}

KGrid doubled_grid(const KGrid& base) {
  KGrid out = empty_like(base);
  const std::size_t n = base.size();
  out.points.reserve(4 * n);
  out.weights.reserve(4 * n);
  out.dual_centers.reserve(4 * n);
  out.half_widths.reserve(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    append_split(base.lattice, base.dual_centers[i], base.half_widths[i], base.weights[i], 1, out);
  }
  return out;
}

}  // namespace kubocone
