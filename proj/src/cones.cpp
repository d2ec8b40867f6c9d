#include "kubocone/cones.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "kubocone/error.hpp"
#include "kubocone/lattice.hpp"
#include "kubocone/parallel.hpp"
#include "kubocone/spectra.hpp"

namespace kubocone {

namespace {

constexpr double kDedupRadius = 1e-6;

// Gap between bands m and m+1 (0-based m-1 and m).
double band_gap(const HoppingModel& model, const Vec2& k, int m) {
  const RVec values = eigh(h_at(model, k)).values;
  return values[m] - values[m - 1];
}

struct Simplex {
  std::array<Vec2, 3> x;
  std::array<double, 3> f;
};

// Nelder-Mead on a function of two variables, started from a right simplex of
// size `step` at `start`.
template <class F>
std::pair<Vec2, double> nelder_mead(F&& f, const Vec2& start, double step, double xtol, int max_iter) {
  Simplex s;
  s.x = {start, start + Vec2(step, 0.0), start + Vec2(0.0, step)};
  for (int i = 0; i < 3; ++i) s.f[i] = f(s.x[i]);
  for (int iter = 0; iter < max_iter; ++iter) {
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) { return s.f[a] < s.f[b]; });
    Simplex sorted;
    for (int i = 0; i < 3; ++i) {
      sorted.x[i] = s.x[order[i]];
      sorted.f[i] = s.f[order[i]];
    }
    s = sorted;
    const double diameter = std::max((s.x[1] - s.x[0]).norm(), (s.x[2] - s.x[0]).norm());
    if (diameter < xtol || s.f[0] == 0.0) break;

    const Vec2 centroid = 0.5 * (s.x[0] + s.x[1]);
    const Vec2 xr = centroid + (centroid - s.x[2]);
    const double fr = f(xr);
    if (fr < s.f[0]) {
      const Vec2 xe = centroid + 2.0 * (centroid - s.x[2]);
      const double fe = f(xe);
      if (fe < fr) {
        s.x[2] = xe;
        s.f[2] = fe;
      } else {
        s.x[2] = xr;
        s.f[2] = fr;
      }
    } else if (fr < s.f[1]) {
      s.x[2] = xr;
      s.f[2] = fr;
    } else {
      const bool outside = fr < s.f[2];
      const Vec2 xc = outside ? centroid + 0.5 * (xr - centroid) : centroid + 0.5 * (s.x[2] - centroid);
      const double fc = f(xc);
      if (fc < std::min(fr, s.f[2])) {
        s.x[2] = xc;
        s.f[2] = fc;
      } else {
        for (int i = 1; i < 3; ++i) {
          s.x[i] = s.x[0] + 0.5 * (s.x[i] - s.x[0]);
          s.f[i] = f(s.x[i]);
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (s.f[i] < s.f[best]) best = i;
  }
  return {s.x[best], s.f[best]};
}

// Periodic distance between two points given in dual coordinates.
double dual_distance(const Vec2& a, const Vec2& b) {
  Vec2 d = a - b;
  for (int i = 0; i < 2; ++i) d[i] -= std::round(d[i]);
  return d.cwiseAbs().maxCoeff();
}

// Value at 0 of the polynomial through (x_i, y_i) (Neville).
double extrapolate_to_zero(std::vector<double> x, std::vector<double> y) {
  const std::size_t n = x.size();
  for (std::size_t level = 1; level < n; ++level) {
    for (std::size_t i = 0; i + level < n; ++i) {
      y[i] = (x[i + level] * y[i] - x[i] * y[i + 1]) / (x[i + level] - x[i]);
    }
  }
  return y[0];
}

}  // namespace

FermiSearchResult find_fermi_points(const HoppingModel& model, const FermiSearchOptions& options) {
  if (options.coarse < 4) throw Error(ErrorCode::InvalidArgument, "coarse grid must be at least 4 x 4");
  if (!(options.tolerance > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  const Lattice2D& lattice = model.lattice();
  const double mu = model.fermi_energy();
  const int n = options.coarse;
  const KGrid grid = shifted_uniform_grid(lattice, n, n, options.offset);

  FermiSearchResult result;
  result.tolerance = options.tolerance * spectral_radius(model);
  const double tol = result.tolerance;

  // Occupied count at each point, bracketed so that a grid point sitting on
  // a Fermi point does not count as a change of occupation.
  std::vector<RVec> values(grid.size());
  std::vector<int> lo(grid.size());
  std::vector<int> hi(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    values[i] = eigh(h_at(model, grid.points[i])).values;
    lo[i] = static_cast<int>((values[i].array() < mu - tol).count());
    hi[i] = static_cast<int>((values[i].array() <= mu + tol).count());
  });
  const int m = *std::max_element(lo.begin(), lo.end());
  if (m > *std::min_element(hi.begin(), hi.end())) {
    throw Error(ErrorCode::BandCrossingRegion, "occupied band count varies over the Brillouin zone");
  }
  if (m == 0 || m == model.orbital_count()) {
    throw Error(ErrorCode::AllBandsOnOneSide, "all bands lie on one side of the Fermi energy");
  }
  std::vector<double> gaps(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) gaps[i] = values[i][m] - values[i][m - 1];

  result.occupied = m;
  result.min_gap = *std::min_element(gaps.begin(), gaps.end());

  const int below = static_cast<int>(std::count_if(gaps.begin(), gaps.end(), [&](double g) { return g < tol; }));
  if (below > 4) {
    throw Error(ErrorCode::BandCrossingRegion, std::to_string(below) + " coarse grid points have a vanishing gap");
  }

  const double h = grid.max_spacing();
  const double seed_threshold = 2.0 * h * max_current_norm(model);
  auto at = [&](int i1, int i2) { return static_cast<std::size_t>(((i1 + n) % n) * n + (i2 + n) % n); };
  std::vector<Vec2> seeds;
  for (int i1 = 0; i1 < n; ++i1) {
    for (int i2 = 0; i2 < n; ++i2) {
      const std::size_t c = at(i1, i2);
      if (gaps[c] >= seed_threshold) continue;
      bool minimum = true;
      for (int d1 = -1; d1 <= 1 && minimum; ++d1) {
        for (int d2 = -1; d2 <= 1; ++d2) {
          if (d1 == 0 && d2 == 0) continue;
          const std::size_t o = at(i1 + d1, i2 + d2);
          if (gaps[o] < gaps[c] || (gaps[o] == gaps[c] && o < c)) {
            minimum = false;
            break;
          }
        }
      }
      if (minimum) seeds.push_back(grid.points[c]);
    }
  }

  auto objective = [&](const Vec2& k) { return band_gap(model, k, m); };
  std::vector<Vec2> found_dual;
  for (const auto& seed : seeds) {
    auto [k, g] = nelder_mead(objective, seed, 0.5 * h, 1e-13 * h, 4000);
    // Restarts recover from premature collapse on the non-smooth minimum.
    for (double step : {1e-3 * h, 1e-6 * h}) {
      auto [k2, g2] = nelder_mead(objective, k, step, 1e-14 * h, 4000);
      if (g2 <= g) {
        k = k2;
        g = g2;
      }
    }
    result.min_gap = std::min(result.min_gap, g);
    if (g >= result.tolerance) {
      if (options.strict) {
        throw Error(ErrorCode::NoConvergence, "gap minimum plateaus at " + std::to_string(g));
      }
      if (g < 100.0 * result.tolerance) {
        std::ostringstream msg;
        msg << "near-threshold gap minimum " << g << " at (" << k.x() << ", " << k.y() << ")";
        result.warnings.push_back(msg.str());
      }
      continue;
    }
    const RVec values = eigh(h_at(model, k)).values;
    const double level = 0.5 * (values[m] + values[m - 1]);
    if (std::abs(level - mu) > 100.0 * result.tolerance) {
      std::ostringstream msg;
      msg << "crossing at (" << k.x() << ", " << k.y() << ") lies at energy " << level << ", not at mu";
      result.warnings.push_back(msg.str());
    }
    const Vec2 beta = lattice.to_dual(reduce_to_cell(lattice, k));
    const bool duplicate = std::any_of(found_dual.begin(), found_dual.end(),
                                       [&](const Vec2& other) { return dual_distance(other, beta) < kDedupRadius; });
    if (!duplicate) found_dual.push_back(beta);
  }

  std::sort(found_dual.begin(), found_dual.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  for (const auto& beta : found_dual) result.points.push_back(lattice.from_dual(beta));
  return result;
}

std::vector<double> default_fit_radii(const Lattice2D& lattice) {
  const double b = lattice.shortest_dual_vector();
  return {2e-2 * b, 1e-2 * b, 5e-3 * b};
}

ConeFit fit_cone(const HoppingModel& model, const Vec2& omega, std::span<const double> radii, int directions) {
  std::vector<double> rs(radii.begin(), radii.end());
  if (rs.empty()) rs = default_fit_radii(model.lattice());
  if (rs.size() < 2) throw Error(ErrorCode::InvalidArgument, "cone fit needs at least two radii");
  if (directions < 4 || directions % 2 != 0) {
    throw Error(ErrorCode::InvalidArgument, "cone fit needs an even number of directions >= 4");
  }
  for (double r : rs) {
    if (!(r > 0.0)) throw Error(ErrorCode::InvalidArgument, "fit radii must be positive");
  }
  std::sort(rs.begin(), rs.end(), std::greater<>());
  const double mu = model.fermi_energy();
  const int n = model.orbital_count();
  const int m = occupied_count(eigh(h_at(model, omega + Vec2(rs.front(), 0.0))), mu);
  if (m == 0 || m == n) throw Error(ErrorCode::AllBandsOnOneSide, "no crossing bands at omega");

  const int count = static_cast<int>(rs.size());
  std::vector<std::array<double, 3>> q_fits(count);
  std::vector<Vec2> tilt_fits(count);
  std::vector<double> half_gap2;
  std::vector<Vec2> qs;
  for (int ri = 0; ri < count; ++ri) {
    const double r = rs[ri];
    Eigen::MatrixXd quad(directions, 3);
    Eigen::MatrixXd lin(directions, 2);
    RVec y(directions);
    RVec s(directions);
    double window = 0.0;
    double third = std::numeric_limits<double>::infinity();
    qs.clear();
    for (int d = 0; d < directions; ++d) {
      const double theta = 2.0 * kPi * d / directions;
      const Vec2 q = r * Vec2(std::cos(theta), std::sin(theta));
      const RVec values = eigh(h_at(model, omega + q)).values;
      const double lo = values[m - 1];
      const double hi = values[m];
      window = std::max({window, std::abs(lo - mu), std::abs(hi - mu)});
      if (m >= 2) third = std::min(third, std::abs(values[m - 2] - mu));
      if (m + 1 < n) third = std::min(third, std::abs(values[m + 1] - mu));
      quad.row(d) << q.x() * q.x(), 2.0 * q.x() * q.y(), q.y() * q.y();
      lin.row(d) << q.x(), q.y();
      y[d] = 0.25 * (hi - lo) * (hi - lo);
      s[d] = 0.5 * (hi + lo) - mu;
      qs.push_back(q);
    }
    if (third <= 10.0 * window) {
      throw Error(ErrorCode::TwoBandIsolationFailed, "another band is within 10x the cone window at radius " +
                                                         std::to_string(r));
    }
    const RVec qc = quad.colPivHouseholderQr().solve(y);
    const RVec tc = lin.colPivHouseholderQr().solve(s);
    q_fits[ri] = {qc[0], qc[1], qc[2]};
    tilt_fits[ri] = Vec2(tc[0], tc[1]);
    if (ri == count - 1) half_gap2.assign(y.data(), y.data() + directions);
  }

  std::vector<double> x2(count);
  for (int ri = 0; ri < count; ++ri) x2[ri] = rs[ri] * rs[ri];
  auto extrapolated = [&](auto pick) {
    std::vector<double> v(count);
    for (int ri = 0; ri < count; ++ri) v[ri] = pick(ri);
    return extrapolate_to_zero(x2, v);
  };

  ConeFit fit;
  const double q11 = extrapolated([&](int ri) { return q_fits[ri][0]; });
  const double q12 = extrapolated([&](int ri) { return q_fits[ri][1]; });
  const double q22 = extrapolated([&](int ri) { return q_fits[ri][2]; });
  fit.Q << q11, q12, q12, q22;
  fit.tilt = Vec2(extrapolated([&](int ri) { return tilt_fits[ri].x(); }),
                  extrapolated([&](int ri) { return tilt_fits[ri].y(); }));

  const Eigen::SelfAdjointEigenSolver<Mat2> es(fit.Q, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues()[0];
  const double lmax = es.eigenvalues()[1];
  const double scale = max_current_norm(model);
  // A quadratic touching shows up as a fitted form that shrinks like r^2
  // and extrapolates to almost nothing.
  double widest = 0.0;
  for (const auto& q : q_fits) widest = std::max(widest, q[0] + q[2]);
  if (!(lmax > 1e-10 * scale * scale) || lmin <= 1e-10 * lmax || fit.Q.trace() < 1e-3 * widest) {
    throw Error(ErrorCode::NotConical, "fitted cone form is not positive definite");
  }

  // Residual at the smallest radius: samples at q and -q are averaged so that
  // the odd (warping) part of the dispersion does not count as misfit.
  const auto& last = q_fits[count - 1];
  Mat2 q_small;
  q_small << last[0], last[1], last[1], last[2];
  double misfit = 0.0;
  double norm = 0.0;
  const int half = directions / 2;
  for (int d = 0; d < directions; ++d) {
    const double sym = 0.5 * (half_gap2[d] + half_gap2[(d + half) % directions]);
    const double model_value = qs[d].dot(q_small * qs[d]);
    misfit += (sym - model_value) * (sym - model_value);
    norm += sym * sym;
  }
  fit.residual = norm > 0.0 ? std::sqrt(misfit / norm) : 0.0;
  return fit;
}

std::vector<FermiPoint> detect_cones(const HoppingModel& model, const FermiSearchOptions& options) {
  const FermiSearchResult found = find_fermi_points(model, options);
  std::vector<FermiPoint> cones;
  for (const auto& omega : found.points) {
    const ConeFit fit = fit_cone(model, omega);
    cones.push_back(FermiPoint{omega, fit.Q, fit.tilt, fit.residual, gap_at(model, omega)});
  }
  return cones;
}

ConeCondition check_cone_condition(const Mat2& Q, const Vec2& tilt) {
  const Eigen::SelfAdjointEigenSolver<Mat2> es(Q, Eigen::EigenvaluesOnly);
  const double margin = std::sqrt(std::max(0.0, es.eigenvalues()[0])) - tilt.norm();
  return ConeCondition{margin > 0.0, margin};
}

bool is_quantizing(const Mat2& Q) {
  const double tr = Q.trace();
  return std::abs(Q(0, 0) - Q(1, 1)) <= 1e-9 * tr && std::abs(Q(0, 1)) <= 1e-9 * tr;
}

ClosedFormSigma sigma_closed_form(std::span<const FermiPoint> cones, int j) {
  check_direction(j);
  ClosedFormSigma out;
  for (const auto& cone : cones) {
    const double det = cone.Q.determinant();
    if (!(det > 0.0)) throw Error(ErrorCode::NotConical, "cone form is not positive definite");
    const double c = cone.Q(j - 1, j - 1) / (16.0 * std::sqrt(det));
    out.contributions.push_back(c);
    out.sigma += c;
  }
  return out;
}

double fermi_separation(const Lattice2D& lattice, std::span<const FermiPoint> cones) {
  double best = std::numeric_limits<double>::infinity();
  const double floor = 1e-9 * lattice.shortest_dual_vector();
  for (const auto& metric : cones) {
    for (const auto& a : cones) {
      for (const auto& b : cones) {
        const Vec2 base = minimum_image(lattice, a.omega - b.omega);
        for (int m1 = -2; m1 <= 2; ++m1) {
          for (int m2 = -2; m2 <= 2; ++m2) {
            const Vec2 d = base + lattice.dual_vector(m1, m2);
            if (d.norm() < floor) continue;
            best = std::min(best, std::sqrt(d.dot(metric.Q * d)));
          }
        }
      }
    }
  }
  return best;
}

double default_epsilon(const Lattice2D& lattice, std::span<const FermiPoint> cones) {
  return 0.3 * fermi_separation(lattice, cones);
}

void check_epsilon(const Lattice2D& lattice, std::span<const FermiPoint> cones, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  std::vector<double> radius;
  for (const auto& c : cones) {
    const Eigen::SelfAdjointEigenSolver<Mat2> es(c.Q, Eigen::EigenvaluesOnly);
    radius.push_back(eps / (2.0 * std::sqrt(es.eigenvalues()[0])));
  }
  const double floor = 1e-9 * lattice.shortest_dual_vector();
  for (std::size_t a = 0; a < cones.size(); ++a) {
    for (std::size_t b = a; b < cones.size(); ++b) {
      const Vec2 base = minimum_image(lattice, cones[a].omega - cones[b].omega);
      for (int m1 = -2; m1 <= 2; ++m1) {
        for (int m2 = -2; m2 <= 2; ++m2) {
          const Vec2 d = base + lattice.dual_vector(m1, m2);
          if (a == b && d.norm() < floor) continue;
          if (d.norm() < radius[a] + radius[b]) {
            throw Error(ErrorCode::EpsilonTooLarge, "cone neighbourhoods overlap for eps = " + std::to_string(eps));
          }
        }
      }
    }
  }
}

std::optional<int> b_epsilon_membership(const Lattice2D& lattice, std::span<const FermiPoint> cones,
                                        const Vec2& k, double eps) {
  check_epsilon(lattice, cones, eps);
  for (std::size_t l = 0; l < cones.size(); ++l) {
    const Vec2 q = minimum_image(lattice, k - cones[l].omega);
    if (2.0 * std::sqrt(q.dot(cones[l].Q * q)) < eps) return static_cast<int>(l);
  }
  return std::nullopt;
}

}  // namespace kubocone
