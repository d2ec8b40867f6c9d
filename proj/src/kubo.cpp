#include "kubocone/kubo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kubocone/error.hpp"
#include "kubocone/parallel.hpp"
#include "kubocone/simd/lorentzian.hpp"
#include "kubocone/spectra.hpp"

namespace kubocone {

namespace {

constexpr double kInvArea = 1.0 / (4.0 * kPi * kPi);  // 1 / (2 pi)^2
constexpr std::size_t kUnit = 4096;
constexpr double kDegenerate = 1e-12;

double cell_diameter(const Lattice2D& lattice, const Vec2& half) {
  const Vec2 e1 = 2.0 * half.x() * lattice.b1;
  const Vec2 e2 = 2.0 * half.y() * lattice.b2;
  return std::max((e1 + e2).norm(), (e1 - e2).norm());
}

struct SubPoint {
  Vec2 k;
  double weight;
  double spacing;
};

struct Unit {
  std::size_t cell;
  std::size_t first;
  std::size_t count;
};

std::size_t cell_points(const CellPlan& plan, std::size_t c) {
  if (!plan.graded[c].empty()) return plan.graded[c].size();
  return std::size_t{1} << (2 * plan.levels[c]);
}

std::vector<Unit> make_units(const CellPlan& plan) {
  std::vector<Unit> units;
  for (std::size_t c = 0; c < plan.levels.size(); ++c) {
    const std::size_t total = cell_points(plan, c);
    for (std::size_t first = 0; first < total; first += kUnit) {
      units.push_back(Unit{c, first, std::min(kUnit, total - first)});
    }
  }
  return units;
}

template <class Fn>
void for_each_point(const CellPlan& plan, const Unit& unit, Fn&& fn) {
  const Vec2& center = plan.dual_centers[unit.cell];
  const Vec2& half = plan.half_widths[unit.cell];
  const double diameter = cell_diameter(plan.lattice, half);
  const auto& graded = plan.graded[unit.cell];
  if (!graded.empty()) {
    for (std::size_t idx = unit.first; idx < unit.first + unit.count; ++idx) {
      const SubCell& sub = graded[idx];
      const double inv = std::ldexp(1.0, -sub.level);
      fn(SubPoint{plan.lattice.from_dual(sub.center), plan.weights[unit.cell] * inv * inv, diameter * inv});
    }
    return;
  }
  const int level = plan.levels[unit.cell];
  const std::size_t side = std::size_t{1} << level;
  const double inv = 1.0 / static_cast<double>(side);
  const double weight = plan.weights[unit.cell] * inv * inv;
  const double spacing = diameter * inv;
  for (std::size_t idx = unit.first; idx < unit.first + unit.count; ++idx) {
    const std::size_t a = idx / side;
    const std::size_t b = idx % side;
    const Vec2 beta = center + Vec2(half.x() * ((2.0 * a + 1.0) * inv - 1.0), half.y() * ((2.0 * b + 1.0) * inv - 1.0));
    fn(SubPoint{plan.lattice.from_dual(beta), weight, spacing});
  }
}

// Appends the four children of a sub-cell of a base cell with half-widths `half`.
void split(const SubCell& sub, const Vec2& half, std::vector<SubCell>& out) {
  const double q = std::ldexp(1.0, -(sub.level + 1));
  for (int a = -1; a <= 1; a += 2) {
    for (int b = -1; b <= 1; b += 2) {
      out.push_back(SubCell{sub.center + Vec2(a * q * half.x(), b * q * half.y()), sub.level + 1});
    }
  }
}

// Extremes collected over the points that contribute, for the two-band
// isolation test.
struct Stats {
  double window = 0.0;
  double third = std::numeric_limits<double>::infinity();

  void merge(const Stats& o) {
    window = std::max(window, o.window);
    third = std::min(third, o.third);
  }
};

struct PairBuffer {
  std::vector<double> c;
  std::vector<double> s;
  std::vector<double> d;
  Stats stats;

  void push(double cv, double sv, double dv) {
    c.push_back(cv);
    s.push_back(sv);
    d.push_back(dv);
  }
};

// Sums sum_pairs (c D - s eta)/(eta^2 + D^2) over the plan for each eta. With
// `even` the s column is ignored and the result depends on eta^2 only.
template <class PointFn>
std::vector<double> lorentzian_sums(const CellPlan& plan, std::span<const double> etas, bool even, PointFn&& point,
                                    Stats* stats = nullptr) {
  const std::vector<Unit> units = make_units(plan);
  const std::size_t ne = etas.size();
  std::vector<double> partial(units.size() * ne);
  std::vector<Stats> unit_stats(units.size());
  parallel_for(units.size(), [&](std::size_t u) {
    PairBuffer buf;
    buf.c.reserve(units[u].count);
    buf.s.reserve(units[u].count);
    buf.d.reserve(units[u].count);
    for_each_point(plan, units[u], [&](const SubPoint& p) { point(p, buf); });
    for (std::size_t e = 0; e < ne; ++e) {
      partial[e * units.size() + u] = even ? simd::even_lorentzian_sum(buf.c, buf.d, etas[e] * etas[e])
                                           : simd::mixed_lorentzian_sum(buf.c, buf.s, buf.d, etas[e]);
    }
    unit_stats[u] = buf.stats;
  });
  std::vector<double> out(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    out[e] = tree_sum(std::span<const double>(partial).subspan(e * units.size(), units.size()));
  }
  if (stats) {
    for (const auto& s : unit_stats) stats->merge(s);
  }
  return out;
}

// Plain sums of `width` values per point.
template <class PointFn>
std::vector<double> plain_sums(const CellPlan& plan, std::size_t width, PointFn&& point) {
  const std::vector<Unit> units = make_units(plan);
  std::vector<double> partial(units.size() * width);
  parallel_for(units.size(), [&](std::size_t u) {
    std::vector<std::vector<double>> values(width);
    for (auto& v : values) v.reserve(units[u].count);
    std::vector<double> scratch(width);
    for_each_point(plan, units[u], [&](const SubPoint& p) {
      point(p, scratch.data());
      for (std::size_t w = 0; w < width; ++w) values[w].push_back(scratch[w]);
    });
    for (std::size_t w = 0; w < width; ++w) partial[w * units.size() + u] = tree_sum(values[w]);
  });
  std::vector<double> out(width);
  for (std::size_t w = 0; w < width; ++w) {
    out[w] = tree_sum(std::span<const double>(partial).subspan(w * units.size(), units.size()));
  }
  return out;
}

// Eigen-decomposition at k with the currents in the eigenbasis.
struct LocalBands {
  BandSpectrum spectrum;
  std::array<CMat, 2> current;  // V^H J_j V
  BlochMatrices matrices;
  int occupied = 0;
  double gap = 0.0;
};

LocalBands local_bands(const HoppingModel& model, const Vec2& k, int order) {
  LocalBands out;
  out.matrices = evaluate(model, k, order);
  out.spectrum = eigh(out.matrices.h);
  const double mu = model.fermi_energy();
  const int n = out.spectrum.size();
  out.occupied = occupied_count(out.spectrum, mu);
  for (int i = 0; i < n; ++i) {
    if (std::abs(out.spectrum.values[i] - mu) < kDegenerate) {
      std::ostringstream msg;
      msg << "eigenvalue within 1e-12 of mu at k = (" << k.x() << ", " << k.y() << ")";
      throw Error(ErrorCode::DegeneratePoint, msg.str());
    }
  }
  const int m = out.occupied;
  out.gap = (m == 0 || m == n) ? std::numeric_limits<double>::infinity()
                               : out.spectrum.values[m] - out.spectrum.values[m - 1];
  if (out.gap < kDegenerate) {
    std::ostringstream msg;
    msg << "gap below 1e-12 at k = (" << k.x() << ", " << k.y() << ")";
    throw Error(ErrorCode::DegeneratePoint, msg.str());
  }
  if (order >= 1) {
    const CMat& v = out.spectrum.vectors;
    for (int j = 0; j < 2; ++j) out.current[j] = v.adjoint() * out.matrices.dh[j] * v;
  }
  return out;
}

struct ResolutionCheck {
  bool enabled = false;
  double eta = 0.0;
  double current_norm = 0.0;

  void operator()(const SubPoint& p, double gap) const {
    if (!enabled) return;
    // The gap varies by at most current_norm * spacing across the cell, so
    // the cell may reach into the region gap < 8 eta.
    if (gap < 8.0 * eta + current_norm * p.spacing && p.spacing * current_norm > 0.25 * eta) {
      std::ostringstream msg;
      msg << "cell of size " << p.spacing << " at k = (" << p.k.x() << ", " << p.k.y() << ") with gap " << gap
          << " does not resolve eta = " << eta;
      throw Error(ErrorCode::GridTooCoarse, msg.str());
    }
  }
};

ResolutionCheck make_check(const HoppingModel& model, std::span<const double> etas, const EvalOptions& options) {
  ResolutionCheck check;
  check.enabled = options.check_resolution;
  if (check.enabled) {
    check.eta = std::abs(*std::min_element(etas.begin(), etas.end(), [](double a, double b) {
      return std::abs(a) < std::abs(b);
    }));
    check.current_norm = max_current_norm(model);
    if (check.eta == 0.0) check.enabled = false;
  }
  return check;
}

// Pair tables for the Lorentzian quantities. `j`, `l` are 1-based.
std::vector<double> fjl_series(const HoppingModel& model, int j, int l, std::span<const double> etas,
                               const CellPlan& plan, const ResolutionCheck& check) {
  return lorentzian_sums(plan, etas, false, [&](const SubPoint& p, PairBuffer& buf) {
    const LocalBands b = local_bands(model, p.k, 1);
    check(p, b.gap);
    const int n = b.spectrum.size();
    const CMat& jj = b.current[j - 1];
    const CMat& jl = b.current[l - 1];
    const double scale = 2.0 * p.weight * kInvArea;
    for (int q = 0; q < b.occupied; ++q) {
      for (int r = b.occupied; r < n; ++r) {
        const Complex a = jj(r, q) * jl(q, r);
        buf.push(scale * a.real(), scale * a.imag(), b.spectrum.values[q] - b.spectrum.values[r]);
      }
    }
  });
}

std::vector<double> ftilde_series(const HoppingModel& model, int j, std::span<const double> etas,
                                  const CellPlan& plan, const ResolutionCheck& check) {
  return lorentzian_sums(plan, etas, true, [&](const SubPoint& p, PairBuffer& buf) {
    const LocalBands b = local_bands(model, p.k, 1);
    check(p, b.gap);
    const int n = b.spectrum.size();
    const CMat& jj = b.current[j - 1];
    const double scale = 2.0 * p.weight * kInvArea;
    for (int q = 0; q < b.occupied; ++q) {
      for (int r = b.occupied; r < n; ++r) {
        buf.push(scale * std::norm(jj(r, q)), 0.0, b.spectrum.values[q] - b.spectrum.values[r]);
      }
    }
  });
}

// Shared pieces of the cone-restricted quantities.
struct ConeRegion {
  const HoppingModel& model;
  std::span<const FermiPoint> cones;
  double eps;

  bool contains(const Vec2& k) const {
    const Lattice2D& lattice = model.lattice();
    for (const auto& c : cones) {
      const Vec2 q = minimum_image(lattice, k - c.omega);
      if (2.0 * std::sqrt(q.dot(c.Q * q)) < eps) return true;
    }
    return false;
  }

  void record(const LocalBands& b, Stats& stats) const {
    const double mu = model.fermi_energy();
    const int m = b.occupied;
    const int n = b.spectrum.size();
    const RVec& v = b.spectrum.values;
    stats.window = std::max({stats.window, std::abs(v[m - 1] - mu), std::abs(v[m] - mu)});
    if (m >= 2) stats.third = std::min(stats.third, std::abs(v[m - 2] - mu));
    if (m + 1 < n) stats.third = std::min(stats.third, std::abs(v[m + 1] - mu));
  }
};

void require_isolation(const Stats& stats) {
  if (stats.window > 0.0 && !(stats.third > 2.0 * stats.window)) {
    std::ostringstream msg;
    msg << "third band at distance " << stats.third << " from mu, cone window " << stats.window;
    throw Error(ErrorCode::TwoBandIsolationFailed, msg.str());
  }
}

void require_cone_bands(const LocalBands& b) {
  if (b.occupied == 0 || b.occupied == b.spectrum.size()) {
    throw Error(ErrorCode::AllBandsOnOneSide, "no bands on one side of mu inside a cone neighbourhood");
  }
}

std::vector<double> fsing_series(const HoppingModel& model, std::span<const FermiPoint> cones, int j, double eps,
                                 std::span<const double> etas, const CellPlan& plan, const ResolutionCheck& check) {
  if (cones.empty()) return std::vector<double>(etas.size(), 0.0);
  check_epsilon(model.lattice(), cones, eps);
  const ConeRegion region{model, cones, eps};
  Stats stats;
  auto sums = lorentzian_sums(
      plan, etas, true,
      [&](const SubPoint& p, PairBuffer& buf) {
        if (!region.contains(p.k)) return;
        const LocalBands b = local_bands(model, p.k, 1);
        require_cone_bands(b);
        check(p, b.gap);
        region.record(b, buf.stats);
        const int m = b.occupied;
        const double c = 2.0 * p.weight * kInvArea * std::norm(b.current[j - 1](m, m - 1));
        buf.push(c, 0.0, b.spectrum.values[m - 1] - b.spectrum.values[m]);
      },
      &stats);
  require_isolation(stats);
  return sums;
}

std::vector<double> zeta_series(const HoppingModel& model, std::span<const FermiPoint> cones, int j, double eps,
                                std::span<const double> etas, const CellPlan& plan, const ResolutionCheck& check) {
  if (cones.empty()) return std::vector<double>(etas.size(), 0.0);
  check_epsilon(model.lattice(), cones, eps);
  const ConeRegion region{model, cones, eps};
  const double mu = model.fermi_energy();
  Stats stats;
  auto sums = lorentzian_sums(
      plan, etas, true,
      [&](const SubPoint& p, PairBuffer& buf) {
        if (!region.contains(p.k)) return;
        const LocalBands b = local_bands(model, p.k, 0);
        require_cone_bands(b);
        check(p, b.gap);
        region.record(b, buf.stats);
        const int m = b.occupied;
        const double lo = b.spectrum.values[m - 1];
        const double hi = b.spectrum.values[m];
        const double bracket = (hi - mu) * band_curvature(model, p.k, m, j) +
                               (lo - mu) * band_curvature(model, p.k, m - 1, j);
        buf.push(p.weight * kInvArea * bracket, 0.0, lo - hi);
      },
      &stats);
  require_isolation(stats);
  return sums;
}

// Runs `series` on the plan and, when requested, on the doubled plan.
template <class Series>
std::vector<KuboEstimate> with_error(Quantity quantity, std::span<const double> etas, const CellPlan& plan,
                                     const EvalOptions& options, Series&& series) {
  const std::vector<double> coarse = series(plan);
  std::vector<double> fine;
  if (options.estimate_error) fine = series(plan.doubled());
  std::vector<KuboEstimate> out;
  for (std::size_t e = 0; e < etas.size(); ++e) {
    KuboEstimate est;
    est.quantity = quantity;
    est.eta = etas[e];
    est.value = coarse[e];
    est.quad_error = options.estimate_error ? (4.0 / 3.0) * std::abs(coarse[e] - fine[e]) : 0.0;
    est.grid_points = plan.point_count();
    est.grid = plan.label;
    out.push_back(est);
  }
  return out;
}

void check_eta_positive(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
}

void check_structure(const KuboEstimate& e) {
  if (e.value > 0.0) {
    throw Error(ErrorCode::InvalidArgument, std::string(to_string(e.quantity)) + " must be <= 0 for j = l");
  }
}

std::vector<double> series_for(const HoppingModel& model, Quantity quantity, int j, int l,
                               std::span<const FermiPoint> cones, double eps, std::span<const double> etas,
                               const CellPlan& plan, const ResolutionCheck& check) {
  switch (quantity) {
    case Quantity::fjl: return fjl_series(model, j, l, etas, plan, check);
    case Quantity::ftilde: return ftilde_series(model, j, etas, plan, check);
    case Quantity::fsing: return fsing_series(model, cones, j, eps, etas, plan, check);
    case Quantity::zeta: return zeta_series(model, cones, j, eps, etas, plan, check);
    case Quantity::schwinger: break;
  }
  throw Error(ErrorCode::InvalidArgument, "schwinger term has no eta dependence");
}

std::string direction_label(int j, int l) { return std::to_string(j) + std::to_string(l); }

}  // namespace

CellPlan::CellPlan(const KGrid& grid)
    : lattice(grid.lattice),
      dual_centers(grid.dual_centers),
      half_widths(grid.half_widths),
      weights(grid.weights),
      levels(grid.size(), 0),
      graded(grid.size()) {
  std::ostringstream s;
  s << grid.n1 << "x" << grid.n2;
  if (grid.size() != static_cast<std::size_t>(grid.n1) * static_cast<std::size_t>(grid.n2)) {
    s << " (" << grid.size() << " cells)";
  }
  label = s.str();
}

std::size_t CellPlan::point_count() const {
  std::size_t total = 0;
  for (std::size_t c = 0; c < levels.size(); ++c) total += cell_points(*this, c);
  return total;
}

double CellPlan::total_weight() const { return tree_sum(weights); }

CellPlan CellPlan::doubled() const {
  CellPlan out = *this;
  for (int& level : out.levels) ++level;
  for (std::size_t c = 0; c < graded.size(); ++c) {
    if (graded[c].empty()) continue;
    out.graded[c].clear();
    out.graded[c].reserve(4 * graded[c].size());
    for (const SubCell& sub : graded[c]) split(sub, half_widths[c], out.graded[c]);
  }
  out.label = label + " doubled";
  return out;
}

CellPlan refined_plan(const KGrid& base, std::span<const Vec2> centers, double radius, int levels) {
  if (levels < 0) throw Error(ErrorCode::InvalidArgument, "refinement levels must be >= 0");
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "refinement radius must be > 0");
  CellPlan plan(base);
  std::size_t refined = 0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    for (const Vec2& c : centers) {
      if (minimum_image(base.lattice, base.points[i] - c).norm() < radius) {
        plan.levels[i] = levels;
        ++refined;
        break;
      }
    }
  }
  if (refined > 0 && levels > 0) {
    plan.label += " + " + std::to_string(refined) + " cells refined x" + std::to_string(1 << levels);
  }
  return plan;
}

std::string_view to_string(Quantity q) {
  switch (q) {
    case Quantity::fjl: return "f_jl";
    case Quantity::ftilde: return "ftilde_jj";
    case Quantity::fsing: return "f_sing";
    case Quantity::zeta: return "zeta";
    case Quantity::schwinger: return "schwinger";
  }
  return "unknown";
}

std::string_view to_string(Method m) {
  return m == Method::closed_form ? "closed_form" : "kubo_extrapolation";
}

KuboEstimate fjl_eta(const HoppingModel& model, double eta, int j, int l, const CellPlan& plan,
                     const EvalOptions& options) {
  check_eta_positive(eta);
  check_direction(j);
  check_direction(l);
  const double etas[1] = {eta};
  const ResolutionCheck check = make_check(model, etas, options);
  auto direct = [&](const CellPlan& p) {
    return plain_sums(p, 2, [&](const SubPoint& sp, double* out) {
      const LocalBands b = local_bands(model, sp.k, 1);
      check(sp, b.gap);
      const int n = b.spectrum.size();
      const CMat& jj = b.current[j - 1];
      const CMat& jl = b.current[l - 1];
      Complex acc = 0.0;
      for (int a = 0; a < n; ++a) {
        const double na = a < b.occupied ? 1.0 : 0.0;
        for (int c = 0; c < n; ++c) {
          const double nc = c < b.occupied ? 1.0 : 0.0;
          if (na == nc) continue;
          const double delta = b.spectrum.values[a] - b.spectrum.values[c];
          acc += jj(c, a) * jl(a, c) * (na - nc) * kI / Complex(eta, delta);
        }
      }
      acc *= sp.weight * kInvArea;
      out[0] = acc.real();
      out[1] = acc.imag();
    });
  };
  const std::vector<double> coarse = direct(plan);
  KuboEstimate est;
  est.quantity = Quantity::fjl;
  est.eta = eta;
  est.value = coarse[0];
  est.imag_residue = std::abs(coarse[1]);
  est.grid_points = plan.point_count();
  est.grid = plan.label;
  if (options.estimate_error) est.quad_error = (4.0 / 3.0) * std::abs(coarse[0] - direct(plan.doubled())[0]);
  if (j == l) check_structure(est);
  return est;
}

KuboEstimate ftilde_jj(const HoppingModel& model, double eta, int j, const CellPlan& plan,
                       const EvalOptions& options) {
  check_direction(j);
  if (!std::isfinite(eta)) throw Error(ErrorCode::InvalidArgument, "eta must be finite");
  const double etas[1] = {eta};
  const ResolutionCheck check = make_check(model, etas, options);
  KuboEstimate est = with_error(Quantity::ftilde, etas, plan, options, [&](const CellPlan& p) {
    return ftilde_series(model, j, etas, p, check);
  })[0];
  check_structure(est);
  return est;
}

KuboEstimate schwinger(const HoppingModel& model, int j, int l, const CellPlan& plan, const EvalOptions& options) {
  check_direction(j);
  check_direction(l);
  auto series = [&](const CellPlan& p) {
    return plain_sums(p, 1, [&](const SubPoint& sp, double* out) {
      const LocalBands b = local_bands(model, sp.k, 2);
      const CMat& v = b.spectrum.vectors;
      const CMat& d2 = b.matrices.second(j, l);
      double trace = 0.0;
      for (int q = 0; q < b.occupied; ++q) trace += (v.col(q).adjoint() * d2 * v.col(q))(0, 0).real();
      out[0] = sp.weight * kInvArea * trace;
    });
  };
  const double etas[1] = {0.0};
  return with_error(Quantity::schwinger, etas, plan, options, series)[0];
}

KuboEstimate fjj_sing(const HoppingModel& model, std::span<const FermiPoint> cones, double eta, int j, double eps,
                      const CellPlan& plan, const EvalOptions& options) {
  check_direction(j);
  if (!std::isfinite(eta)) throw Error(ErrorCode::InvalidArgument, "eta must be finite");
  const double etas[1] = {eta};
  const ResolutionCheck check = make_check(model, etas, options);
  KuboEstimate est = with_error(Quantity::fsing, etas, plan, options, [&](const CellPlan& p) {
    return fsing_series(model, cones, j, eps, etas, p, check);
  })[0];
  check_structure(est);
  return est;
}

KuboEstimate zeta_jj(const HoppingModel& model, std::span<const FermiPoint> cones, double eta, int j, double eps,
                     const CellPlan& plan, const EvalOptions& options) {
  check_direction(j);
  if (!std::isfinite(eta)) throw Error(ErrorCode::InvalidArgument, "eta must be finite");
  const double etas[1] = {eta};
  const ResolutionCheck check = make_check(model, etas, options);
  return with_error(Quantity::zeta, etas, plan, options, [&](const CellPlan& p) {
    return zeta_series(model, cones, j, eps, etas, p, check);
  })[0];
}

double band_curvature(const HoppingModel& model, const Vec2& k, int band, int j) {
  check_direction(j);
  const BlochMatrices at = evaluate(model, k, 1);
  const BandSpectrum s = eigh(at.h);
  const int n = s.size();
  if (band < 0 || band >= n) throw Error(ErrorCode::InvalidArgument, "band index out of range");
  double gap = std::numeric_limits<double>::infinity();
  if (band > 0) gap = std::min(gap, s.values[band] - s.values[band - 1]);
  if (band + 1 < n) gap = std::min(gap, s.values[band + 1] - s.values[band]);
  const double speed = std::max(operator_norm(at.current(j)), 1e-300);
  const double h = 1e-4 * std::min(1.0, gap / speed);
  Vec2 e = Vec2::Zero();
  e[j - 1] = h;
  auto slope = [&](const Vec2& kk) {
    const BlochMatrices m = evaluate(model, kk, 1);
    const BandSpectrum sp = eigh(m.h);
    const CVec v = sp.vectors.col(band);
    return (v.adjoint() * m.current(j) * v)(0, 0).real();
  };
  return (slope(k + e) - slope(k - e)) / (2.0 * h);
}

double sigma_hat(double f_double_eta, double f_eta, double eta) { return (f_double_eta - f_eta) / eta; }

std::vector<double> richardson_sequence(std::span<const double> sigma_hats) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < sigma_hats.size(); ++i) out.push_back(2.0 * sigma_hats[i + 1] - sigma_hats[i]);
  return out;
}

std::vector<double> default_eta_sequence(const HoppingModel& model) {
  const double scale = spectral_radius(model) / 10.0;
  return {0.2 * scale, 0.1 * scale, 0.05 * scale, 0.025 * scale, 0.0125 * scale};
}

void check_eta_sequence(std::span<const double> etas) {
  if (etas.size() < 2) throw Error(ErrorCode::InvalidArgument, "eta sequence needs at least two values");
  for (std::size_t i = 0; i < etas.size(); ++i) {
    check_eta_positive(etas[i]);
    if (i > 0 && std::abs(etas[i - 1] - 2.0 * etas[i]) > 1e-12 * etas[i - 1]) {
      throw Error(ErrorCode::InvalidArgument, "eta sequence must halve at every step");
    }
  }
}

CellPlan plan_for_eta(const HoppingModel& model, std::span<const FermiPoint> cones, double eta,
                      const GridPolicy& policy) {
  check_eta_positive(eta);
  if (policy.base < 8) throw Error(ErrorCode::InvalidArgument, "base grid must be at least 8 x 8");
  const KGrid base = uniform_grid(model.lattice(), policy.base, policy.base);
  if (cones.empty()) return CellPlan(base);
  double lambda = std::numeric_limits<double>::infinity();
  std::vector<Vec2> centers;
  for (const auto& c : cones) {
    const Eigen::SelfAdjointEigenSolver<Mat2> es(c.Q, Eigen::EigenvaluesOnly);
    lambda = std::min(lambda, es.eigenvalues()[0]);
    centers.push_back(c.omega);
  }
  if (!(lambda > 0.0)) throw Error(ErrorCode::NotConical, "cone form is not positive definite");
  const double h0 = base.max_spacing();
  const double m = max_current_norm(model);
  const double slope = std::sqrt(lambda);
  // Base cells left unrefined must have gap > 8 eta + m h0 with room to spare
  // for the curvature of the bands.
  const double radius = std::max({policy.radius_factor * 2.0 * eta / slope, h0, (4.0 * eta + m * h0) / slope});
  CellPlan plan(base);
  // Inside the radius, sub-cells split while they may reach gap < 8 eta and are
  // coarser than eta / spacing_factor, or are coarse against their distance to
  // the nearest cone. slope * distance is half the linear cone gap.
  const double fine = eta / policy.spacing_factor;
  std::size_t refined = 0;
  std::size_t points = 0;
  std::vector<SubCell> pending;
  for (std::size_t c = 0; c < base.size(); ++c) {
    bool inside = false;
    for (const Vec2& center : centers) {
      inside = inside || minimum_image(base.lattice, base.points[c] - center).norm() < radius;
    }
    if (!inside) continue;
    const double diameter = cell_diameter(base.lattice, base.half_widths[c]);
    std::vector<SubCell>& leaves = plan.graded[c];
    pending.assign(1, SubCell{base.dual_centers[c], 0});
    while (!pending.empty()) {
      const SubCell sub = pending.back();
      pending.pop_back();
      const double spread = m * diameter * std::ldexp(1.0, -sub.level);
      const Vec2 k = base.lattice.from_dual(sub.center);
      double distance = std::numeric_limits<double>::infinity();
      for (const Vec2& center : centers) {
        distance = std::min(distance, minimum_image(base.lattice, k - center).norm());
      }
      const double reach = slope * std::max(0.0, distance - diameter * std::ldexp(1.0, -sub.level));
      const bool near = reach < 8.0 * eta + spread;
      const bool coarse = near ? spread > fine : policy.grade_factor * spread > reach;
      if (coarse && sub.level < policy.max_levels) {
        split(sub, base.half_widths[c], pending);
      } else {
        leaves.push_back(sub);
      }
    }
    if (leaves.size() == 1) {
      leaves.clear();
      continue;
    }
    ++refined;
    points += leaves.size();
  }
  if (refined > 0) {
    plan.label += " + " + std::to_string(refined) + " cells graded to " + std::to_string(points) + " points";
  }
  return plan;
}

SigmaSequence estimate_sigma(const HoppingModel& model, Quantity quantity, int j, int l,
                             std::span<const FermiPoint> cones, std::optional<double> eps,
                             std::span<const double> etas, const GridPolicy& policy) {
  check_direction(j);
  check_direction(l);
  check_eta_sequence(etas);
  if ((quantity == Quantity::ftilde || quantity == Quantity::fsing || quantity == Quantity::zeta) && j != l) {
    throw Error(ErrorCode::InvalidArgument, std::string(to_string(quantity)) + " is defined for j = l only");
  }
  const double epsilon = cones.empty() ? 0.0 : eps.value_or(default_epsilon(model.lattice(), cones));
  SigmaSequence seq;
  seq.quantity = quantity;
  seq.j = j;
  seq.l = l;
  std::vector<double> hats;
  for (std::size_t i = 0; i + 1 < etas.size(); ++i) {
    const double pair[2] = {etas[i], etas[i + 1]};
    const CellPlan plan = plan_for_eta(model, cones, etas[i + 1], policy);
    const ResolutionCheck check = make_check(model, pair, policy.eval);
    const std::vector<double> f = series_for(model, quantity, j, l, cones, epsilon, pair, plan, check);
    SigmaStep step;
    step.eta = etas[i + 1];
    step.f_double_eta = f[0];
    step.f_eta = f[1];
    step.sigma_hat = sigma_hat(f[0], f[1], etas[i + 1]);
    step.grid_points = plan.point_count();
    if (policy.eval.estimate_error) {
      const std::vector<double> g = series_for(model, quantity, j, l, cones, epsilon, pair, plan.doubled(), check);
      step.quad_error = (4.0 / 3.0) * std::abs(step.sigma_hat - sigma_hat(g[0], g[1], etas[i + 1]));
    }
    hats.push_back(step.sigma_hat);
    seq.steps.push_back(step);
  }
  seq.richardson = richardson_sequence(hats);
  seq.value = seq.richardson.empty() ? hats.back() : seq.richardson.back();
  if (hats.size() >= 2) {
    const double last = hats.back();
    const double diff = std::abs(last - hats[hats.size() - 2]);
    seq.converged = diff <= 0.02 * std::abs(last) || diff <= 1e-4;
  }
  return seq;
}

ConductivityReport sigma_closed(const HoppingModel& model, std::span<const std::array<int, 2>> directions,
                                const FermiSearchOptions& search) {
  ConductivityReport report;
  report.method = Method::closed_form;
  const FermiSearchResult found = find_fermi_points(model, search);
  report.min_gap = found.min_gap;
  for (const auto& omega : found.points) {
    const ConeFit fit = fit_cone(model, omega);
    report.cones.push_back(FermiPoint{omega, fit.Q, fit.tilt, fit.residual, gap_at(model, omega)});
  }
  for (const auto& d : directions) {
    check_direction(d[0]);
    check_direction(d[1]);
    if (d[0] != d[1]) {
      throw Error(ErrorCode::InvalidArgument, "closed form covers longitudinal directions only, got " +
                                                  direction_label(d[0], d[1]));
    }
    const ClosedFormSigma s = sigma_closed_form(report.cones, d[0]);
    report.sigma(d[0] - 1, d[1] - 1) = s.sigma;
    report.present[d[0] - 1][d[1] - 1] = true;
    report.contributions.emplace_back(d, s.contributions);
  }
  return report;
}

ConductivityReport sigma_kubo(const HoppingModel& model, int j, int l, std::span<const double> etas,
                              const GridPolicy& policy, std::optional<std::vector<FermiPoint>> cones) {
  ConductivityReport report;
  report.method = Method::kubo_extrapolation;
  if (cones) {
    report.cones = *cones;
  } else {
    const FermiSearchResult found = find_fermi_points(model);
    report.min_gap = found.min_gap;
    for (const auto& omega : found.points) {
      const ConeFit fit = fit_cone(model, omega);
      report.cones.push_back(FermiPoint{omega, fit.Q, fit.tilt, fit.residual, gap_at(model, omega)});
    }
  }
  SigmaSequence seq = estimate_sigma(model, Quantity::fjl, j, l, report.cones, std::nullopt, etas, policy);
  report.sigma(j - 1, l - 1) = seq.value;
  report.present[j - 1][l - 1] = true;
  report.converged = seq.converged;
  report.sequences.push_back(std::move(seq));
  return report;
}

ConductivityReport sigma_hall(const HoppingModel& model, std::span<const double> etas, const GridPolicy& policy) {
  check_eta_sequence(etas);
  const FermiSearchResult found = find_fermi_points(model);
  if (!found.points.empty()) {
    throw Error(ErrorCode::Gapless, std::to_string(found.points.size()) + " Fermi points detected");
  }
  const double eta_max = *std::max_element(etas.begin(), etas.end());
  if (found.min_gap <= 10.0 * eta_max) {
    std::ostringstream msg;
    msg << "minimum gap " << found.min_gap << " is not above 10 max(eta) = " << 10.0 * eta_max;
    throw Error(ErrorCode::Gapless, msg.str());
  }
  ConductivityReport report = sigma_kubo(model, 1, 2, etas, policy, std::vector<FermiPoint>{});
  report.min_gap = found.min_gap;
  return report;
}

}  // namespace kubocone
