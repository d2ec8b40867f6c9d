#include "kubocone/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "kubocone/error.hpp"

namespace kubocone {

namespace {

constexpr double kHermitianTolerance = 1e-10;
constexpr int kMaxSweeps = 64;
constexpr double kContourClearance = 1e-8;
constexpr double kMaxCondition = 1e12;
constexpr double kMinDerivativeGap = 1e-8;

void jacobi_rotate(CMat& a, CMat& v, int p, int q) {
  const Complex apq = a(p, q);
  const double g = std::abs(apq);
  if (g == 0.0) return;
  const Complex e = apq / g;
  const double theta = (a(q, q).real() - a(p, p).real()) / (2.0 * g);
  const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const Complex se = s * e;
  const Complex sec = s * std::conj(e);
  const int n = static_cast<int>(a.rows());
  // U = [[c, s e], [-s conj(e), c]] on (p, q); A <- U^H A U, V <- V U.
  for (int r = 0; r < n; ++r) {
    const Complex arp = a(r, p);
    const Complex arq = a(r, q);
    a(r, p) = c * arp - sec * arq;
    a(r, q) = se * arp + c * arq;
  }
  for (int col = 0; col < n; ++col) {
    const Complex apc = a(p, col);
    const Complex aqc = a(q, col);
    a(p, col) = c * apc - se * aqc;
    a(q, col) = sec * apc + c * aqc;
  }
  for (int r = 0; r < n; ++r) {
    const Complex vrp = v(r, p);
    const Complex vrq = v(r, q);
    v(r, p) = c * vrp - sec * vrq;
    v(r, q) = se * vrp + c * vrq;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  a(p, p) = a(p, p).real();
  a(q, q) = a(q, q).real();
}

double off_diagonal_norm2(const CMat& a) {
  double off = 0.0;
  for (int p = 0; p < a.rows(); ++p) {
    for (int q = p + 1; q < a.cols(); ++q) off += std::norm(a(p, q));
  }
  return off;
}

CMat resolvent(const CMat& h, Complex z) {
  const int n = static_cast<int>(h.rows());
  CMat shifted = z * CMat::Identity(n, n) - h;
  Eigen::FullPivLU<CMat> lu(shifted);
  CMat inverse = lu.inverse();
  const double kappa = shifted.cwiseAbs().colwise().sum().maxCoeff() *
                       inverse.cwiseAbs().colwise().sum().maxCoeff();
  if (!lu.isInvertible() || !std::isfinite(kappa) || kappa > kMaxCondition) {
    throw Error(ErrorCode::SingularResolvent, "resolvent condition number exceeds 1e12");
  }
  return inverse;
}

double distance_to_segment(double x, Complex z0, Complex z1) {
  const Complex p(x, 0.0);
  const Complex d = z1 - z0;
  const double len2 = std::norm(d);
  double t = len2 > 0.0 ? ((p - z0) * std::conj(d)).real() / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::abs(p - (z0 + t * d));
}

// Adds the Gauss-Legendre approximation of \int f(z) dz over [z0, z1],
// bisecting while a panel is longer than its distance to the nearest pole.
void graded_segment(Complex z0, Complex z1, const RVec& poles, const GaussRule& rule,
                    const std::function<CMat(Complex)>& f, CMat& acc, int depth = 0) {
  double clearance = std::numeric_limits<double>::infinity();
  for (int i = 0; i < poles.size(); ++i) clearance = std::min(clearance, distance_to_segment(poles[i], z0, z1));
  if (clearance < 1e-14 || depth > 200) {
    throw Error(ErrorCode::EigenvalueOnContour, "eigenvalue on the integration contour");
  }
  if (std::abs(z1 - z0) > clearance) {
    const Complex mid = 0.5 * (z0 + z1);
    graded_segment(z0, mid, poles, rule, f, acc, depth + 1);
    graded_segment(mid, z1, poles, rule, f, acc, depth + 1);
    return;
  }
  const Complex half = 0.5 * (z1 - z0);
  const Complex center = 0.5 * (z0 + z1);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    acc += (rule.weights[i] * half) * f(center + rule.nodes[i] * half);
  }
}

}  // namespace

double operator_norm(const CMat& a) {
  if (a.size() == 0) return 0.0;
  const RVec values = eigh(a.adjoint() * a).values;
  return std::sqrt(std::max(0.0, values[values.size() - 1]));
}

double hermiticity_defect(const CMat& a) {
  if (a.size() == 0) return 0.0;
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

BandSpectrum eigh(const CMat& h) {
  if (h.rows() != h.cols()) throw Error(ErrorCode::InvalidArgument, "eigh needs a square matrix");
  const int n = static_cast<int>(h.rows());
  const double scale = h.size() ? h.cwiseAbs().maxCoeff() : 0.0;
  if (!std::isfinite(scale)) throw Error(ErrorCode::InvalidArgument, "matrix has non-finite entries");
  if (hermiticity_defect(h) > kHermitianTolerance * scale) {
    throw Error(ErrorCode::NotHermitian, "||H - H^H|| exceeds 1e-10 ||H||");
  }
  CMat a = 0.5 * (h + h.adjoint());
  CMat v = CMat::Identity(n, n);
  const double frob2 = a.squaredNorm();
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    const double off = off_diagonal_norm2(a);
    if (off <= 1e-32 * frob2 || off == 0.0) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) jacobi_rotate(a, v, p, q);
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return a(x, x).real() < a(y, y).real(); });

  BandSpectrum out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (int i = 0; i < n; ++i) {
    out.values[i] = a(order[i], order[i]).real();
    CVec col = v.col(order[i]);
    const double biggest = col.cwiseAbs().maxCoeff();
    for (int r = 0; r < n; ++r) {
      if (std::abs(col[r]) >= biggest * (1.0 - 1e-12)) {
        col *= std::conj(col[r]) / std::abs(col[r]);
        break;
      }
    }
    out.vectors.col(i) = col;
  }
  return out;
}

int occupied_count(const BandSpectrum& spectrum, double mu) {
  int m = 0;
  for (int i = 0; i < spectrum.size(); ++i) m += spectrum.values[i] <= mu ? 1 : 0;
  return m;
}

double gap_at(const BandSpectrum& spectrum, double mu) {
  const int m = occupied_count(spectrum, mu);
  if (m == 0 || m == spectrum.size()) {
    throw Error(ErrorCode::AllBandsOnOneSide, "all bands lie on one side of the Fermi energy");
  }
  return spectrum.values[m] - spectrum.values[m - 1];
}

double gap_at(const HoppingModel& model, const Vec2& k) {
  BandSpectrum s = eigh(h_at(model, k));
  s.k = k;
  return gap_at(s, model.fermi_energy());
}

CMat band_projector(const BandSpectrum& spectrum, int index) {
  const auto v = spectrum.vectors.col(index);
  return v * v.adjoint();
}

CMat fermi_projector_spectral(const BandSpectrum& spectrum, double mu) {
  const int n = spectrum.size();
  CMat p = CMat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (spectrum.values[i] <= mu) p += band_projector(spectrum, i);
  }
  return p;
}

RectangleContour default_contour(const BandSpectrum& spectrum, double mu) {
  const double lowest = spectrum.values[0];
  const double radius = std::max(std::abs(lowest), std::abs(spectrum.values[spectrum.size() - 1]));
  return RectangleContour{lowest - 1.0, mu, std::max(1.0, radius)};
}

GaussRule gauss_legendre(int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "Gauss-Legendre order must be >= 1");
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      dp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

CMat fermi_projector_riesz(const HoppingModel& model, const Vec2& k, double mu,
                           const std::optional<RectangleContour>& contour, int nodes) {
  if (nodes < 8) throw Error(ErrorCode::InvalidArgument, "Riesz contour needs at least 8 nodes per edge");
  const CMat h = h_at(model, k);
  const BandSpectrum spectrum = eigh(h);
  const RectangleContour rect = contour.value_or(default_contour(spectrum, mu));
  if (!(rect.half_height > 0.0) || !(rect.left < rect.right)) {
    throw Error(ErrorCode::InvalidArgument, "degenerate contour rectangle");
  }
  for (int i = 0; i < spectrum.size(); ++i) {
    const double lambda = spectrum.values[i];
    if (std::abs(lambda - rect.left) < kContourClearance || std::abs(lambda - rect.right) < kContourClearance) {
      throw Error(ErrorCode::EigenvalueOnContour, "eigenvalue within 1e-8 of the contour");
    }
    if (lambda < rect.left) {
      throw Error(ErrorCode::InvalidArgument, "contour does not enclose the bottom of the spectrum");
    }
  }

  const GaussRule rule = gauss_legendre(nodes);
  const Complex corners[4] = {{rect.left, -rect.half_height},
                              {rect.right, -rect.half_height},
                              {rect.right, rect.half_height},
                              {rect.left, rect.half_height}};
  const int n = model.orbital_count();
  CMat acc = CMat::Zero(n, n);
  for (int edge = 0; edge < 4; ++edge) {
    const Complex z0 = corners[edge];
    const Complex z1 = corners[(edge + 1) % 4];
    const Complex half = 0.5 * (z1 - z0);
    const Complex center = 0.5 * (z0 + z1);
    for (int i = 0; i < nodes; ++i) {
      acc += (rule.weights[i] * half) * resolvent(h, center + rule.nodes[i] * half);
    }
  }
  return acc / (2.0 * kPi * kI);
}

CMat projector_derivative(const HoppingModel& model, const Vec2& k, double mu, int j) {
  check_direction(j);
  const BlochMatrices m = evaluate(model, k, 1);
  const BandSpectrum spectrum = eigh(m.h);
  const int n = spectrum.size();
  const int occupied = occupied_count(spectrum, mu);
  if (occupied == 0 || occupied == n) return CMat::Zero(n, n);
  const double gap = spectrum.values[occupied] - spectrum.values[occupied - 1];
  if (gap < kMinDerivativeGap) throw Error(ErrorCode::GapTooSmall, "gap below 1e-8 at k");

  RectangleContour rect = default_contour(spectrum, mu);
  rect.right = 0.5 * (spectrum.values[occupied - 1] + spectrum.values[occupied]);
  const Complex corners[4] = {{rect.left, -rect.half_height},
                              {rect.right, -rect.half_height},
                              {rect.right, rect.half_height},
                              {rect.left, rect.half_height}};
  static const GaussRule rule = gauss_legendre(16);
  const CMat& dh = m.current(j);
  auto integrand = [&](Complex z) {
    const CMat r = resolvent(m.h, z);
    return CMat(r * dh * r);
  };
  CMat acc = CMat::Zero(n, n);
  for (int edge = 0; edge < 4; ++edge) {
    const Complex z0 = corners[edge];
    const Complex z1 = corners[(edge + 1) % 4];
    // Start the right edge at the real axis so bisection grades toward it.
    if (edge == 1) {
      const Complex cross(rect.right, 0.0);
      graded_segment(z0, cross, spectrum.values, rule, integrand, acc);
      graded_segment(cross, z1, spectrum.values, rule, integrand, acc);
    } else {
      graded_segment(z0, z1, spectrum.values, rule, integrand, acc);
    }
  }
  return acc / (2.0 * kPi * kI);
}

}  // namespace kubocone
