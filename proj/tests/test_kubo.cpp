#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdlib>
#include <unsupported/Eigen/MatrixFunctions>

#include "kubocone/bloch.hpp"
#include "kubocone/cones.hpp"
#include "kubocone/error.hpp"
#include "kubocone/kubo.hpp"
#include "kubocone/spectra.hpp"

using namespace kubocone;

namespace {

EvalOptions plain() {
  EvalOptions o;
  o.check_resolution = false;
  o.estimate_error = false;
  return o;
}

// f_jl(eta) as the Laplace transform of the current correlation
// i Tr(J_j e^{-iHt} [P, J_l] e^{iHt}), integrated in time.
double time_domain_fjl(const HoppingModel& model, const KGrid& grid, double eta, int j, int l) {
  const double horizon = 40.0 / eta;
  const int panels = static_cast<int>(std::ceil(horizon / 0.5));
  const GaussRule rule = gauss_legendre(12);
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const CMat h = h_at(model, grid.points[i]);
    Eigen::SelfAdjointEigenSolver<CMat> es(h);
    const int n = static_cast<int>(h.rows());
    CMat p = CMat::Zero(n, n);
    for (int b = 0; b < n; ++b) {
      if (es.eigenvalues()[b] < model.fermi_energy()) p += es.eigenvectors().col(b) * es.eigenvectors().col(b).adjoint();
    }
    const CMat jj = dh_at(model, grid.points[i], j);
    const CMat jl = dh_at(model, grid.points[i], l);
    const CMat comm = p * jl - jl * p;
    Complex integral = 0.0;
    for (int q = 0; q < panels; ++q) {
      const double a = q * 0.5;
      for (std::size_t g = 0; g < rule.nodes.size(); ++g) {
        const double t = a + 0.25 * (rule.nodes[g] + 1.0);
        const CMat u = (CMat(-kI * t * h)).exp();
        integral += 0.25 * rule.weights[g] * std::exp(-eta * t) * kI * (jj * u * comm * u.adjoint()).trace();
      }
    }
    total += grid.weights[i] * integral.real();
  }
  return total / (4.0 * kPi * kPi);
}

// Curvature of a band from second-order perturbation theory.
double perturbative_curvature(const HoppingModel& model, const Vec2& k, int band, int j) {
  Eigen::SelfAdjointEigenSolver<CMat> es(h_at(model, k));
  const CMat v = es.eigenvectors();
  const RVec e = es.eigenvalues();
  const CMat d1 = v.adjoint() * dh_at(model, k, j) * v;
  const CMat d2 = v.adjoint() * d2h_at(model, k, j, j) * v;
  double out = d2(band, band).real();
  for (int m = 0; m < e.size(); ++m) {
    if (m != band) out += 2.0 * std::norm(d1(m, band)) / (e[band] - e[m]);
  }
  return out;
}

}  // namespace

TEST_CASE("f_jl matches the time-domain correlation on gapped QWZ") {
  const HoppingModel model = preset_qwz(1.0, 1.0, 1.0);
  const KGrid grid = uniform_grid(model.lattice(), 10, 10);
  for (double eta : {0.5, 0.25}) {
    for (auto [j, l] : {std::pair{1, 1}, std::pair{1, 2}, std::pair{2, 1}, std::pair{2, 2}}) {
      const double oracle = time_domain_fjl(model, grid, eta, j, l);
      const KuboEstimate f = fjl_eta(model, eta, j, l, grid, plain());
      CHECK(f.value == doctest::Approx(oracle).epsilon(1e-9).scale(1e-3));
    }
  }
}

TEST_CASE("f_jj and ftilde_jj agree and are non-positive") {
  const HoppingModel model = preset_haldane(1.0, 0.1, 0.0, 0.0);
  const KGrid grid = uniform_grid(model.lattice(), 30, 30);
  for (double eta : {0.4, 0.1}) {
    for (int j = 1; j <= 2; ++j) {
      const double a = fjl_eta(model, eta, j, j, grid, plain()).value;
      const double b = ftilde_jj(model, eta, j, grid, plain()).value;
      CHECK(a == doctest::Approx(b).epsilon(1e-12));
      CHECK(b < 0.0);
    }
  }
}

TEST_CASE("single-point contributions to ftilde are non-positive") {
  const HoppingModel model = preset_qwz(-2.0, 2.0, 1.0);
  for (double x : {-0.41, -0.1, 0.07, 0.33}) {
    for (double y : {-0.27, 0.0, 0.19}) {
      const KGrid one = shifted_uniform_grid(model.lattice(), 1, 1, Vec2(x, y));
      for (int j = 1; j <= 2; ++j) CHECK(ftilde_jj(model, 0.05, j, one, plain()).value <= 0.0);
    }
  }
}

TEST_CASE("Schwinger term of the square model") {
  // s_11 = -(t / 4 pi^2) int cos k1 |{k2 : cos k2 < -cos k1}| dk1, by quadrature in k1.
  const double t = 1.0;
  const GaussRule rule = gauss_legendre(40);
  double oracle = 0.0;
  for (double lo : {-kPi, 0.0}) {
    for (std::size_t g = 0; g < rule.nodes.size(); ++g) {
      const double k1 = lo + 0.5 * kPi * (rule.nodes[g] + 1.0);
      const double measure = 2.0 * kPi - 2.0 * std::acos(-std::cos(k1));
      oracle += 0.5 * kPi * rule.weights[g] * std::cos(k1) * measure;
    }
  }
  oracle *= -t / (4.0 * kPi * kPi);
  const HoppingModel model = preset_square(t, 0.0);
  const KGrid grid = uniform_grid(model.lattice(), 401, 401);
  const KuboEstimate s = schwinger(model, 1, 1, grid, plain());
  CHECK(s.value == doctest::Approx(oracle).epsilon(2e-3));
  CHECK(std::abs(schwinger(model, 1, 2, grid, plain()).value) < 1e-12);
}

TEST_CASE("Schwinger term cancels f(0+) on a gapped model") {
  const HoppingModel model = preset_qwz(1.0, 1.0, 1.0);
  const KGrid grid = uniform_grid(model.lattice(), 64, 64);
  for (auto [j, l] : {std::pair{1, 1}, std::pair{2, 2}, std::pair{1, 2}}) {
    const double s = schwinger(model, j, l, grid, plain()).value;
    const double f1 = fjl_eta(model, 1e-3, j, l, grid, plain()).value;
    const double f2 = fjl_eta(model, 2e-3, j, l, grid, plain()).value;
    CHECK(std::abs(s + 2.0 * f1 - f2) < 1e-6);
  }
}

TEST_CASE("band curvature against perturbation theory") {
  const HoppingModel model = preset_haldane(1.0, 0.1, 0.3, 0.2);
  for (const Vec2& k : {Vec2(0.3, 0.9), Vec2(-1.2, 0.4), Vec2(2.0, -2.0)}) {
    for (int band = 0; band < 2; ++band) {
      for (int j = 1; j <= 2; ++j) {
        CHECK(band_curvature(model, k, band, j) ==
              doctest::Approx(perturbative_curvature(model, k, band, j)).epsilon(1e-6).scale(1e-6));
      }
    }
  }
}

TEST_CASE("estimator algebra") {
  const double sigma = 0.125;
  const double c0 = -0.4;
  const double c2 = 1.7;
  auto f = [&](double eta) { return c0 + sigma * eta + c2 * eta * eta; };
  std::vector<double> hats;
  for (double eta : {0.2, 0.1, 0.05, 0.025}) {
    const double h = sigma_hat(f(2 * eta), f(eta), eta);
    CHECK(h == doctest::Approx(sigma + 3.0 * c2 * eta).epsilon(1e-13));
    hats.push_back(h);
  }
  for (double r : richardson_sequence(hats)) CHECK(r == doctest::Approx(sigma).epsilon(1e-12));
  CHECK(richardson_sequence(std::vector<double>{1.0}).empty());
}

TEST_CASE("eta sequences must halve") {
  const double good[] = {0.2, 0.1, 0.05};
  const double bad[] = {0.2, 0.1, 0.04};
  const double single[] = {0.2};
  const double negative[] = {-0.2, -0.1};
  CHECK_NOTHROW(check_eta_sequence(good));
  CHECK_THROWS_AS(check_eta_sequence(bad), Error);
  CHECK_THROWS_AS(check_eta_sequence(single), Error);
  CHECK_THROWS_AS(check_eta_sequence(negative), Error);
}

TEST_CASE("coarse grids near a Fermi point are rejected") {
  const HoppingModel model = preset_haldane(1.0, 0.1, 0.0, 0.0);
  const KGrid grid = uniform_grid(model.lattice(), 16, 16);
  EvalOptions o;
  o.estimate_error = false;
  try {
    fjl_eta(model, 1e-3, 1, 1, grid, o);
    FAIL("coarse grid accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GridTooCoarse);
  }
}

TEST_CASE("grid plans refine near the cones and keep the weight") {
  const HoppingModel model = preset_haldane(1.0, 0.1, 0.0, 0.0);
  const auto cones = detect_cones(model);
  GridPolicy policy;
  const CellPlan a = plan_for_eta(model, cones, 0.1, policy);
  const CellPlan b = plan_for_eta(model, cones, 0.025, policy);
  CHECK(a.total_weight() == doctest::Approx(model.lattice().bz_area()).epsilon(1e-12));
  CHECK(b.total_weight() == doctest::Approx(model.lattice().bz_area()).epsilon(1e-12));
  CHECK(a.point_count() > static_cast<std::size_t>(policy.base * policy.base));
  const CellPlan gapped = plan_for_eta(model, {}, 0.025, policy);
  CHECK(gapped.point_count() == static_cast<std::size_t>(policy.base * policy.base));
}

TEST_CASE("graded plans tile their cells and grow slowly as eta shrinks") {
  const HoppingModel model = preset_haldane(1.0, 0.1, 0.0, 0.0);
  const auto cones = detect_cones(model);
  const GridPolicy policy;
  const CellPlan coarse = plan_for_eta(model, cones, 0.0125, policy);
  const CellPlan fine = plan_for_eta(model, cones, 0.003125, policy);
  std::size_t graded = 0;
  for (const auto& leaves : fine.graded) {
    if (leaves.empty()) continue;
    ++graded;
    double covered = 0.0;
    for (const SubCell& sub : leaves) covered += std::ldexp(1.0, -2 * sub.level);
    CHECK(covered == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(graded > 0);
  CHECK(fine.point_count() < 2 * coarse.point_count());
  CHECK(fine.doubled().point_count() == 4 * fine.point_count());
  // Resolves eta / 4 around the cones, so the resolution check passes.
  EvalOptions options;
  options.estimate_error = false;
  CHECK_NOTHROW(ftilde_jj(model, 0.003125, 1, fine, options));
}

TEST_CASE("singular parts on the isotropic QWZ cone") {
  const HoppingModel model = preset_qwz(-2.0, 1.0, 1.0);
  const auto cones = detect_cones(model);
  REQUIRE(cones.size() == 1);
  GridPolicy policy;
  policy.eval.estimate_error = false;
  const double eta = 0.05;
  const CellPlan plan = plan_for_eta(model, cones, eta, policy);
  const double eps = default_epsilon(model.lattice(), cones);
  const double sing = fjj_sing(model, cones, eta, 1, eps, plan, policy.eval).value;
  const double full = ftilde_jj(model, eta, 1, plan, policy.eval).value;
  const double zeta = zeta_jj(model, cones, eta, 1, eps, plan, policy.eval).value;
  CHECK(sing < 0.0);
  CHECK(sing > full);
  CHECK(zeta < 0.0);
  const double smaller = fjj_sing(model, cones, eta, 1, 0.5 * eps, plan, policy.eval).value;
  CHECK(smaller > sing);
  CHECK_THROWS_AS(fjj_sing(model, cones, eta, 1, 10.0, plan, policy.eval), Error);
}

TEST_CASE("gapped QWZ conductivity vanishes") {
  const HoppingModel model = preset_qwz(1.0, 1.0, 1.0);
  GridPolicy policy;
  policy.base = 64;
  const double etas[] = {0.2, 0.1, 0.05, 0.025};
  const ConductivityReport r = sigma_kubo(model, 1, 1, etas, policy);
  CHECK(r.cones.empty());
  CHECK(std::abs(r.sigma(0, 0)) < 1e-3);
  CHECK(r.sequences.front().steps.size() == 3);
  CHECK_THROWS_AS(sigma_hall(preset_haldane(1.0, 0.1, 0.0, 0.0), etas, policy), Error);
}

TEST_CASE("Hall conductivity of the gapped QWZ model") {
  // sigma_12 = C / 2 pi with Chern number |C| = 1 for 0 < |u| < 2.
  const HoppingModel model = preset_qwz(1.0, 1.0, 1.0);
  GridPolicy policy;
  policy.base = 64;
  policy.eval.estimate_error = false;
  const double etas[] = {0.02, 0.01, 0.005};
  const ConductivityReport r = sigma_hall(model, etas, policy);
  CHECK(std::abs(std::abs(r.sigma(0, 1)) - 1.0 / (2.0 * kPi)) < 1e-3);
}

TEST_CASE("results do not depend on the thread count") {
  const HoppingModel model = preset_haldane(1.0, 0.1, 0.0, 0.0);
  const auto cones = detect_cones(model);
  GridPolicy policy;
  policy.eval.estimate_error = false;
  const CellPlan plan = plan_for_eta(model, cones, 0.05, policy);
  setenv("KUBOCONE_THREADS", "1", 1);
  const double one = fjl_eta(model, 0.05, 1, 1, plan, policy.eval).value;
  setenv("KUBOCONE_THREADS", "3", 1);
  const double three = fjl_eta(model, 0.05, 1, 1, plan, policy.eval).value;
  unsetenv("KUBOCONE_THREADS");
  CHECK(one == three);
}

TEST_CASE("quadrature error estimate bounds the change under further refinement") {
  const HoppingModel gapped = preset_qwz(1.0, 1.0, 1.0);
  const KGrid grid = uniform_grid(gapped.lattice(), 24, 24);
  EvalOptions o;
  o.check_resolution = false;
  const KuboEstimate e = fjl_eta(gapped, 0.1, 1, 1, grid, o);
  const double finer = fjl_eta(gapped, 0.1, 1, 1, CellPlan(grid).doubled().doubled(), plain()).value;
  CHECK(std::abs(e.value - finer) <= e.quad_error + 1e-15);

  const HoppingModel critical = preset_haldane(1.0, 0.1, 0.0, 0.0);
  GridPolicy policy;
  policy.base = 24;
  const CellPlan plan = plan_for_eta(critical, detect_cones(critical), 0.1, policy);
  const KuboEstimate c = fjl_eta(critical, 0.1, 2, 2, plan, policy.eval);
  const double refined = fjl_eta(critical, 0.1, 2, 2, plan.doubled().doubled(), plain()).value;
  CHECK(c.quad_error > 0.0);
  CHECK(std::abs(c.value - refined) <= c.quad_error);
}
