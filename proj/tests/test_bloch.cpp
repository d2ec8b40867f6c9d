#include <doctest.h>

#include <cmath>
#include <random>

#include "kubocone/bloch.hpp"
#include "kubocone/error.hpp"
#include "kubocone/spectra.hpp"

using namespace kubocone;

namespace {

// H(k) straight from the hopping blocks.
CMat direct_sum(const HoppingModel& model, const Vec2& k) {
  const int n = model.orbital_count();
  CMat h = CMat::Zero(n, n);
  for (const auto& t : model.terms()) {
    const Vec2 gamma = model.lattice().cell_vector(t.cell[0], t.cell[1]);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        h(a, b) += std::exp(kI * k.dot(gamma + model.orbitals()[b] - model.orbitals()[a])) * t.matrix(a, b);
      }
    }
  }
  return h;
}

std::vector<HoppingModel> models() {
  return {preset_haldane(1.0, 0.1, 0.0, 0.0), preset_haldane(1.0, 0.1, kPi / 2, 0.0), preset_qwz(-2.0, 2.0, 1.0),
          preset_qwz(1.0, 1.0, 1.0), preset_square(1.0, 0.0)};
}

std::vector<Vec2> sample_points(const HoppingModel& model, int count) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Vec2> out;
  for (int i = 0; i < count; ++i) out.push_back(model.lattice().from_dual(Vec2(u(rng), u(rng))));
  return out;
}

}  // namespace

TEST_CASE("Bloch matrix matches the direct term summation") {
  for (const auto& model : models()) {
    for (const auto& k : sample_points(model, 40)) {
      CHECK((h_at(model, k) - direct_sum(model, k)).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
}

TEST_CASE("Bloch matrix is Hermitian and covariant") {
  for (const auto& model : models()) {
    for (const auto& k : sample_points(model, 40)) {
      CHECK(hermiticity_defect(h_at(model, k)) < 1e-14);
      CHECK(covariance_defect(model, k, 1, 0) < 1e-12);
      CHECK(covariance_defect(model, k, 0, 1) < 1e-12);
      CHECK(covariance_defect(model, k, -1, 2) < 1e-12);
    }
  }
}

TEST_CASE("analytic derivatives match central differences") {
  const double h = 1e-5;
  for (const auto& model : models()) {
    for (const auto& k : sample_points(model, 20)) {
      const BlochMatrices m = evaluate(model, k, 2);
      for (int j = 1; j <= 2; ++j) {
        Vec2 e = Vec2::Zero();
        e[j - 1] = h;
        const CMat fd = (h_at(model, k + e) - h_at(model, k - e)) / (2 * h);
        CHECK((fd - m.current(j)).cwiseAbs().maxCoeff() < 1e-8);
        for (int l = 1; l <= 2; ++l) {
          const CMat fd2 = (dh_at(model, k + e, l) - dh_at(model, k - e, l)) / (2 * h);
          CHECK((fd2 - m.second(j, l)).cwiseAbs().maxCoeff() < 1e-8);
          CHECK((m.second(j, l) - m.second(l, j)).cwiseAbs().maxCoeff() == 0.0);
        }
      }
    }
  }
}

TEST_CASE("square model band is t (cos k1 + cos k2)") {
  const HoppingModel model = preset_square(1.3, 0.0);
  for (const auto& k : sample_points(model, 30)) {
    CHECK(h_at(model, k)(0, 0).real() == doctest::Approx(1.3 * (std::cos(k.x()) + std::cos(k.y()))).epsilon(1e-13));
  }
}

TEST_CASE("Haldane critical model closes its gap at the zone corners") {
  const HoppingModel model = preset_haldane(1.0, 0.1, 0.0, 0.0);
  const Vec2 corner = model.lattice().from_dual(Vec2(1.0 / 3.0, -1.0 / 3.0));
  CHECK(gap_at(model, corner) < 1e-12);
  const RVec e = eigh(h_at(model, corner)).values;
  CHECK(e[0] == doctest::Approx(model.fermi_energy()).epsilon(1e-12));
}

TEST_CASE("pairing completion and conflicts") {
  const Lattice2D lat = make_lattice(Vec2(1.0, 0.0), Vec2(0.0, 1.0));
  CMat t(1, 1);
  t << Complex(0.3, 0.4);
  const HoppingModel completed = HoppingModel::create(lat, {Vec2::Zero()}, {{{1, 0}, t}}, 0.0);
  CHECK(completed.terms().size() == 2);
  CHECK(pairing_defect(completed.terms()) == 0.0);
  CHECK(h_at(completed, Vec2(0.7, 0.0))(0, 0).real() ==
        doctest::Approx(2.0 * (0.3 * std::cos(0.7) - 0.4 * std::sin(0.7))));

  CHECK_THROWS_AS(HoppingModel::create(lat, {Vec2::Zero()}, {{{1, 0}, t}}, 0.0, PairingPolicy::Strict), Error);

  CMat wrong(1, 1);
  wrong << Complex(0.3, 0.4);
  try {
    HoppingModel::create(lat, {Vec2::Zero()}, {{{1, 0}, t}, {{-1, 0}, wrong}}, 0.0);
    FAIL("conflicting pair accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HermiticityConflict);
  }
  const std::vector<HoppingTerm> terms{{{1, 0}, t}, {{-1, 0}, wrong}};
  CHECK(pairing_defect(terms) == doctest::Approx(0.8));
}

TEST_CASE("invalid models are rejected") {
  const Lattice2D lat = make_lattice(Vec2(1.0, 0.0), Vec2(0.0, 1.0));
  CHECK_THROWS_AS(HoppingModel::create(lat, {}, {}, 0.0), Error);
  CHECK_THROWS_AS(HoppingModel::create(lat, {Vec2::Zero()}, {{{0, 0}, CMat::Zero(2, 2)}}, 0.0), Error);
  CHECK_THROWS_AS(dh_at(preset_square(1.0, 0.0), Vec2::Zero(), 3), Error);
}

TEST_CASE("swap_axes exchanges the derivative directions") {
  const HoppingModel model = preset_qwz(-2.0, 2.0, 1.0);
  const HoppingModel swapped = swap_axes(model);
  for (const auto& k : sample_points(model, 10)) {
    const Vec2 ks(k.y(), k.x());
    const RVec a = eigh(h_at(model, k)).values;
    const RVec b = eigh(h_at(swapped, ks)).values;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    const double n1 = operator_norm(dh_at(model, k, 1));
    const double n2 = operator_norm(dh_at(swapped, ks, 2));
    CHECK(n1 == doctest::Approx(n2).epsilon(1e-12));
  }
}

TEST_CASE("spectral radius and current bound") {
  const HoppingModel model = preset_square(1.0, 0.0);
  CHECK(spectral_radius(model) <= 2.0);
  CHECK(spectral_radius(model, 48) > 1.99);
  CHECK(max_current_norm(model) <= 1.0 + 1e-12);
  CHECK(max_current_norm(model) > 0.9);
}
