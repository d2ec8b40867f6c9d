#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kubocone/bloch.hpp"
#include "kubocone/cli/commands.hpp"
#include "kubocone/cones.hpp"
#include "kubocone/error.hpp"
#include "kubocone/kubo.hpp"
#include "kubocone/spectra.hpp"

using namespace kubocone;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> notes;

  void require(bool ok) { pass = pass && ok; }
  void note(const std::string& text) { notes.push_back(text); }
};

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

const std::vector<double> kEtas{0.2, 0.1, 0.05, 0.025, 0.0125};

HoppingModel haldane_critical() { return preset_haldane(1.0, 0.1, 0.0, 0.0); }
HoppingModel haldane_gapped() { return preset_haldane(1.0, 0.1, kPi / 2, 0.0); }
HoppingModel qwz_anisotropic() { return preset_qwz(-2.0, 2.0, 1.0); }

void closed_haldane(Outcome& o) {
  const auto cones = detect_cones(haldane_critical());
  const double s1 = sigma_closed_form(cones, 1).sigma;
  const double s2 = sigma_closed_form(cones, 2).sigma;
  o.require(cones.size() == 2 && std::abs(s1 - 0.125) < 1e-3 && std::abs(s2 - 0.125) < 1e-3);
  o.detail << "cones=" << cones.size() << " sigma11=" << fmt("%.8f", s1) << " sigma22=" << fmt("%.8f", s2);
}

void kubo_isotropic(Outcome& o) {
  const HoppingModel model = haldane_critical();
  const auto cones = detect_cones(model);
  for (int j = 1; j <= 2; ++j) {
    const ConductivityReport r = sigma_kubo(model, j, j, kEtas, {}, cones);
    const SigmaSequence& s = r.sequences.front();
    const double dev = std::abs(s.value - 0.125) / 0.125;
    o.require(dev < 0.02);
    o.detail << " sigma" << j << j << "=" << fmt("%.6f", s.value) << " (rel dev " << fmt("%.2e", dev)
             << ", quad_error " << fmt("%.1e", s.steps.back().quad_error) << ")";
  }
}

void kubo_anisotropic(Outcome& o) {
  const HoppingModel model = qwz_anisotropic();
  const auto cones = detect_cones(model);
  const double expected[2] = {0.125, 0.03125};
  for (int j = 1; j <= 2; ++j) {
    const double closed = sigma_closed_form(cones, j).sigma;
    const ConductivityReport r = sigma_kubo(model, j, j, kEtas, {}, cones);
    const double kubo = r.sequences.front().value;
    const double dev = std::abs(kubo - closed) / closed;
    o.require(std::abs(closed - expected[j - 1]) < 1e-6 && dev < 0.03);
    o.detail << " sigma" << j << j << ": closed=" << fmt("%.6f", closed) << " kubo=" << fmt("%.6f", kubo)
             << " (rel dev " << fmt("%.2e", dev) << ")";
  }
}

// Raw sigma-hat at the last eta, from sigma_kubo on the model's own Fermi points.
void gapped_part(Outcome& o, const std::string& name, const HoppingModel& model, const std::vector<double>& etas) {
  const FermiSearchResult found = find_fermi_points(model);
  bool ok = true;
  std::ostringstream line;
  line << name << ": fermi points=" << found.points.size() << " min_gap=" << fmt("%.3e", found.min_gap)
       << " eta_min=" << etas.back();
  for (int j = 1; j <= 2; ++j) {
    const ConductivityReport r = sigma_kubo(model, j, j, etas);
    const SigmaSequence& s = r.sequences.front();
    const double raw = s.steps.back().sigma_hat;
    ok = ok && std::abs(raw) < 1e-3;
    line << " sigma_hat" << j << j << "=" << fmt("%.3e", raw) << " richardson=" << fmt("%.3e", s.value);
  }
  line << (ok ? " [pass]" : " [fail]");
  o.require(ok);
  o.note(line.str());
}

void gapped_null(Outcome& o) {
  gapped_part(o, "QWZ u=0", preset_qwz(0.0, 1.0, 1.0), kEtas);
  std::vector<double> extended = kEtas;
  for (int i = 0; i < 3; ++i) extended.push_back(0.5 * extended.back());
  gapped_part(o, "Haldane phi=pi/2", haldane_gapped(), extended);
  o.detail << "|sigma_hat_jj(eta_min)| < 1e-3 on both models";
}

double schwinger_gap(const HoppingModel& model, const KGrid& grid, EvalOptions eval, std::ostringstream& line) {
  double worst = 0.0;
  for (auto [j, l] : {std::pair{1, 1}, std::pair{1, 2}, std::pair{2, 1}, std::pair{2, 2}}) {
    const double s = schwinger(model, j, l, grid, eval).value;
    const double f = fjl_eta(model, 1e-3, j, l, grid, eval).value;
    worst = std::max(worst, std::abs(s + f));
    line << " " << j << l << ":" << fmt("%.2e", std::abs(s + f));
  }
  return worst;
}

void schwinger_identity(Outcome& o) {
  const HoppingModel model = preset_qwz(0.0, 1.0, 1.0);
  const KGrid grid = uniform_grid(model.lattice(), 128, 128);
  EvalOptions checked;
  checked.estimate_error = false;
  try {
    fjl_eta(model, 1e-3, 1, 1, grid, checked);
    o.note("QWZ u=0: resolution check accepts the 128 x 128 grid at eta = 1e-3");
  } catch (const Error& e) {
    o.note(std::string("QWZ u=0: resolution check rejects the grid (") + std::string(to_string(e.code())) + ")");
  }
  EvalOptions raw = checked;
  raw.check_resolution = false;
  std::ostringstream line;
  const double worst = schwinger_gap(model, grid, raw, line);
  o.require(worst < 1e-3);
  o.detail << "QWZ u=0 |s_jl + f_jl(1e-3)|" << line.str() << " max=" << fmt("%.3e", worst);

  std::ostringstream gapped;
  const double w1 = schwinger_gap(preset_qwz(1.0, 1.0, 1.0), grid, checked, gapped);
  o.note("QWZ u=1 (gapped, informational) |s_jl + f_jl(1e-3)|" + gapped.str() + " max=" + fmt("%.3e", w1));
}

void extension_identity(Outcome& o) {
  const HoppingModel model = haldane_critical();
  const auto cones = detect_cones(model);
  GridPolicy policy;
  policy.eval.estimate_error = false;
  // A plan built for eta resolves every eta' in [eta / 2, 4 eta].
  const CellPlan plan = plan_for_eta(model, cones, 0.1, policy);
  double worst = 0.0;
  for (double eta : {0.2, 0.05}) {
    for (int j = 1; j <= 2; ++j) {
      const double a = fjl_eta(model, eta, j, j, plan, policy.eval).value;
      const double b = ftilde_jj(model, eta, j, plan, policy.eval).value;
      worst = std::max(worst, std::abs(a - b) / std::abs(b));
    }
  }
  o.require(worst < 1e-8);
  o.detail << "max relative |f_jj - ftilde_jj| = " << fmt("%.3e", worst) << " on " << plan.point_count() << " points";
}

void singular_consistency(Outcome& o) {
  GridPolicy policy;
  policy.eval.estimate_error = false;
  for (const auto& [name, model] :
       {std::pair{std::string("Haldane"), haldane_critical()}, std::pair{std::string("QWZ"), qwz_anisotropic()}}) {
    const auto cones = detect_cones(model);
    for (int j = 1; j <= 2; ++j) {
      const double a = estimate_sigma(model, Quantity::ftilde, j, j, cones, std::nullopt, kEtas, policy).value;
      const double b = estimate_sigma(model, Quantity::fsing, j, j, cones, std::nullopt, kEtas, policy).value;
      const double c = estimate_sigma(model, Quantity::zeta, j, j, cones, std::nullopt, kEtas, policy).value;
      const double spread = std::max({std::abs(a - b), std::abs(a - c), std::abs(b - c)});
      o.require(spread < 5e-3);
      o.detail << " " << name << " " << j << j << ": " << fmt("%.6f", a) << "/" << fmt("%.6f", b) << "/"
               << fmt("%.6f", c) << " spread " << fmt("%.1e", spread);
    }
  }
}

void quantization_predicate(Outcome& o) {
  const std::pair<const char*, Mat2> forms[] = {
      {"I", Mat2::Identity()},
      {"3I", 3.0 * Mat2::Identity()},
      {"diag(4,1)", Vec2(4.0, 1.0).asDiagonal()},
      {"[[2,1],[1,2]]", (Mat2() << 2.0, 1.0, 1.0, 2.0).finished()}};
  const bool expected[] = {true, true, false, false};
  int i = 0;
  for (const auto& [name, Q] : forms) {
    const FermiPoint cone{Vec2::Zero(), Q, Vec2::Zero(), 0.0, 0.0};
    const std::span<const FermiPoint> one(&cone, 1);
    const bool sixteenth = std::abs(sigma_closed_form(one, 1).sigma - 1.0 / 16.0) < 1e-6 &&
                           std::abs(sigma_closed_form(one, 2).sigma - 1.0 / 16.0) < 1e-6;
    const bool quantizing = is_quantizing(Q);
    o.require(quantizing == sixteenth && quantizing == expected[i++]);
    o.detail << " " << name << ":" << (quantizing ? "q" : "-") << (sixteenth ? "=" : "!");
  }
}

void contour_properties(Outcome& o) {
  double worst = 0.0;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (const HoppingModel& model : {haldane_gapped(), haldane_critical(), preset_qwz(1.0, 1.0, 1.0)}) {
    int used = 0;
    while (used < 40) {
      const Vec2 k = model.lattice().from_dual(Vec2(u(rng), u(rng)));
      if (gap_at(model, k) < 0.1) continue;
      const CMat spectral = fermi_projector_spectral(eigh(h_at(model, k)), model.fermi_energy());
      const CMat riesz = fermi_projector_riesz(model, k, model.fermi_energy(), std::nullopt, 512);
      worst = std::max(worst, (spectral - riesz).cwiseAbs().maxCoeff());
      ++used;
    }
  }
  o.require(worst < 1e-8);
  o.detail << "max |P_riesz - P_spectral| = " << fmt("%.2e", worst) << ";";

  const HoppingModel model = haldane_critical();
  double worst_ratio = 0.0;
  for (const auto& c : detect_cones(model)) {
    for (double angle : {0.3, 1.9, 4.0}) {
      const Vec2 dir(std::cos(angle), std::sin(angle));
      for (int j = 1; j <= 2; ++j) {
        double lo = 1e300;
        double hi = 0.0;
        for (double r : {1e-1, 1e-2, 1e-3}) {
          const double v = r * operator_norm(projector_derivative(model, c.omega + r * dir, model.fermi_energy(), j));
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        worst_ratio = std::max(worst_ratio, hi / lo);
      }
    }
  }
  o.require(worst_ratio <= 3.0);
  o.detail << " max ray variation of r |dP| = " << fmt("%.4f", worst_ratio);
}

void invariant_suites(Outcome& o) {
  int failed = 0;
  for (const auto& [name, params] : {std::pair{"haldane", ""}, std::pair{"haldane", "phi=1.5707963267948966"},
                                     std::pair{"qwz", "u=-2,v1=2,v2=1"}, std::pair{"qwz", "u=1"},
                                     std::pair{"square", "t=1"}}) {
    cli::RunConfig c;
    c.command = "validate";
    c.preset = name;
    c.params = params;
    if (cli::cmd_validate(c).exit_code != cli::kOk) ++failed;
  }
  o.require(failed == 0);
  o.detail << "validate failures=" << failed;

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double algebra = 0.0;
  for (const HoppingModel& model : {haldane_critical(), qwz_anisotropic(), preset_qwz(1.0, 1.0, 1.0)}) {
    for (int s = 0; s < 100; ++s) {
      const Vec2 k = model.lattice().from_dual(Vec2(u(rng), u(rng)));
      const CMat h = h_at(model, k);
      const BandSpectrum sp = eigh(h);
      const CMat p = fermi_projector_spectral(sp, model.fermi_energy());
      algebra = std::max({algebra, (p * p - p).cwiseAbs().maxCoeff(), (p - p.adjoint()).cwiseAbs().maxCoeff(),
                          (h * p - p * h).cwiseAbs().maxCoeff(),
                          std::abs(p.trace().real() - occupied_count(sp, model.fermi_energy()))});
    }
  }
  o.require(algebra < 1e-12);
  o.detail << " projector=" << fmt("%.1e", algebra);

  const HoppingModel model = haldane_critical();
  const auto cones = detect_cones(model);
  double weight = 0.0;
  for (double eta : {0.1, 0.0125}) {
    const CellPlan plan = plan_for_eta(model, cones, eta, {});
    weight = std::max({weight, std::abs(plan.total_weight() / model.lattice().bz_area() - 1.0),
                       std::abs(plan.doubled().total_weight() / model.lattice().bz_area() - 1.0)});
  }
  o.require(weight < 1e-12);
  o.detail << " weights=" << fmt("%.1e", weight);

  EvalOptions raw;
  raw.check_resolution = false;
  raw.estimate_error = false;
  int positive = 0;
  for (const HoppingModel& m : {haldane_critical(), qwz_anisotropic()}) {
    for (int s = 0; s < 200; ++s) {
      const KGrid one = shifted_uniform_grid(m.lattice(), 1, 1, Vec2(u(rng), u(rng)));
      for (int j = 1; j <= 2; ++j) {
        if (ftilde_jj(m, 0.05, j, one, raw).value > 0.0) ++positive;
        if (fjl_eta(m, 0.05, j, j, one, raw).value > 1e-15) ++positive;
      }
    }
  }
  o.require(positive == 0);
  o.detail << " positive f_jj points=" << positive;

  const double sigma = 0.125;
  const double c2 = -0.7;
  auto f = [&](double eta) { return -0.3 + sigma * eta + c2 * eta * eta; };
  std::vector<double> hats;
  double algebra_error = 0.0;
  for (double eta : kEtas) {
    hats.push_back(sigma_hat(f(2 * eta), f(eta), eta));
    algebra_error = std::max(algebra_error, std::abs(hats.back() - (sigma + 3 * c2 * eta)));
  }
  for (double r : richardson_sequence(hats)) algebra_error = std::max(algebra_error, std::abs(r - sigma));
  o.require(algebra_error < 1e-12);
  o.detail << " estimator=" << fmt("%.1e", algebra_error);
}

struct Criterion {
  int id;
  const char* title;
  double budget_seconds;
  std::function<void(Outcome&)> body;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run one criterion (1-10)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "closed form, Haldane critical", 30.0, closed_haldane},
      {2, "Kubo vs closed form, isotropic", 600.0, kubo_isotropic},
      {3, "Kubo vs closed form, anisotropic", 600.0, kubo_anisotropic},
      {4, "gapped null result", 300.0, gapped_null},
      {5, "Schwinger identity on QWZ u=0", 120.0, schwinger_identity},
      {6, "f_jj and ftilde_jj agree", 0.0, extension_identity},
      {7, "singular-part consistency", 0.0, singular_consistency},
      {8, "quantization predicate", 0.0, quantization_predicate},
      {9, "Riesz projector and ray bound", 0.0, contour_properties},
      {10, "invariant suites", 0.0, invariant_suites},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " error: " << e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_seconds > 0.0 && seconds > c.budget_seconds) {
      o.pass = false;
      o.detail << " over budget of " << c.budget_seconds << " s";
    }
    for (const auto& n : o.notes) std::printf("      %s\n", n.c_str());
    std::printf("%s criterion %d: %s | %s | %.1f s\n", o.pass ? "PASS" : "FAIL", c.id, c.title,
                o.detail.str().c_str(), seconds);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
