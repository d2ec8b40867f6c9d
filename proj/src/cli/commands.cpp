#include "kubocone/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "kubocone/cones.hpp"
#include "kubocone/error.hpp"
#include "kubocone/kubo.hpp"
#include "kubocone/model_io.hpp"
#include "kubocone/spectra.hpp"

namespace kubocone::cli {

using nlohmann::ordered_json;

namespace {

constexpr const char* kUnitNote = "natural units e = hbar = 1; conductivities in units of e^2/hbar";

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigParse, what); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    config_error("cannot parse " + what + " value '" + text + "'");
  }
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Model plus the defaults object of its file (empty for presets).
struct Source {
  std::optional<ModelDescription> description;
  std::optional<HoppingModel> model;
  ordered_json defaults = ordered_json::object();
  std::string label;
};

Source load_source(const RunConfig& config, bool build = true) {
  if (config.model_path.has_value() == config.preset.has_value()) {
    config_error("exactly one of --model and --preset is required");
  }
  Source src;
  if (config.model_path) {
    src.description = load_model_description(*config.model_path);
    src.defaults = src.description->defaults;
    src.label = *config.model_path;
    if (build) src.model = build_model(*src.description);
  } else {
    src.model = make_preset(*config.preset, config.params);
    src.label = "preset:" + *config.preset + (config.params.empty() ? "" : "(" + config.params + ")");
  }
  return src;
}

int setting_int(const std::optional<int>& flag, const ordered_json& defaults, const char* key, int fallback) {
  if (flag) return *flag;
  if (auto it = defaults.find(key); it != defaults.end()) {
    if (!it->is_number_integer()) config_error(std::string("defaults.") + key + " must be an integer");
    return it->get<int>();
  }
  return fallback;
}

std::optional<double> setting_double(const std::optional<double>& flag, const ordered_json& defaults, const char* key) {
  if (flag) return flag;
  if (auto it = defaults.find(key); it != defaults.end()) {
    if (!it->is_number()) config_error(std::string("defaults.") + key + " must be a number");
    return it->get<double>();
  }
  return std::nullopt;
}

std::optional<std::string> setting_string(const std::optional<std::string>& flag, const ordered_json& defaults,
                                          const char* key) {
  if (flag) return flag;
  if (auto it = defaults.find(key); it != defaults.end()) {
    if (!it->is_string()) config_error(std::string("defaults.") + key + " must be a string");
    return it->get<std::string>();
  }
  return std::nullopt;
}

std::vector<double> eta_sequence(const RunConfig& config, const Source& src) {
  std::vector<double> etas;
  if (config.eta_seq) {
    etas = *config.eta_seq;
  } else if (auto it = src.defaults.find("eta_seq"); it != src.defaults.end()) {
    if (!it->is_array()) config_error("defaults.eta_seq must be an array");
    for (const auto& v : *it) {
      if (!v.is_number()) config_error("defaults.eta_seq entries must be numbers");
      etas.push_back(v.get<double>());
    }
  } else {
    etas = default_eta_sequence(*src.model);
  }
  for (double e : etas) {
    if (!(e > 0.0)) config_error("eta values must be > 0");
  }
  return etas;
}

int grid_setting(const RunConfig& config, const Source& src, int fallback) {
  const int n = setting_int(config.grid, src.defaults, "grid", fallback);
  if (n < 8) config_error("grid must be >= 8");
  return n;
}

std::vector<std::array<int, 2>> direction_setting(const RunConfig& config, const Source& src,
                                                  const std::string& fallback) {
  return parse_directions(setting_string(config.directions, src.defaults, "directions").value_or(fallback));
}

FermiSearchOptions search_options(const RunConfig& config, const Source& src) {
  FermiSearchOptions o;
  o.coarse = setting_int(config.coarse, src.defaults, "coarse", o.coarse);
  if (o.coarse < 8) config_error("coarse must be >= 8");
  return o;
}

std::vector<FermiPoint> fit_all(const HoppingModel& model, const FermiSearchResult& found) {
  std::vector<FermiPoint> cones;
  for (const auto& omega : found.points) {
    const ConeFit fit = fit_cone(model, omega);
    cones.push_back(FermiPoint{omega, fit.Q, fit.tilt, fit.residual, gap_at(model, omega)});
  }
  return cones;
}

ordered_json vec_json(const Vec2& v) { return ordered_json::array({v.x(), v.y()}); }

ordered_json cone_json(const Lattice2D& lattice, const FermiPoint& c) {
  const ConeCondition cond = check_cone_condition(c.Q, c.tilt);
  ordered_json j;
  j["omega"] = vec_json(lattice.to_dual(c.omega));
  j["omega_cartesian"] = vec_json(c.omega);
  j["Q"] = ordered_json::array({ordered_json::array({c.Q(0, 0), c.Q(0, 1)}), ordered_json::array({c.Q(1, 0), c.Q(1, 1)})});
  j["tilt"] = vec_json(c.tilt);
  j["residual"] = c.residual;
  j["gap_at_omega"] = c.gap_at_omega;
  j["is_quantizing"] = is_quantizing(c.Q);
  j["cone_condition"] = cond.holds;
  j["cone_condition_margin"] = cond.margin;
  return j;
}

std::string direction_key(const std::array<int, 2>& d) { return std::to_string(d[0]) + std::to_string(d[1]); }

ordered_json sequence_json(const SigmaSequence& s) {
  ordered_json j;
  j["quantity"] = std::string(to_string(s.quantity));
  j["direction"] = direction_key({s.j, s.l});
  j["steps"] = ordered_json::array();
  for (const auto& st : s.steps) {
    j["steps"].push_back({{"eta", st.eta},
                          {"f_2eta", st.f_double_eta},
                          {"f_eta", st.f_eta},
                          {"sigma_hat", st.sigma_hat},
                          {"quad_error", st.quad_error},
                          {"grid_points", st.grid_points}});
  }
  j["richardson"] = s.richardson;
  j["value"] = s.value;
  j["converged"] = s.converged;
  return j;
}

void append_sequence_csv(std::ostringstream& csv, const SigmaSequence& s) {
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    const auto& st = s.steps[i];
    csv << direction_key({s.j, s.l}) << ',' << to_string(s.quantity) << ',' << format_number(st.eta) << ','
        << format_number(st.f_double_eta) << ',' << format_number(st.f_eta) << ',' << format_number(st.sigma_hat)
        << ',' << format_number(st.quad_error) << ','
        << (i > 0 ? format_number(s.richardson[i - 1]) : std::string()) << '\n';
  }
}

ordered_json check_json(const std::string& name, bool passed, double value, double tolerance) {
  return {{"name", name}, {"status", passed ? "pass" : "fail"}, {"value", value}, {"tolerance", tolerance}};
}

ordered_json skipped_json(const std::string& name, const std::string& reason) {
  return {{"name", name}, {"status", "skipped"}, {"reason", reason}};
}

// H(k) summed term by term from the stored hopping blocks, without the
// Hermitian projection applied by evaluate().
CMat direct_sum(const HoppingModel& model, const Vec2& k) {
  const int n = model.orbital_count();
  CMat h = CMat::Zero(n, n);
  for (const auto& t : model.terms()) {
    const Vec2 gamma = model.lattice().cell_vector(t.cell[0], t.cell[1]);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        const double phase = k.dot(gamma + model.orbitals()[b] - model.orbitals()[a]);
        h(a, b) += std::exp(kI * phase) * t.matrix(a, b);
      }
    }
  }
  return h;
}

}  // namespace

HoppingModel make_preset(const std::string& name, const std::string& params) {
  std::map<std::string, double> p;
  for (const auto& item : split(params, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) config_error("parameter '" + item + "' is not key=value");
    p[trim(item.substr(0, eq))] = parse_number(trim(item.substr(eq + 1)), trim(item.substr(0, eq)));
  }
  auto take = [&](const char* key, double fallback) {
    auto it = p.find(key);
    if (it == p.end()) return fallback;
    const double v = it->second;
    p.erase(it);
    return v;
  };
  std::optional<double> mu;
  if (auto it = p.find("mu"); it != p.end()) {
    mu = it->second;
    p.erase(it);
  }
  std::optional<HoppingModel> model;
  if (name == "haldane") {
    model = preset_haldane(take("t1", 1.0), take("t2", 0.1), take("phi", 0.0), take("M", 0.0));
  } else if (name == "qwz") {
    model = preset_qwz(take("u", -2.0), take("v1", 1.0), take("v2", 1.0));
  } else if (name == "square") {
    model = preset_square(take("t", 1.0), 0.0);
  } else if (name == "onsite") {
    std::vector<double> energies;
    for (int i = 1; p.count("e" + std::to_string(i)); ++i) energies.push_back(take(("e" + std::to_string(i)).c_str(), 0.0));
    if (energies.empty()) energies = {-1.0, 1.0};
    model = preset_onsite(energies, 0.0);
  } else {
    config_error("unknown preset '" + name + "' (haldane, qwz, square, onsite)");
  }
  if (!p.empty()) config_error("unknown parameter '" + p.begin()->first + "' for preset " + name);
  return mu ? model->with_fermi_energy(*mu) : *model;
}

std::vector<std::array<int, 2>> parse_directions(const std::string& text) {
  std::vector<std::array<int, 2>> out;
  for (const auto& item : split(text, ',')) {
    if (item.size() != 2 || (item[0] != '1' && item[0] != '2') || (item[1] != '1' && item[1] != '2')) {
      config_error("direction '" + item + "' must be one of 11, 12, 21, 22");
    }
    out.push_back({item[0] - '0', item[1] - '0'});
  }
  if (out.empty()) config_error("no directions given");
  return out;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_number(item, "list"));
  if (out.empty()) config_error("empty list");
  return out;
}

CommandResult cmd_validate(const RunConfig& config) {
  Source src = load_source(config, false);
  CommandResult result;
  ordered_json checks = ordered_json::array();
  bool ok = true;
  auto add = [&](ordered_json c) {
    if (c["status"] == "fail") ok = false;
    checks.push_back(std::move(c));
  };

  if (src.description) {
    const double defect = pairing_defect(src.description->terms);
    add(check_json("hermiticity_pairing", defect <= 1e-12, defect, 1e-12));
    if (defect > 1e-12) {
      for (const char* name : {"lattice_duality", "hermiticity", "covariance", "spectrum_periodicity",
                               "derivative_first", "derivative_second"}) {
        checks.push_back(skipped_json(name, "model rejected by hermiticity_pairing"));
      }
      result.exit_code = kValidationFailure;
      result.report = {{"command", "validate"}, {"model", src.label}, {"passed", false}, {"checks", checks}};
      return result;
    }
    src.model = build_model(*src.description);
  } else {
    add(check_json("hermiticity_pairing", true, pairing_defect(src.model->terms()), 1e-12));
  }
  const HoppingModel& model = *src.model;
  const Lattice2D& lat = model.lattice();

  double duality = 0.0;
  const Vec2 a[2] = {lat.a1, lat.a2};
  const Vec2 b[2] = {lat.b1, lat.b2};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) duality = std::max(duality, std::abs(a[i].dot(b[j]) - (i == j ? 2.0 * kPi : 0.0)));
  }
  add(check_json("lattice_duality", duality <= 1e-12 * 2.0 * kPi, duality, 1e-12 * 2.0 * kPi));

  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> unit(-0.5, 0.5);
  double herm = 0.0;
  double cov = 0.0;
  double periodic = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
  const double h = 1e-5;
  for (int s = 0; s < 100; ++s) {
    const Vec2 k = lat.from_dual(Vec2(unit(rng), unit(rng)));
    const CMat raw = direct_sum(model, k);
    const double scale = std::max(raw.cwiseAbs().maxCoeff(), 1e-300);
    herm = std::max(herm, hermiticity_defect(raw) / scale);
    for (auto [m1, m2] : {std::pair{1, 0}, std::pair{0, 1}, std::pair{1, 1}}) {
      cov = std::max(cov, covariance_defect(model, k, m1, m2));
      const RVec e0 = eigh(h_at(model, k)).values;
      const RVec e1 = eigh(h_at(model, k + lat.dual_vector(m1, m2))).values;
      periodic = std::max(periodic, (e0 - e1).cwiseAbs().maxCoeff());
    }
    const BlochMatrices at = evaluate(model, k, 2);
    const double norm = std::max({at.h.cwiseAbs().maxCoeff(), at.dh[0].cwiseAbs().maxCoeff(),
                                  at.dh[1].cwiseAbs().maxCoeff(), 1e-300});
    for (int j = 1; j <= 2; ++j) {
      Vec2 e = Vec2::Zero();
      e[j - 1] = h;
      const CMat fd = (h_at(model, k + e) - h_at(model, k - e)) / (2.0 * h);
      d1 = std::max(d1, (fd - at.current(j)).cwiseAbs().maxCoeff() / norm);
      for (int l = 1; l <= 2; ++l) {
        const CMat fd2 = (dh_at(model, k + e, l) - dh_at(model, k - e, l)) / (2.0 * h);
        const double norm2 = std::max(norm, at.second(j, l).cwiseAbs().maxCoeff());
        d2 = std::max(d2, (fd2 - at.second(j, l)).cwiseAbs().maxCoeff() / norm2);
      }
    }
  }
  add(check_json("hermiticity", herm <= 1e-12, herm, 1e-12));
  add(check_json("covariance", cov <= 1e-10, cov, 1e-10));
  add(check_json("spectrum_periodicity", periodic <= 1e-10, periodic, 1e-10));
  add(check_json("derivative_first", d1 <= 1e-6, d1, 1e-6));
  add(check_json("derivative_second", d2 <= 1e-6, d2, 1e-6));

  result.exit_code = ok ? kOk : kValidationFailure;
  result.report = {{"command", "validate"}, {"model", src.label}, {"passed", ok}, {"checks", checks}};
  return result;
}

CommandResult cmd_bands(const RunConfig& config) {
  const Source src = load_source(config);
  const HoppingModel& model = *src.model;
  const Lattice2D& lat = model.lattice();
  const std::string path = setting_string(config.path, src.defaults, "path").value_or("0,0;0.5,0;0.5,0.5;0,0");
  const int samples = setting_int(config.samples, src.defaults, "samples", 100);
  if (samples < 1) config_error("samples must be >= 1");
  std::vector<Vec2> waypoints;
  for (const auto& wp : split(path, ';')) {
    const std::vector<double> c = parse_list(wp);
    if (c.size() != 2) config_error("waypoint '" + wp + "' must have two dual coordinates");
    waypoints.push_back(lat.from_dual(Vec2(c[0], c[1])));
  }
  if (waypoints.size() < 2) config_error("k-path needs at least two waypoints");

  const int n = model.orbital_count();
  std::ostringstream csv;
  csv << "arclength,k1,k2";
  for (int i = 1; i <= n; ++i) csv << ",lambda_" << i;
  csv << '\n';
  std::vector<double> arc;
  std::vector<RVec> bands;
  std::vector<double> ticks{0.0};
  double s = 0.0;
  for (std::size_t seg = 0; seg + 1 < waypoints.size(); ++seg) {
    const Vec2 from = waypoints[seg];
    const Vec2 to = waypoints[seg + 1];
    const int first = seg == 0 ? 0 : 1;
    for (int i = first; i <= samples; ++i) {
      const double t = static_cast<double>(i) / samples;
      const Vec2 k = from + t * (to - from);
      const double here = s + t * (to - from).norm();
      const RVec values = eigh(h_at(model, k)).values;
      csv << format_number(here) << ',' << format_number(k.x()) << ',' << format_number(k.y());
      for (int b = 0; b < n; ++b) csv << ',' << format_number(values[b]);
      csv << '\n';
      arc.push_back(here);
      bands.push_back(values);
    }
    s += (to - from).norm();
    ticks.push_back(s);
  }

  CommandResult result;
  result.csv = csv.str();
  result.report = {{"command", "bands"}, {"model", src.label}, {"bands", n}, {"samples", arc.size()},
                   {"fermi_energy", model.fermi_energy()}, {"note", kUnitNote}};

  if (setting_string(config.svg, src.defaults, "svg")) {
    double lo = model.fermi_energy();
    double hi = model.fermi_energy();
    for (const auto& v : bands) {
      lo = std::min(lo, v.minCoeff());
      hi = std::max(hi, v.maxCoeff());
    }
    const double pad = 0.05 * std::max(hi - lo, 1e-12);
    lo -= pad;
    hi += pad;
    const double width = 640.0;
    const double height = 400.0;
    const double margin = 40.0;
    auto px = [&](double x) { return margin + (width - 2 * margin) * x / std::max(s, 1e-300); };
    auto py = [&](double y) { return height - margin - (height - 2 * margin) * (y - lo) / (hi - lo); };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (double t : ticks) {
      svg << "<line x1=\"" << px(t) << "\" y1=\"" << margin << "\" x2=\"" << px(t) << "\" y2=\"" << height - margin
          << "\" stroke=\"#bbbbbb\"/>\n";
    }
    svg << "<line x1=\"" << margin << "\" y1=\"" << py(model.fermi_energy()) << "\" x2=\"" << width - margin
        << "\" y2=\"" << py(model.fermi_energy()) << "\" stroke=\"red\" stroke-dasharray=\"6 4\"/>\n";
    for (int b = 0; b < n; ++b) {
      svg << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < arc.size(); ++i) svg << px(arc[i]) << ',' << py(bands[i][b]) << ' ';
      svg << "\"/>\n";
    }
    svg << "</svg>\n";
    result.svg = svg.str();
  }
  return result;
}

CommandResult cmd_fermi_points(const RunConfig& config) {
  const Source src = load_source(config);
  const HoppingModel& model = *src.model;
  const FermiSearchResult found = find_fermi_points(model, search_options(config, src));
  const std::vector<FermiPoint> cones = fit_all(model, found);
  ordered_json points = ordered_json::array();
  for (const auto& c : cones) points.push_back(cone_json(model.lattice(), c));
  CommandResult result;
  result.report = {{"command", "fermi-points"},
                   {"model", src.label},
                   {"fermi_energy", model.fermi_energy()},
                   {"occupied_bands", found.occupied},
                   {"tolerance", found.tolerance},
                   {"min_gap", found.min_gap},
                   {"points", points},
                   {"warnings", found.warnings}};
  return result;
}

CommandResult cmd_sigma(const RunConfig& config) {
  const Source src = load_source(config);
  const HoppingModel& model = *src.model;
  const std::string method = setting_string(config.method, src.defaults, "method").value_or("closed");
  const auto directions = direction_setting(config, src, "11,22");
  const FermiSearchResult found = find_fermi_points(model, search_options(config, src));
  const std::vector<FermiPoint> cones = fit_all(model, found);

  CommandResult result;
  ordered_json report;
  report["command"] = "sigma";
  report["model"] = src.label;
  report["note"] = kUnitNote;
  report["min_gap"] = found.min_gap;
  report["cones"] = ordered_json::array();
  for (const auto& c : cones) report["cones"].push_back(cone_json(model.lattice(), c));

  if (method == "closed") {
    report["method"] = std::string(to_string(Method::closed_form));
    ordered_json sigma = ordered_json::object();
    for (const auto& d : directions) {
      if (d[0] != d[1]) config_error("closed form covers 11 and 22 only");
      const ClosedFormSigma s = sigma_closed_form(cones, d[0]);
      sigma[direction_key(d)] = {{"value", s.sigma}, {"contributions", s.contributions}};
    }
    report["sigma"] = sigma;
  } else if (method == "kubo") {
    report["method"] = std::string(to_string(Method::kubo_extrapolation));
    const std::vector<double> etas = eta_sequence(config, src);
    check_eta_sequence(etas);
    GridPolicy policy;
    policy.base = grid_setting(config, src, policy.base);
    ordered_json sigma = ordered_json::object();
    std::ostringstream csv;
    csv << "direction,quantity,eta,f_2eta,f_eta,sigma_hat,quad_error,richardson\n";
    bool converged = true;
    for (const auto& d : directions) {
      const ConductivityReport r = sigma_kubo(model, d[0], d[1], etas, policy, cones);
      const SigmaSequence& seq = r.sequences.front();
      sigma[direction_key(d)] = sequence_json(seq);
      append_sequence_csv(csv, seq);
      converged = converged && seq.converged;
    }
    report["eta_sequence"] = etas;
    report["base_grid"] = policy.base;
    report["sigma"] = sigma;
    report["converged"] = converged;
    result.csv = csv.str();
    if (!converged) result.exit_code = kNotConverged;
  } else {
    config_error("unknown method '" + method + "' (closed, kubo)");
  }
  result.report = report;
  return result;
}

CommandResult cmd_verify(const RunConfig& config) {
  const Source src = load_source(config);
  const HoppingModel& model = *src.model;
  const auto directions = direction_setting(config, src, "11,22");
  for (const auto& d : directions) {
    if (d[0] != d[1]) config_error("verify covers 11 and 22 only");
  }
  const std::vector<double> etas = eta_sequence(config, src);
  check_eta_sequence(etas);
  GridPolicy policy;
  policy.base = grid_setting(config, src, policy.base);
  policy.eval.estimate_error = false;
  const FermiSearchResult found = find_fermi_points(model, search_options(config, src));
  const std::vector<FermiPoint> cones = fit_all(model, found);
  const bool gapless = !cones.empty();
  const std::optional<double> eps = setting_double(config.eps, src.defaults, "eps");
  const double epsilon = gapless ? eps.value_or(default_epsilon(model.lattice(), cones)) : 0.0;

  ordered_json items = ordered_json::array();
  bool ok = true;
  auto add = [&](ordered_json c) {
    if (c["status"] == "fail") ok = false;
    items.push_back(std::move(c));
  };

  for (const auto& d : directions) {
    const int j = d[0];
    const std::string tag = "_" + direction_key(d);
    const double eta_min = etas.back();
    const CellPlan fine = plan_for_eta(model, cones, eta_min, policy);
    const SigmaSequence fjl = estimate_sigma(model, Quantity::fjl, j, j, cones, epsilon, etas, policy);
    const SigmaSequence ftl = estimate_sigma(model, Quantity::ftilde, j, j, cones, epsilon, etas, policy);

    // (a) s_jj = -f_jj(0+), with f(0+) from the linear extrapolation 2 f(eta) - f(2 eta).
    const KuboEstimate s = schwinger(model, j, j, fine, policy.eval);
    const SigmaStep& last = fjl.steps.back();
    const double f0 = 2.0 * last.f_eta - last.f_double_eta;
    add(check_json("schwinger_vs_f0" + tag, std::abs(s.value + f0) < 1e-3, std::abs(s.value + f0), 1e-3));

    // (b) f_jj(eta) and ftilde_jj(eta) on shared grids, at both ends of the sequence.
    double rel = 0.0;
    const CellPlan coarse = plan_for_eta(model, cones, etas[1], policy);
    for (const auto& [eta, plan] : {std::pair<double, const CellPlan*>{etas.front(), &coarse},
                                    std::pair<double, const CellPlan*>{eta_min, &fine}}) {
      const KuboEstimate a = fjl_eta(model, eta, j, j, *plan, policy.eval);
      const KuboEstimate b = ftilde_jj(model, eta, j, *plan, policy.eval);
      rel = std::max(rel, std::abs(a.value - b.value) / std::max(std::abs(b.value), 1e-300));
    }
    add(check_json("fjl_vs_ftilde" + tag, rel < 1e-8, rel, 1e-8));

    if (gapless) {
      // (c) ftilde - fsing varies by O(eta^2) only.
      const SigmaSequence fs = estimate_sigma(model, Quantity::fsing, j, j, cones, epsilon, etas, policy);
      const SigmaStep& a = ftl.steps.back();
      const SigmaStep& b = fs.steps.back();
      const double r_big = a.f_double_eta - b.f_double_eta;
      const double r_small = a.f_eta - b.f_eta;
      const double drift = std::abs(r_big - r_small) / std::max(std::abs(r_small), 1e-300);
      add(check_json("regular_part_flatness" + tag, drift < 2e-3, drift, 2e-3));

      // (d) sigma from zeta against sigma from fsing.
      const SigmaSequence zt = estimate_sigma(model, Quantity::zeta, j, j, cones, epsilon, etas, policy);
      const double dz = std::abs(zt.value - fs.value);
      add(check_json("zeta_vs_fsing" + tag, dz < 5e-3, dz, 5e-3));

      // (e) Kubo against the closed form.
      const double closed = sigma_closed_form(cones, j).sigma;
      const double dev = std::abs(fjl.value - closed) / closed;
      ordered_json e = check_json("kubo_vs_closed" + tag, dev < 0.03, dev, 0.03);
      e["kubo"] = fjl.value;
      e["closed"] = closed;
      add(e);
    } else {
      add(skipped_json("regular_part_flatness" + tag, "no Fermi points"));
      add(skipped_json("zeta_vs_fsing" + tag, "no Fermi points"));
      ordered_json e = check_json("kubo_vanishes" + tag, std::abs(fjl.value) < 1e-3, std::abs(fjl.value), 1e-3);
      e["kubo"] = fjl.value;
      add(e);
    }
  }

  for (std::size_t c = 0; c < cones.size(); ++c) {
    const std::span<const FermiPoint> one(&cones[c], 1);
    const double dev = std::max(std::abs(sigma_closed_form(one, 1).sigma - 1.0 / 16.0),
                                std::abs(sigma_closed_form(one, 2).sigma - 1.0 / 16.0));
    const bool quantizing = is_quantizing(cones[c].Q);
    ordered_json q = check_json("quantization_predicate_" + std::to_string(c), quantizing == (dev < 1e-6), dev, 1e-6);
    q["is_quantizing"] = quantizing;
    add(q);
  }

  CommandResult result;
  result.exit_code = ok ? kOk : kValidationFailure;
  result.report = {{"command", "verify"}, {"model", src.label}, {"note", kUnitNote}, {"eta_sequence", etas},
                   {"epsilon", epsilon}, {"cones", cones.size()}, {"passed", ok}, {"items", items}};
  return result;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  CommandResult result;
  try {
    if (config.command == "validate") {
      result = cmd_validate(config);
    } else if (config.command == "bands") {
      result = cmd_bands(config);
    } else if (config.command == "fermi-points") {
      result = cmd_fermi_points(config);
    } else if (config.command == "sigma") {
      result = cmd_sigma(config);
    } else if (config.command == "verify") {
      result = cmd_verify(config);
    } else {
      config_error("unknown command '" + config.command + "'");
    }
  } catch (const Error& e) {
    err << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::ConfigParse:
      case ErrorCode::InvalidArgument:
      case ErrorCode::DegenerateBasis:
      case ErrorCode::HermiticityConflict:
        return kConfigError;
      case ErrorCode::NotConverged:
      case ErrorCode::NoConvergence:
        return kNotConverged;
      default:
        return kNumericalError;
    }
  }

  auto write_file = [&](const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) {
      err << "cannot write " << path << '\n';
      return false;
    }
    f << text;
    return true;
  };

  const std::string json = result.report.dump(2) + "\n";
  if (config.command == "bands") {
    // CSV is the primary output of bands; the JSON summary goes to stderr.
    if (config.out) {
      if (!write_file(*config.out, result.csv)) return kConfigError;
    } else {
      out << result.csv;
    }
    err << json;
  } else {
    if (config.out) {
      if (!write_file(*config.out, json)) return kConfigError;
    } else {
      out << json;
    }
    if (!result.csv.empty() && config.csv && !write_file(*config.csv, result.csv)) return kConfigError;
  }
  if (!result.svg.empty() && config.svg && !write_file(*config.svg, result.svg)) return kConfigError;
  return result.exit_code;
}

}  // namespace kubocone::cli
