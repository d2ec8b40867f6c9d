#include "kubocone/model_io.hpp"

#include <fstream>
#include <sstream>

#include "kubocone/error.hpp"

namespace kubocone {

using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::ConfigParse, what); }

double number(const ordered_json& v, const std::string& where) {
  if (!v.is_number()) fail(where + ": expected a number");
  return v.get<double>();
}

Vec2 pair(const ordered_json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2) fail(where + ": expected [x, y]");
  return Vec2(number(v[0], where), number(v[1], where));
}

const ordered_json& field(const ordered_json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where + ": missing \"" + key + "\"");
  return *it;
}

CMat complex_matrix(const ordered_json& v, int n, const std::string& where) {
  if (!v.is_array() || static_cast<int>(v.size()) != n) fail(where + ": expected " + std::to_string(n) + " rows");
  CMat m(n, n);
  for (int a = 0; a < n; ++a) {
    const auto& row = v[a];
    if (!row.is_array() || static_cast<int>(row.size()) != n) {
      fail(where + ": row " + std::to_string(a) + " must have " + std::to_string(n) + " entries");
    }
    for (int b = 0; b < n; ++b) {
      const auto& entry = row[b];
      if (entry.is_number()) {
        m(a, b) = entry.get<double>();
      } else {
        const Vec2 re_im = pair(entry, where);
        m(a, b) = Complex(re_im.x(), re_im.y());
      }
    }
  }
  return m;
}

}  // namespace

ModelDescription parse_model_description(const ordered_json& doc) {
  if (!doc.is_object()) fail("model: top level must be an object");
  ModelDescription out;
  const auto& lattice = field(doc, "lattice", "model");
  out.a1 = pair(field(lattice, "a1", "lattice"), "lattice.a1");
  out.a2 = pair(field(lattice, "a2", "lattice"), "lattice.a2");

  const auto& orbitals = field(doc, "orbitals", "model");
  if (!orbitals.is_array() || orbitals.empty()) fail("orbitals: expected a non-empty array");
  for (std::size_t i = 0; i < orbitals.size(); ++i) {
    out.orbitals.push_back(pair(orbitals[i], "orbitals[" + std::to_string(i) + "]"));
  }
  const int n = static_cast<int>(out.orbitals.size());

  out.fermi_energy = number(field(doc, "fermi_energy", "model"), "fermi_energy");

  const auto& hoppings = field(doc, "hoppings", "model");
  if (!hoppings.is_array()) fail("hoppings: expected an array");
  for (std::size_t i = 0; i < hoppings.size(); ++i) {
    const std::string where = "hoppings[" + std::to_string(i) + "]";
    const auto& h = hoppings[i];
    if (!h.is_object()) fail(where + ": expected an object");
    const auto& cell = field(h, "cell", where);
    if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number_integer() || !cell[1].is_number_integer()) {
      fail(where + ".cell: expected two integers");
    }
    out.terms.push_back(
        HoppingTerm{{cell[0].get<int>(), cell[1].get<int>()}, complex_matrix(field(h, "matrix", where), n, where + ".matrix")});
  }

  if (auto it = doc.find("defaults"); it != doc.end()) {
    if (!it->is_object()) fail("defaults: expected an object");
    out.defaults = *it;
  }
  return out;
}

ModelDescription load_model_description(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open model file " + path.string());
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(path.string() + ": " + e.what());
  }
  return parse_model_description(doc);
}

HoppingModel build_model(const ModelDescription& description) {
  return HoppingModel::create(make_lattice(description.a1, description.a2), description.orbitals,
                              description.terms, description.fermi_energy);
}

HoppingModel load_model(const std::filesystem::path& path) {
  return build_model(load_model_description(path));
}

ordered_json model_to_json(const HoppingModel& model) {
  const auto vec = [](const Vec2& v) { return ordered_json::array({v.x(), v.y()}); };
  ordered_json doc;
  doc["lattice"] = {{"a1", vec(model.lattice().a1)}, {"a2", vec(model.lattice().a2)}};
  doc["orbitals"] = ordered_json::array();
  for (const auto& r : model.orbitals()) doc["orbitals"].push_back(vec(r));
  doc["fermi_energy"] = model.fermi_energy();
  doc["hoppings"] = ordered_json::array();
  for (const auto& t : model.terms()) {
    ordered_json rows = ordered_json::array();
    for (int a = 0; a < t.matrix.rows(); ++a) {
      ordered_json row = ordered_json::array();
      for (int b = 0; b < t.matrix.cols(); ++b) row.push_back({t.matrix(a, b).real(), t.matrix(a, b).imag()});
      rows.push_back(row);
    }
    doc["hoppings"].push_back({{"cell", {t.cell[0], t.cell[1]}}, {"matrix", rows}});
  }
  return doc;
}

}  // namespace kubocone
