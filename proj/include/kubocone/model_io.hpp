#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kubocone/bloch.hpp"

namespace kubocone {

/// Model file contents before any pairing completion or validation beyond
/// shape checks. `defaults` holds the optional "defaults" object verbatim.
struct ModelDescription {
  Vec2 a1 = Vec2::Zero();
  Vec2 a2 = Vec2::Zero();
  std::vector<Vec2> orbitals;
  std::vector<HoppingTerm> terms;
  double fermi_energy = 0.0;
  nlohmann::ordered_json defaults = nlohmann::ordered_json::object();
};

/// Schema:
///   { "lattice": {"a1": [x, y], "a2": [x, y]},
///     "orbitals": [[x, y], ...],
///     "fermi_energy": mu,
///     "hoppings": [{"cell": [m1, m2], "matrix": [[[re, im], ...], ...]}, ...],
///     "defaults": {...} }
/// Throws ConfigParse on malformed input.
ModelDescription parse_model_description(const nlohmann::ordered_json& doc);
ModelDescription load_model_description(const std::filesystem::path& path);

/// Builds the model, completing missing T(-gamma) partners.
HoppingModel build_model(const ModelDescription& description);
HoppingModel load_model(const std::filesystem::path& path);

nlohmann::ordered_json model_to_json(const HoppingModel& model);

}  // namespace kubocone
