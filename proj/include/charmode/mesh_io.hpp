// Mesh file format: a JSON document with `nodes` ([[x,y,z], ...], meters),
// `triangles` ([[i,j,k], ...], 0-based) and `region` (one label per
// triangle). The writer output is deterministic so write -> load -> write
// reproduces the file byte for byte.
#pragma once

#include "charmode/mesh.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace charmode::mesh {

inline std::string to_json_string(const Mesh& m) {
  nlohmann::ordered_json j;
  auto& nodes = j["nodes"] = nlohmann::json::array();
  for (const auto& p : m.nodes) nodes.push_back({p.x(), p.y(), p.z()});
  auto& tris = j["triangles"] = nlohmann::json::array();
  for (const auto& t : m.triangles) tris.push_back({t[0], t[1], t[2]});
  auto& region = j["region"] = nlohmann::json::array();
  for (Region r : m.region) region.push_back(region_name(r));
  return j.dump(1) + "\n";
}

inline Mesh from_json(const nlohmann::json& j) {
  if (!j.contains("nodes") || !j.contains("triangles"))
    throw MeshError("mesh document must contain 'nodes' and 'triangles'");
  std::vector<Vec3> nodes;
  for (const auto& p : j.at("nodes")) {
    if (!p.is_array() || p.size() != 3)
      throw MeshError("node entries must be [x, y, z]");
    nodes.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  }
  std::vector<std::array<int, 3>> tris;
  for (const auto& t : j.at("triangles")) {
    if (!t.is_array() || t.size() != 3)
      throw MeshError("triangle entries must be [i, j, k]");
    tris.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
  }
  std::vector<Region> region;
  if (j.contains("region"))
    for (const auto& r : j.at("region"))
      region.push_back(region_from_name(r.get<std::string>()));
  return finalize_mesh(std::move(nodes), std::move(tris), std::move(region));
}

inline Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw MeshError("mesh file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

inline void save_mesh(const Mesh& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file '" + path + "'");
  out << to_json_string(m);
}

}  // namespace charmode::mesh
