// Density -> surface resistivity interpolation and the loss matrix
// R_rho = sum_t Rs(rho_t) B_t built from the per-triangle Gram blocks.
#pragma once

#include "charmode/assembly.hpp"
#include "charmode/core.hpp"
#include "charmode/mesh.hpp"

#include <cmath>

namespace charmode::material {

struct MaterialModel {
  double z_air = 1e5;   // Ohm, vacuum bound (rho = 0)
  double z_met = 0.01;  // Ohm, conductor bound (rho = 1)

  void validate() const {
    if (!(z_air > z_met) || !(z_met > 0.0))
      throw ConfigError("material model requires z_air > z_met > 0");
  }
};

// Rs(rho) = Z_air (Z_met / Z_air)^(rho / (2 - rho)), strictly decreasing
// from Z_air at rho = 0 to Z_met at rho = 1.
inline double interpolate_resistivity(const MaterialModel& model, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw ConfigError("density must lie in [0, 1]");
  return model.z_air *
         std::pow(model.z_met / model.z_air, rho / (2.0 - rho));
}

// dRs/drho = Rs(rho) ln(Z_met / Z_air) 2 / (2 - rho)^2 < 0.
inline double resistivity_derivative(const MaterialModel& model, double rho) {
  const double rs = interpolate_resistivity(model, rho);
  return rs * std::log(model.z_met / model.z_air) * 2.0 /
         ((2.0 - rho) * (2.0 - rho));
}

inline Mat assemble_material_matrix(const Vec& rho_tilde,
                                    const em::MaterialElements& elems,
                                    const MaterialModel& model, int n_basis) {
  if (rho_tilde.size() != static_cast<Eigen::Index>(elems.size()))
    throw ConfigError("density vector length does not match triangle count");
  Mat r = Mat::Zero(n_basis, n_basis);
  for (std::size_t t = 0; t < elems.size(); ++t) {
    const double rs = interpolate_resistivity(model, rho_tilde[t]);
    const auto& tb = elems[t];
    for (int a = 0; a < tb.count; ++a)
      for (int b = 0; b < tb.count; ++b)
        if (tb.basis[a] >= 0 && tb.basis[b] >= 0)
          r(tb.basis[a], tb.basis[b]) += rs * tb.block(a, b);
  }
  return r;
}

// dR_rho / drho_t: the (<= 3x3) block dRs/drho(rho_t) B_t. Only design
// triangles carry a gradient.
struct MaterialDerivative {
  std::array<int, 3> basis{-1, -1, -1};
  Eigen::Matrix3d block = Eigen::Matrix3d::Zero();
  int count = 0;
};

inline MaterialDerivative material_matrix_derivative(
    const Vec& rho_tilde, const em::MaterialElements& elems,
    const mesh::Mesh& m, int t, const MaterialModel& model) {
  if (t < 0 || t >= static_cast<int>(elems.size()))
    throw ConfigError("triangle index out of range");
  if (m.region[t] != mesh::Region::design)
    throw ConfigError("triangle " + std::to_string(t) +
                      " is outside the design region");
  MaterialDerivative d;
  d.basis = elems[t].basis;
  d.count = elems[t].count;
  d.block = resistivity_derivative(model, rho_tilde[t]) * elems[t].block;
  return d;
}

}  // namespace charmode::material
