// Density filtering (linear hat weights, area weighted), smooth tanh
// projection with beta continuation, and the chain rule back onto the raw
// design variable. Fixed and passive triangles participate in the filter
// with their constant densities and are clamped after projection.
#pragma once

#include "charmode/core.hpp"
#include "charmode/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

namespace charmode::filters {

struct FilterConfig {
  double rmin = 0.0;  // filter radius, meters
  double eta = 0.5;
  double beta0 = 1.0;
  double beta_mult = 2.0;
  int beta_period = 75;  // iterations between beta updates
  double beta_max = 64.0;

  void validate() const {
    if (!(rmin > 0.0)) throw ConfigError("filter.rmin must be positive");
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("filter.eta must lie in (0,1)");
    if (!(beta0 >= 1.0)) throw ConfigError("filter.beta0 must be >= 1");
    if (!(beta_mult > 1.0)) throw ConfigError("filter.beta_mult must exceed 1");
    if (beta_period < 1) throw ConfigError("filter.beta_period must be >= 1");
    if (!(beta_max >= beta0)) throw ConfigError("filter.beta_max must be >= beta0");
  }
};

// beta = min(beta_max, beta0 * mult^floor(iter / period))
inline double beta_schedule(int iteration, const FilterConfig& cfg) {
  if (iteration < 0) throw ConfigError("iteration must be non-negative");
  const double steps = iteration / cfg.beta_period;
  return std::min(cfg.beta_max, cfg.beta0 * std::pow(cfg.beta_mult, steps));
}

inline double projection(double rho, double beta, double eta) {
  const double denom = std::tanh(beta * eta) + std::tanh(beta * (1.0 - eta));
  return (std::tanh(beta * eta) + std::tanh(beta * (rho - eta))) / denom;
}

inline double projection_derivative(double rho, double beta, double eta) {
  const double denom = std::tanh(beta * eta) + std::tanh(beta * (1.0 - eta));
  const double t = std::tanh(beta * (rho - eta));
  return beta * (1.0 - t * t) / denom;
}

// Linear hat density filter, w_ts = max(0, rmin - |c_t - c_s|), applied as
// the area-weighted row-stochastic average
//   rho'_t = sum_s w_ts A_s rho_s / sum_s w_ts A_s.
class DensityFilter {
 public:
  DensityFilter(const mesh::Mesh& m, double rmin) {
    if (!(rmin > 0.0)) throw ConfigError("filter radius must be positive");
    const int t_count = m.triangle_count();
    rows_.resize(t_count);

    // bucket grid over centroids
    Vec3 lo = m.centroids[0], hi = m.centroids[0];
    for (const auto& c : m.centroids) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
    const double cell = rmin;
    auto key = [&](const Vec3& c) {
      return std::array<int, 3>{static_cast<int>(std::floor((c.x() - lo.x()) / cell)),
                                static_cast<int>(std::floor((c.y() - lo.y()) / cell)),
                                static_cast<int>(std::floor((c.z() - lo.z()) / cell))};
    };
    std::map<std::array<int, 3>, std::vector<int>> grid;
    for (int t = 0; t < t_count; ++t) grid[key(m.centroids[t])].push_back(t);

    for (int t = 0; t < t_count; ++t) {
      const auto kc = key(m.centroids[t]);
      double norm = 0.0;
      auto& row = rows_[t];
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz) {
            const auto it = grid.find({kc[0] + dx, kc[1] + dy, kc[2] + dz});
            if (it == grid.end()) continue;
            for (int s : it->second) {
              const double w =
                  rmin - (m.centroids[t] - m.centroids[s]).norm();
              if (w <= 0.0) continue;
              row.emplace_back(s, w * m.areas[s]);
              norm += w * m.areas[s];
            }
          }
      for (auto& [s, w] : row) w /= norm;
      std::sort(row.begin(), row.end());
    }
  }

  Vec apply(const Vec& rho) const {
    Vec out = Vec::Zero(rows_.size());
    for (std::size_t t = 0; t < rows_.size(); ++t)
      for (const auto& [s, w] : rows_[t]) out[t] += w * rho[s];
    return out;
  }

  // v^T W  (adjoint of apply)
  Vec apply_transpose(const Vec& v) const {
    Vec out = Vec::Zero(rows_.size());
    for (std::size_t t = 0; t < rows_.size(); ++t)
      for (const auto& [s, w] : rows_[t]) out[s] += w * v[t];
    return out;
  }

  const std::vector<std::pair<int, double>>& row(int t) const { return rows_[t]; }

 private:
  std::vector<std::vector<std::pair<int, double>>> rows_;
};

// Snapshot of the three field stages. Produced by FilterPipeline::apply;
// chain_rule rejects snapshots whose provenance does not match.
struct DensityField {
  Vec raw;        // clamped raw densities (constants on fixed/passive)
  Vec filtered;   // after the density filter
  Vec projected;  // after projection and region clamping
  double beta = 1.0;
  std::uint64_t token = 0;
};

class FilterPipeline {
 public:
  FilterPipeline(const mesh::Mesh& m, FilterConfig cfg)
      : mesh_(&m),
        spec_(mesh::RegionSpec::of(m)),
        cfg_(cfg),
        filter_(m, cfg.rmin) {
    cfg_.validate();
  }

  const FilterConfig& config() const { return cfg_; }
  const mesh::RegionSpec& regions() const { return spec_; }
  const DensityFilter& density_filter() const { return filter_; }

  DensityField apply(const Vec& raw, double beta) const {
    if (raw.size() != mesh_->triangle_count())
      throw ConfigError("density vector length does not match the mesh");
    DensityField f;
    f.raw = raw.cwiseMax(0.0).cwiseMin(1.0);
    for (int t : spec_.fixed) f.raw[t] = 1.0;
    for (int t : spec_.passive) f.raw[t] = 0.0;
    f.filtered = filter_.apply(f.raw);
    f.projected.resize(f.filtered.size());
    for (Eigen::Index t = 0; t < f.filtered.size(); ++t)
      f.projected[t] = projection(f.filtered[t], beta, cfg_.eta);
    for (int t : spec_.fixed) f.projected[t] = 1.0;
    for (int t : spec_.passive) f.projected[t] = 0.0;
    f.beta = beta;
    f.token = fingerprint(f.raw, beta);
    return f;
  }

  // dF/draw = W^T (dproj/dfiltered . dF/drho~), restricted to design
  // triangles (clamped regions carry no gradient).
  Vec chain_rule(const DensityField& field, const Vec& grad_projected) const {
    if (field.token != fingerprint(field.raw, field.beta))
      throw ConfigError("stale density-field snapshot passed to chain_rule");
    if (grad_projected.size() != field.raw.size())
      throw ConfigError("gradient length does not match the mesh");
    Vec inner = Vec::Zero(field.raw.size());
    for (int t : spec_.design)
      inner[t] = projection_derivative(field.filtered[t], field.beta, cfg_.eta) *
                 grad_projected[t];
    Vec out = filter_.apply_transpose(inner);
    for (int t : spec_.fixed) out[t] = 0.0;
    for (int t : spec_.passive) out[t] = 0.0;
    return out;
  }

 private:
  std::uint64_t fingerprint(const Vec& raw, double beta) const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t len) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
      }
    };
    mix(raw.data(), sizeof(double) * raw.size());
    mix(&beta, sizeof beta);
    mix(&cfg_.rmin, sizeof cfg_.rmin);
    return h;
  }

  const mesh::Mesh* mesh_;
  mesh::RegionSpec spec_;
  FilterConfig cfg_;
  DensityFilter filter_;
};

}  // namespace charmode::filters
