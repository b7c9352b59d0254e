#pragma once

#include "tmseeg/types.hpp"

#include <string>
#include <vector>

namespace tmseeg {

enum class Reference { average, electrode };
enum class OrientationMode { fixed, free };

std::string to_string(Reference ref);
std::string to_string(OrientationMode mode);
Reference reference_from_string(const std::string& s);
OrientationMode orientation_mode_from_string(const std::string& s);

/// Electrodes on the outer scalp sphere. Positions are unit direction
/// vectors; the physical radius comes from the outermost shell.
struct SensorArray {
  std::vector<Vector3d> positions;
  std::vector<std::string> labels;
  Reference reference = Reference::average;
  Index reference_index = 0;  // used when reference == electrode

  Index size() const { return static_cast<Index>(positions.size()); }
  void validate() const;
};

/// Dipole locations (meters) with either one fixed unit orientation per
/// source or three free Cartesian components.
struct SourceSpace {
  std::vector<Vector3d> positions;
  std::vector<Vector3d> orientations;  // empty in free mode
  Adjacency adjacency;

  Index size() const { return static_cast<Index>(positions.size()); }
  OrientationMode mode() const {
    return orientations.empty() ? OrientationMode::free : OrientationMode::fixed;
  }
  /// Throws GeometryError when a source is at or beyond `inner_radius`.
  void validate(double inner_radius) const;
};

struct Shell {
  double radius;        // m
  double conductivity;  // S/m
};

/// Brain / skull / scalp, 0.08 / 0.085 / 0.09 m, 0.33 / 0.0042 / 0.33 S/m.
std::vector<Shell> default_shells();

inline constexpr int kDefaultSeriesTerms = 60;

struct GainMatrix {
  MatrixXd matrix;  // n_sensors x n_columns, volts per A·m
  OrientationMode orientation_mode = OrientationMode::fixed;
  SensorArray sensors;
  SourceSpace sources;
  std::vector<Shell> shells;
  int series_terms = kDefaultSeriesTerms;

  Index n_sensors() const { return matrix.rows(); }
  Index n_sources() const { return sources.size(); }
  Index columns_per_source() const {
    return orientation_mode == OrientationMode::free ? 3 : 1;
  }
  /// Columns belonging to source `p` (one in fixed mode, three in free mode).
  auto source_block(Index p) const {
    const Index c = columns_per_source();
    return matrix.middleCols(p * c, c);
  }
  void validate() const;
};

/// Fibonacci-spiral cap of `n` electrodes covering z >= z_min on the unit sphere.
SensorArray make_cap_sensors(Index n, Reference reference = Reference::average,
                             double z_min = -0.3);

/// Fibonacci lattice of `n` sources on a sphere of `radius` meters with
/// outward-normal orientations (fixed mode) and a symmetrized
/// k-nearest-neighbor adjacency.
SourceSpace make_spherical_source_space(Index n, double radius = 0.07,
                                        OrientationMode mode = OrientationMode::fixed,
                                        Index neighbors = 6);

/// Symmetrized k-nearest-neighbor graph over `positions`.
Adjacency knn_adjacency(const std::vector<Vector3d>& positions, Index k);

/// Surface-potential Legendre coefficients k_n, n = 0..terms, for a unit
/// point current source in the innermost shell of a unit-radius model. The
/// potential at the outer surface is sum_n k_n b^n P_n(cos theta) / R.
VectorXd shell_series_coefficients(const std::vector<Shell>& shells, int terms);

/// Potential at unit direction `sensor` on the outer surface due to a dipole
/// of moment `moment` (A·m) at `position` (m), before re-referencing.
double dipole_potential(const Vector3d& sensor, const Vector3d& position,
                        const Vector3d& moment, const std::vector<Shell>& shells,
                        ConstRefVec coefficients);

GainMatrix build_spherical_leadfield(const SensorArray& sensors,
                                     const SourceSpace& sources,
                                     const std::vector<Shell>& shells = default_shells(),
                                     int series_terms = kDefaultSeriesTerms);

/// f_p = (sum of squared column norms of source p)^(-gamma_depth).
VectorXd depth_weights(const GainMatrix& gain, double gamma_depth);

/// Breadth-first connected component labels over an adjacency list.
std::vector<Index> connected_components(const Adjacency& adjacency, Index* count = nullptr);

}  // namespace tmseeg
