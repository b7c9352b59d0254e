#include "tmseeg/headmodel.hpp"

#include "tmseeg/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <queue>
#include <set>

namespace tmseeg {

std::string to_string(Reference ref) {
  return ref == Reference::average ? "average" : "electrode";
}

std::string to_string(OrientationMode mode) {
  return mode == OrientationMode::fixed ? "fixed" : "free";
}

Reference reference_from_string(const std::string& s) {
  if (s == "average") return Reference::average;
  if (s == "electrode") return Reference::electrode;
  throw ConfigError("unknown reference '" + s + "' (expected average|electrode)");
}

OrientationMode orientation_mode_from_string(const std::string& s) {
  if (s == "fixed") return OrientationMode::fixed;
  if (s == "free") return OrientationMode::free;
  throw ConfigError("unknown orientation mode '" + s + "' (expected fixed|free)");
}

void SensorArray::validate() const {
  if (positions.size() < 2) throw GeometryError("sensor array needs at least 2 sensors");
  if (labels.size() != positions.size())
    throw GeometryError("sensor labels and positions differ in count");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite() || std::abs(positions[i].norm() - 1.0) > 1e-9)
      throw GeometryError("sensor " + labels[i] + " is not on the unit sphere");
  }
  std::set<std::string> seen(labels.begin(), labels.end());
  if (seen.size() != labels.size()) throw GeometryError("sensor labels are not unique");
  if (reference == Reference::electrode &&
      (reference_index < 0 || reference_index >= size()))
    throw GeometryError("reference electrode index out of range");
}

void SourceSpace::validate(double inner_radius) const {
  if (positions.empty()) throw GeometryError("source space is empty");
  if (!orientations.empty() && orientations.size() != positions.size())
    throw GeometryError("orientation count differs from source count");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite() || positions[i].norm() >= inner_radius)
      throw GeometryError("source " + std::to_string(i) +
                          " lies on or outside the innermost shell");
    if (!orientations.empty() && std::abs(orientations[i].norm() - 1.0) > 1e-9)
      throw GeometryError("source " + std::to_string(i) + " orientation is not unit length");
  }
  if (!adjacency.empty()) {
    if (adjacency.size() != positions.size())
      throw GeometryError("adjacency size differs from source count");
    for (std::size_t i = 0; i < adjacency.size(); ++i) {
      for (Index j : adjacency[i]) {
        if (j < 0 || j >= size() || j == static_cast<Index>(i))
          throw GeometryError("adjacency of source " + std::to_string(i) + " is invalid");
        const auto& back = adjacency[static_cast<std::size_t>(j)];
        if (std::find(back.begin(), back.end(), static_cast<Index>(i)) == back.end())
          throw GeometryError("adjacency is not symmetric");
      }
    }
  }
}

void GainMatrix::validate() const {
  sensors.validate();
  if (matrix.rows() != sensors.size())
    throw DimensionError("gain rows differ from sensor count");
  if (matrix.cols() != sources.size() * columns_per_source())
    throw DimensionError("gain columns differ from source count");
  if (!matrix.allFinite()) throw GeometryError("gain matrix has non-finite entries");
  if (sensors.reference == Reference::average) {
    for (Index c = 0; c < matrix.cols(); ++c) {
      const double norm = matrix.col(c).norm();
      if (std::abs(matrix.col(c).sum()) > 1e-9 * std::max(norm, 1e-300) && norm > 0)
        throw GeometryError("average-referenced gain column " + std::to_string(c) +
                            " does not sum to zero");
    }
  }
}

std::vector<Shell> default_shells() {
  return {{0.080, 0.33}, {0.085, 0.0042}, {0.090, 0.33}};
}

SensorArray make_cap_sensors(Index n, Reference reference, double z_min) {
  if (n < 2) throw ConfigError("sensor count must be at least 2");
  SensorArray out;
  out.reference = reference;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (Index i = 0; i < n; ++i) {
    const double z = 1.0 - (1.0 - z_min) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    out.positions.emplace_back(Vector3d(rxy * std::cos(phi), rxy * std::sin(phi), z).normalized());
    char label[32];
    std::snprintf(label, sizeof label, "E%02ld", static_cast<long>(i + 1));
    out.labels.emplace_back(label);
  }
  return out;
}

Adjacency knn_adjacency(const std::vector<Vector3d>& positions, Index k) {
  const auto n = static_cast<Index>(positions.size());
  std::vector<std::set<Index>> sets(positions.size());
  std::vector<std::pair<double, Index>> dist;
  for (Index i = 0; i < n; ++i) {
    dist.clear();
    for (Index j = 0; j < n; ++j) {
      if (j != i) dist.emplace_back((positions[i] - positions[j]).squaredNorm(), j);
    }
    const Index take = std::min<Index>(k, static_cast<Index>(dist.size()));
    std::partial_sort(dist.begin(), dist.begin() + take, dist.end());
    for (Index t = 0; t < take; ++t) {
      sets[i].insert(dist[t].second);
      sets[dist[t].second].insert(i);
    }
  }
  Adjacency adj(positions.size());
  for (std::size_t i = 0; i < sets.size(); ++i) adj[i].assign(sets[i].begin(), sets[i].end());
  return adj;
}

SourceSpace make_spherical_source_space(Index n, double radius, OrientationMode mode,
                                        Index neighbors) {
  if (n < 1) throw ConfigError("source count must be positive");
  SourceSpace out;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (Index i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    const Vector3d dir = Vector3d(rxy * std::cos(phi), rxy * std::sin(phi), z).normalized();
    out.positions.emplace_back(radius * dir);
    if (mode == OrientationMode::fixed) out.orientations.push_back(dir);
  }
  out.adjacency = knn_adjacency(out.positions, neighbors);
  return out;
}

VectorXd shell_series_coefficients(const std::vector<Shell>& shells, int terms) {
  if (shells.empty()) throw ConfigError("head model needs at least one shell");
  for (std::size_t i = 0; i < shells.size(); ++i) {
    if (!(shells[i].conductivity > 0)) throw ConfigError("shell conductivities must be positive");
    if (!(shells[i].radius > 0)) throw ConfigError("shell radii must be positive");
    if (i > 0 && !(shells[i].radius > shells[i - 1].radius))
      throw ConfigError("shell radii must be strictly increasing");
  }
  const auto layers = static_cast<Index>(shells.size());
  const double outer = shells.back().radius;
  const double source_term = 1.0 / (4.0 * std::numbers::pi * shells.front().conductivity);

  VectorXd k = VectorXd::Zero(terms + 1);
  // Layer i carries A_i r^n + B_i r^-(n+1); B_0 is the fixed source term.
  // Unknown layout: A_0, then (A_i, B_i) for i >= 1.
  const Index unknowns = 2 * layers - 1;
  auto a_col = [](Index i) { return i == 0 ? Index{0} : 2 * i - 1; };
  auto b_col = [](Index i) { return 2 * i; };
  for (int n = 1; n <= terms; ++n) {
    const double dn = n;
    MatrixXd sys = MatrixXd::Zero(unknowns, unknowns);
    VectorXd rhs = VectorXd::Zero(unknowns);
    Index row = 0;
    for (Index i = 0; i + 1 < layers; ++i) {
      const double rho = shells[static_cast<std::size_t>(i)].radius / outer;
      const double rn = std::pow(rho, dn);
      const double rm = std::pow(rho, -(dn + 1));
      const double drn = dn * std::pow(rho, dn - 1);
      const double drm = -(dn + 1) * std::pow(rho, -(dn + 2));
      const double s_in = shells[static_cast<std::size_t>(i)].conductivity;
      const double s_out = shells[static_cast<std::size_t>(i + 1)].conductivity;
      // Continuity of potential.
      sys(row, a_col(i)) += rn;
      if (i == 0) rhs(row) -= source_term * rm; else sys(row, b_col(i)) += rm;
      sys(row, a_col(i + 1)) -= rn;
      sys(row, b_col(i + 1)) -= rm;
      ++row;
      // Continuity of normal current.
      sys(row, a_col(i)) += s_in * drn;
      if (i == 0) rhs(row) -= s_in * source_term * drm; else sys(row, b_col(i)) += s_in * drm;
      sys(row, a_col(i + 1)) -= s_out * drn;
      sys(row, b_col(i + 1)) -= s_out * drm;
      ++row;
    }
    // Insulating exterior: zero radial current at the outer surface.
    const Index last = layers - 1;
    sys(row, a_col(last)) = dn;
    if (last == 0) rhs(row) = (dn + 1) * source_term; else sys(row, b_col(last)) = -(dn + 1);

    const VectorXd x = sys.fullPivLu().solve(rhs);
    const double b_outer = last == 0 ? source_term : x(b_col(last));
    k(n) = x(a_col(last)) + b_outer;
  }
  return k;
}

double dipole_potential(const Vector3d& sensor, const Vector3d& position,
                        const Vector3d& moment, const std::vector<Shell>& shells,
                        ConstRefVec coefficients) {
  const double outer = shells.back().radius;
  const Vector3d r0 = position / outer;
  const double b = r0.norm();
  const Vector3d r0_hat = b > 0 ? Vector3d(r0 / b) : Vector3d::UnitZ();
  const double u = std::clamp(sensor.dot(r0_hat), -1.0, 1.0);
  const Vector3d tangential = sensor - u * r0_hat;

  // Legendre P_n(u) and P_n'(u) by upward recurrence.
  double p_prev = 1.0, p = u;
  double dp_prev = 0.0, dp = 1.0;
  double b_pow = 1.0;  // b^(n-1)
  Vector3d grad = Vector3d::Zero();
  const auto terms = coefficients.size() - 1;
  for (Index n = 1; n <= terms; ++n) {
    grad += coefficients(n) * b_pow * (static_cast<double>(n) * p * r0_hat + dp * tangential);
    const double p_next = ((2.0 * n + 1.0) * u * p - n * p_prev) / (n + 1.0);
    const double dp_next = dp_prev + (2.0 * n + 1.0) * p;
    p_prev = p;
    p = p_next;
    dp_prev = dp;
    dp = dp_next;
    b_pow *= b;
  }
  return moment.dot(grad) / (outer * outer);
}

GainMatrix build_spherical_leadfield(const SensorArray& sensors, const SourceSpace& sources,
                                     const std::vector<Shell>& shells, int series_terms) {
  if (series_terms < 20) throw ConfigError("series_terms must be at least 20");
  sensors.validate();
  const VectorXd coeffs = shell_series_coefficients(shells, series_terms);
  sources.validate(shells.front().radius);

  GainMatrix g;
  g.orientation_mode = sources.mode();
  g.sensors = sensors;
  g.sources = sources;
  g.shells = shells;
  g.series_terms = series_terms;
  const Index per = g.columns_per_source();
  g.matrix.resize(sensors.size(), sources.size() * per);

  for (Index p = 0; p < sources.size(); ++p) {
    for (Index c = 0; c < per; ++c) {
      const Vector3d moment = per == 1 ? sources.orientations[static_cast<std::size_t>(p)]
                                       : Vector3d(Vector3d::Unit(c));
      for (Index s = 0; s < sensors.size(); ++s) {
        g.matrix(s, p * per + c) =
            dipole_potential(sensors.positions[static_cast<std::size_t>(s)],
                             sources.positions[static_cast<std::size_t>(p)], moment, shells,
                             coeffs);
      }
    }
  }

  if (sensors.reference == Reference::average) {
    g.matrix.rowwise() -= g.matrix.colwise().mean();
  } else {
    const RowVectorXd ref = g.matrix.row(sensors.reference_index);
    g.matrix.rowwise() -= ref;
  }
  return g;
}

VectorXd depth_weights(const GainMatrix& gain, double gamma_depth) {
  if (gamma_depth < 0) throw ConfigError("gamma_depth must be nonnegative");
  VectorXd f(gain.n_sources());
  for (Index p = 0; p < gain.n_sources(); ++p) {
    const double energy = gain.source_block(p).squaredNorm();
    if (gamma_depth == 0) {
      f(p) = 1.0;
    } else if (energy == 0) {
      throw NormalizationError("source " + std::to_string(p) +
                               " has zero lead field; depth weight undefined");
    } else {
      f(p) = std::pow(energy, -gamma_depth);
    }
  }
  return f;
}

std::vector<Index> connected_components(const Adjacency& adjacency, Index* count) {
  std::vector<Index> label(adjacency.size(), -1);
  Index next = 0;
  for (std::size_t start = 0; start < adjacency.size(); ++start) {
    if (label[start] >= 0) continue;
    std::queue<Index> q;
    q.push(static_cast<Index>(start));
    label[start] = next;
    while (!q.empty()) {
      const Index v = q.front();
      q.pop();
      for (Index w : adjacency[static_cast<std::size_t>(v)]) {
        if (label[static_cast<std::size_t>(w)] < 0) {
          label[static_cast<std::size_t>(w)] = next;
          q.push(w);
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return label;
}

}  // namespace tmseeg
