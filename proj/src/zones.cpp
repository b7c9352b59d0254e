#include "tmseeg/zones.hpp"

#include "tmseeg/connectivity.hpp"
#include "tmseeg/error.hpp"
#include "tmseeg/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace tmseeg {

namespace {

// 53-bit uniform in [0, 1), identical on every standard library.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

KMeansResult kmeans(const MatrixXd& points, Index k, std::uint64_t seed, int max_iter) {
  const Index n = points.rows();
  if (k < 1 || k > n) throw ConfigError("k must lie in [1, n_points]");
  if (!points.allFinite()) throw DomainError("k-means features must be finite");
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");

  auto rng = make_stream(seed, 0, 0x6b6d);
  MatrixXd centroids(k, points.cols());
  centroids.row(0) = points.row(static_cast<Index>(rng() % static_cast<std::uint64_t>(n)));
  VectorXd d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0) {
      double target = unit_uniform(rng) * total, acc = 0.0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (d2(i) > 0 && acc > target) { pick = i; break; }
      }
    }
    centroids.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  KMeansResult res;
  res.labels.assign(static_cast<std::size_t>(n), -1);
  VectorXd dist(n);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        const double d = (points.row(i) - centroids.row(c)).squaredNorm();
        if (d < bd) { bd = d; best = c; }
      }
      dist(i) = bd;
      inertia += bd;
      if (res.labels[static_cast<std::size_t>(i)] != best) changed = true;
      res.labels[static_cast<std::size_t>(i)] = best;
    }
    if (!res.inertia_history.empty()) {
      const double prev = res.inertia_history.back();
      if (inertia > prev + 1e-12 * std::max(prev, 1.0))
        throw SolverError("k-means inertia increased between iterations");
    }
    res.inertia_history.push_back(inertia);
    res.inertia = inertia;
    res.iterations = it + 1;
    if (!changed && it > 0) break;

    MatrixXd sums = MatrixXd::Zero(k, points.cols());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(res.labels[static_cast<std::size_t>(i)]) += points.row(i);
      ++counts[static_cast<std::size_t>(res.labels[static_cast<std::size_t>(i)])];
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      Index far = 0;
      if (dist.maxCoeff(&far) > 0) {
        centroids.row(c) = points.row(far);
        dist(far) = 0.0;
      }
    }
  }
  res.centroids = centroids;
  return res;
}

Index ZoneSegmentation::active_count() const {
  return static_cast<Index>(std::count(active.begin(), active.end(), true));
}

ZoneSegmentation detect_active_zones(const SourceEstimate& est, double start_s, double end_s, Index k,
                                     std::uint64_t seed) {
  if (!(start_s < end_s)) throw ConfigError("zone window must satisfy start < end");
  const Index first = est.t0_index + static_cast<Index>(std::llround(start_s * est.sample_rate));
  const Index last = est.t0_index + static_cast<Index>(std::llround(end_s * est.sample_rate)) + 1;
  if (first < 0 || last > est.n_samples())
    throw RangeError("zone window lies outside the estimate");
  ZoneSegmentation z;
  z.features = integrated_activity(est, first, last);
  const double top = z.features.maxCoeff(), bottom = z.features.minCoeff();
  if (!(top > 0)) throw DegenerateError("estimate is zero over the zone window");
  if (!(top - bottom > 1e-12 * top))
    throw DegenerateError("all sources have equal activity; active zones are undefined");

  // Scale to [0, 1] so clustering does not depend on the estimate's units.
  const MatrixXd scaled = z.features / top;
  const KMeansResult km = kmeans(scaled, k, seed);
  const double grand = scaled.mean();
  z.k = k;
  z.labels = km.labels;
  z.centroids = km.centroids.col(0) * top;
  for (Index c = 0; c < k; ++c)
    if (km.centroids(c, 0) > grand) z.active_cluster_ids.push_back(c);
  z.active.resize(z.labels.size());
  for (std::size_t i = 0; i < z.labels.size(); ++i)
    z.active[i] = std::find(z.active_cluster_ids.begin(), z.active_cluster_ids.end(), z.labels[i]) !=
                  z.active_cluster_ids.end();
  z.detection_rate = static_cast<double>(z.active_count()) / static_cast<double>(z.labels.size());
  return z;
}

std::vector<ZoneWindow> default_zone_windows() {
  return {{"before", -0.130, -0.110}, {"after", 0.023, 0.043}};
}

double jaccard(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw DimensionError("active sets differ in length");
  Index inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ZoneComparison compare_methods(const std::map<std::string, SourceEstimate>& estimates,
                               const std::vector<ZoneWindow>& windows, Index k, std::uint64_t seed) {
  if (estimates.empty()) throw ConfigError("compare_methods needs at least one estimate");
  if (windows.empty()) throw ConfigError("compare_methods needs at least one window");
  const SourceEstimate& ref = estimates.begin()->second;
  for (const auto& [name, est] : estimates) {
    if (est.n_sources() != ref.n_sources() || est.n_samples() != ref.n_samples() ||
        est.t0_index != ref.t0_index || est.sample_rate != ref.sample_rate)
      throw DimensionError("estimate '" + name + "' does not share geometry and timing with '" +
                           estimates.begin()->first + "'");
  }
  ZoneComparison cmp;
  cmp.windows = windows;
  for (const auto& [name, est] : estimates) {
    cmp.methods.push_back(name);
    for (const auto& w : windows) {
      ZoneSegmentation z = detect_active_zones(est, w.start_s, w.end_s, k, seed);
      cmp.rows.push_back({name, w.name, z.detection_rate, z.active_count()});
      cmp.segmentations[name][w.name] = std::move(z);
    }
  }
  for (const auto& w : windows) {
    for (std::size_t a = 0; a < cmp.methods.size(); ++a) {
      for (std::size_t b = a + 1; b < cmp.methods.size(); ++b) {
        const auto& ma = cmp.methods[a];
        const auto& mb = cmp.methods[b];
        cmp.overlaps.push_back({w.name, ma, mb,
                                jaccard(cmp.segmentations[ma][w.name].active, cmp.segmentations[mb][w.name].active)});
      }
    }
  }
  return cmp;
}

std::string ZoneComparison::to_csv() const {
  std::ostringstream os;
  char buf[64];
  os << "kind,window,method,other,detection_rate,active_count,jaccard\n";
  for (const Row& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.detection_rate);
    os << "rate," << r.window << ',' << r.method << ",," << buf << ',' << r.active_count << ",\n";
  }
  for (const Overlap& o : overlaps) {
    std::snprintf(buf, sizeof buf, "%.17g", o.jaccard);
    os << "overlap," << o.window << ',' << o.method_a << ',' << o.method_b << ",,," << buf << '\n';
  }
  return os.str();
}

std::string ZoneComparison::to_table() const {
  std::ostringstream os;
  char buf[64];
  std::size_t width = 8;
  for (const auto& m : methods) width = std::max(width, m.size() + 2);
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), "method");
  os << buf;
  for (const auto& w : windows) {
    std::snprintf(buf, sizeof buf, "%12s", w.name.c_str());
    os << buf;
  }
  os << '\n';
  for (const auto& m : methods) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), m.c_str());
    os << buf;
    for (const auto& w : windows) {
      for (const Row& r : rows) {
        if (r.method == m && r.window == w.name) {
          std::snprintf(buf, sizeof buf, "%11.2f%%", 100.0 * r.detection_rate);
          os << buf;
        }
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace tmseeg
