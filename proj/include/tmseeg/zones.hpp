#pragma once

#include "tmseeg/inverse.hpp"
#include "tmseeg/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tmseeg {

struct KMeansResult {
  std::vector<Index> labels;
  MatrixXd centroids;             // k x d
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_history;
};

/// Lloyd iterations from k-means++ seeding. Rows of `points` are samples.
/// Empty clusters are re-seeded from the point farthest from its centroid.
KMeansResult kmeans(const MatrixXd& points, Index k, std::uint64_t seed, int max_iter = 100);

struct ZoneSegmentation {
  std::vector<Index> labels;
  Index k = 0;
  VectorXd centroids;               // in units of the feature
  std::vector<Index> active_cluster_ids;
  std::vector<bool> active;         // per source
  VectorXd features;                // integrated |activity|
  double detection_rate = 0.0;

  Index active_count() const;
};

/// Clusters per-source integrated |activity| over [start_s, end_s] (relative
/// to t0); clusters whose centroid exceeds the grand mean are active.
ZoneSegmentation detect_active_zones(const SourceEstimate& est, double start_s, double end_s,
                                     Index k = 3, std::uint64_t seed = 0);

struct ZoneWindow {
  std::string name;
  double start_s = 0.0;
  double end_s = 0.0;
};

/// Capture instants -120 ms and +33 ms, each +-10 ms.
std::vector<ZoneWindow> default_zone_windows();

double jaccard(const std::vector<bool>& a, const std::vector<bool>& b);

struct ZoneComparison {
  struct Row {
    std::string method;
    std::string window;
    double detection_rate = 0.0;
    Index active_count = 0;
  };
  struct Overlap {
    std::string window;
    std::string method_a, method_b;
    double jaccard = 0.0;
  };
  std::vector<std::string> methods;
  std::vector<ZoneWindow> windows;
  std::vector<Row> rows;
  std::vector<Overlap> overlaps;
  std::map<std::string, std::map<std::string, ZoneSegmentation>> segmentations;  // method -> window

  std::string to_csv() const;
  /// Methods as rows, windows as percentage columns.
  std::string to_table() const;
};

ZoneComparison compare_methods(const std::map<std::string, SourceEstimate>& estimates,
                               const std::vector<ZoneWindow>& windows, Index k = 3,
                               std::uint64_t seed = 0);

}  // namespace tmseeg
