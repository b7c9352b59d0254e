#pragma once

#include "tmseeg/headmodel.hpp"
#include "tmseeg/inverse.hpp"
#include "tmseeg/types.hpp"

#include <string>
#include <vector>

namespace tmseeg {

enum class Hemisphere { left, right };
std::string to_string(Hemisphere h);

/// Region of interest; `series` is filled by extract_scout_series.
struct Scout {
  std::string name;
  std::vector<Index> members;
  Hemisphere hemisphere = Hemisphere::left;
  RowVectorXd series;
  double captured_variance = 0.0;  // sigma_1^2 / sum sigma^2

  void validate(Index n_sources) const;
};

/// Hop distances from `origin`, -1 beyond `limit` (limit < 0: unbounded).
std::vector<Index> hop_distances(const Adjacency& adjacency, Index origin, Index limit = -1);

/// Time-integrated |activity| per source over samples [first, last).
VectorXd integrated_activity(const SourceEstimate& est, Index first = 0, Index last = -1);

struct ScoutPlacement {
  Index n_per_hemisphere = 5;
  Index patch_radius = 1;     // hops
  Index min_separation = 2;   // hops between scout centers
  Index first_sample = 0;     // integration window
  Index last_sample = -1;
};

/// Greedy choice of local maxima of integrated |activity| in each hemisphere
/// (x < 0 is left). Ties go to the lower source index. Patches are kept
/// disjoint: a member already claimed by a stronger scout is not shared.
std::vector<Scout> auto_place_scouts(const SourceEstimate& est, const SourceSpace& space,
                                     const ScoutPlacement& opts = {});
/// Same selection on a precomputed nonnegative activity map (one value per source).
std::vector<Scout> auto_place_scouts(const VectorXd& activity, const SourceSpace& space,
                                     const ScoutPlacement& opts = {});

/// One single-source scout per listed source (intra-zone graphs).
std::vector<Scout> single_source_scouts(const SourceSpace& space, const std::vector<Index>& sources);

/// First principal time course u1^T X of the members' rows. The sign makes
/// it correlate nonnegatively with the member mean.
void extract_scout_series(const SourceEstimate& est, Scout& scout);
RowVectorXd scout_series(const SourceEstimate& est, const std::vector<Index>& members,
                         double* captured_variance = nullptr);

struct CrossCorrelation {
  double value = 0.0;  // peak |Pearson r|
  Index lag = 0;       // samples; positive when y leads x
  double signed_value = 0.0;
};

/// Pearson correlation of x[t + lag] with y[t] over their overlap.
double correlation_at_lag(ConstRefVec x, ConstRefVec y, Index lag);
CrossCorrelation cross_correlation(ConstRefVec x, ConstRefVec y, double sample_rate,
                                   double max_lag_s = 0.1);

struct Edge {
  Index a = 0, b = 0;
  double weight = 0.0;
};

struct ConnectivityGraph {
  std::vector<std::string> names;
  std::vector<Edge> edges;       // a < b, sorted
  MatrixXd correlation;          // peak |r| for every pair, diagonal 1
  Index subgraph_count = 0;      // p
  double threshold = 0.0;

  Index n_vertices() const { return static_cast<Index>(names.size()); }
  Index n_edges() const { return static_cast<Index>(edges.size()); }
  void validate() const;
};

/// Series restricted to samples [first, last).
std::vector<Scout> slice_scouts(const std::vector<Scout>& scouts, Index first, Index last);

ConnectivityGraph build_graph(const std::vector<Scout>& scouts, double threshold, double sample_rate,
                              double max_lag_s = 0.1);
/// Same edges rule on a precomputed correlation matrix.
ConnectivityGraph graph_from_correlation(const MatrixXd& correlation, std::vector<std::string> names,
                                         double threshold);

struct KanskyIndices {
  double beta = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;
};

KanskyIndices kansky_indices(Index edges, Index vertices, Index subgraphs);
KanskyIndices kansky_indices(const ConnectivityGraph& g);

std::string graph_to_json(const ConnectivityGraph& g, const std::string& config_hash = "");
std::string adjacency_csv(const ConnectivityGraph& g);
/// Circular chord diagram; edge color runs blue (r = threshold) to red (r = 1).
std::string chord_diagram_svg(const ConnectivityGraph& g, const std::string& title = "");

}  // namespace tmseeg
