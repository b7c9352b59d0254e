#include "tmseeg/connectivity.hpp"

#include "tmseeg/error.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>

namespace tmseeg {

std::string to_string(Hemisphere h) { return h == Hemisphere::left ? "left" : "right"; }

void Scout::validate(Index n_sources) const {
  if (members.empty()) throw ConfigError("scout '" + name + "' has no members");
  std::set<Index> unique(members.begin(), members.end());
  if (unique.size() != members.size()) throw ConfigError("scout '" + name + "' has duplicate members");
  if (*unique.begin() < 0 || *unique.rbegin() >= n_sources)
    throw RangeError("scout '" + name + "' member out of range");
}

std::vector<Index> hop_distances(const Adjacency& adjacency, Index origin, Index limit) {
  std::vector<Index> dist(adjacency.size(), -1);
  std::queue<Index> q;
  dist[static_cast<std::size_t>(origin)] = 0;
  q.push(origin);
  while (!q.empty()) {
    const Index v = q.front();
    q.pop();
    const Index d = dist[static_cast<std::size_t>(v)];
    if (limit >= 0 && d >= limit) continue;
    for (Index w : adjacency[static_cast<std::size_t>(v)]) {
      if (dist[static_cast<std::size_t>(w)] < 0) {
        dist[static_cast<std::size_t>(w)] = d + 1;
        q.push(w);
      }
    }
  }
  return dist;
}

VectorXd integrated_activity(const SourceEstimate& est, Index first, Index last) {
  if (last < 0) last = est.n_samples();
  if (first < 0 || last > est.n_samples() || first >= last)
    throw RangeError("integration window lies outside the estimate");
  const MatrixXd mag = est.magnitudes();
  return mag.middleCols(first, last - first).rowwise().sum() / est.sample_rate;
}

std::vector<Scout> auto_place_scouts(const SourceEstimate& est, const SourceSpace& space,
                                     const ScoutPlacement& opts) {
  if (est.n_sources() != space.size()) throw DimensionError("estimate and source space differ in size");
  return auto_place_scouts(integrated_activity(est, opts.first_sample, opts.last_sample), space, opts);
}

std::vector<Scout> auto_place_scouts(const VectorXd& act, const SourceSpace& space, const ScoutPlacement& opts) {
  if (act.size() != space.size()) throw DimensionError("activity map and source space differ in size");
  if (opts.n_per_hemisphere < 1) throw ConfigError("scouts per hemisphere must be >= 1");
  if (!act.allFinite() || act.minCoeff() < 0) throw DomainError("activity map must be finite and nonnegative");
  if (!(act.maxCoeff() > 0)) throw DegenerateError("estimate is zero; cannot place scouts");

  std::vector<Index> maxima;
  for (Index i = 0; i < space.size(); ++i) {
    if (!(act(i) > 0)) continue;
    bool peak = true;
    for (Index w : space.adjacency[static_cast<std::size_t>(i)]) peak = peak && act(i) >= act(w);
    if (peak) maxima.push_back(i);
  }
  std::stable_sort(maxima.begin(), maxima.end(), [&](Index a, Index b) { return act(a) > act(b); });

  std::vector<Scout> out;
  std::vector<std::vector<Index>> center_dist;
  std::vector<bool> claimed(static_cast<std::size_t>(space.size()), false);
  for (Hemisphere h : {Hemisphere::left, Hemisphere::right}) {
    Index placed = 0;
    for (Index c : maxima) {
      if (placed == opts.n_per_hemisphere) break;
      const bool left = space.positions[static_cast<std::size_t>(c)].x() < 0;
      if (left != (h == Hemisphere::left)) continue;
      bool far = true;
      for (const auto& d : center_dist) {
        const Index hops = d[static_cast<std::size_t>(c)];
        far = far && (hops < 0 || hops >= opts.min_separation);
      }
      if (!far || claimed[static_cast<std::size_t>(c)]) continue;
      center_dist.push_back(hop_distances(space.adjacency, c));
      Scout s;
      s.hemisphere = h;
      s.name = std::string(h == Hemisphere::left ? "L" : "R") + std::to_string(placed + 1);
      const auto patch = hop_distances(space.adjacency, c, opts.patch_radius);
      // Earlier (stronger) scouts keep contested patch members.
      s.members.push_back(c);
      claimed[static_cast<std::size_t>(c)] = true;
      for (Index i = 0; i < space.size(); ++i) {
        if (patch[static_cast<std::size_t>(i)] > 0 && !claimed[static_cast<std::size_t>(i)]) {
          s.members.push_back(i);
          claimed[static_cast<std::size_t>(i)] = true;
        }
      }
      out.push_back(std::move(s));
      ++placed;
    }
    if (placed < opts.n_per_hemisphere)
      throw PlacementError("found " + std::to_string(placed) + " separated activity maxima in the " +
                           to_string(h) + " hemisphere, " + std::to_string(opts.n_per_hemisphere) +
                           " requested");
  }
  return out;
}

std::vector<Scout> single_source_scouts(const SourceSpace& space, const std::vector<Index>& sources) {
  std::vector<Scout> out;
  for (Index s : sources) {
    if (s < 0 || s >= space.size()) throw RangeError("source index out of range");
    Scout sc;
    sc.name = "S" + std::to_string(s);
    sc.members = {s};
    sc.hemisphere = space.positions[static_cast<std::size_t>(s)].x() < 0 ? Hemisphere::left : Hemisphere::right;
    out.push_back(std::move(sc));
  }
  return out;
}

RowVectorXd scout_series(const SourceEstimate& est, const std::vector<Index>& members,
                         double* captured_variance) {
  const Index per = est.columns_per_source;
  MatrixXd x(static_cast<Index>(members.size()) * per, est.n_samples());
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i] < 0 || members[i] >= est.n_sources()) throw RangeError("scout member out of range");
    x.middleRows(static_cast<Index>(i) * per, per) = est.values.middleRows(members[i] * per, per);
  }
  if (x.cwiseAbs().maxCoeff() == 0) throw DegenerateError("scout submatrix is all zero");

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(x * x.transpose());
  const Index top = x.rows() - 1;  // eigenvalues ascending
  const VectorXd u = es.eigenvectors().col(top);
  RowVectorXd series = u.transpose() * x;
  if (captured_variance) {
    const double total = es.eigenvalues().cwiseMax(0.0).sum();
    *captured_variance = total > 0 ? std::max(es.eigenvalues()(top), 0.0) / total : 0.0;
  }
  const RowVectorXd mean = x.colwise().mean();
  const double cov = (series.array() - series.mean()).matrix().dot((mean.array() - mean.mean()).matrix());
  const double tie = u.sum();
  if (cov < 0 || (cov == 0 && tie < 0)) series = -series;
  return series;
}

void extract_scout_series(const SourceEstimate& est, Scout& scout) {
  scout.validate(est.n_sources());
  scout.series = scout_series(est, scout.members, &scout.captured_variance);
}

double correlation_at_lag(ConstRefVec x, ConstRefVec y, Index lag) {
  const Index n = x.size();
  const Index len = n - std::abs(lag);
  if (len < 2) throw RangeError("lag leaves fewer than two overlapping samples");
  const auto xs = lag >= 0 ? x.segment(lag, len) : x.segment(0, len);
  const auto ys = lag >= 0 ? y.segment(0, len) : y.segment(-lag, len);
  const Eigen::ArrayXd xc = xs.array() - xs.mean();
  const Eigen::ArrayXd yc = ys.array() - ys.mean();
  const double sxx = xc.square().sum(), syy = yc.square().sum();
  if (!(sxx > 0) || !(syy > 0)) throw DomainError("correlation undefined: zero-variance series");
  return std::clamp((xc * yc).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

CrossCorrelation cross_correlation(ConstRefVec x, ConstRefVec y, double sample_rate, double max_lag_s) {
  if (x.size() != y.size()) throw DimensionError("cross_correlation needs equal-length series");
  if (!(max_lag_s >= 0)) throw ConfigError("max_lag_s must be nonnegative");
  const auto max_lag = static_cast<Index>(std::llround(max_lag_s * sample_rate));
  if (x.size() < std::max<Index>(2, 2 * max_lag))
    throw RangeError("series shorter than twice the maximum lag");
  const double sx = (x.array() - x.mean()).square().sum(), sy = (y.array() - y.mean()).square().sum();
  if (!(sx > 0) || !(sy > 0)) throw DomainError("correlation undefined: zero-variance series");

  CrossCorrelation best;
  best.value = -1.0;
  // Zero lag first, then +-1, +-2, ...: ties keep the smallest |lag|, positive first.
  for (Index step = 0; step <= max_lag; ++step) {
    for (Index lag : {step, -step}) {
      if (step == 0 && lag < 0) continue;
      const double r = correlation_at_lag(x, y, lag);
      if (std::abs(r) > best.value + 1e-12) {
        best.value = std::abs(r);
        best.signed_value = r;
        best.lag = lag;
      }
    }
  }
  return best;
}

void ConnectivityGraph::validate() const {
  const Index v = n_vertices();
  if (correlation.rows() != v || correlation.cols() != v) throw DimensionError("correlation matrix size");
  if (n_edges() > v * (v - 1) / 2) throw TopologyError("more edges than vertex pairs");
  for (const Edge& e : edges) {
    if (e.a == e.b) throw TopologyError("self-loop in connectivity graph");
    if (e.a < 0 || e.b >= v || e.a > e.b) throw TopologyError("edge endpoints out of order or range");
  }
  if (v >= 1 && subgraph_count < 1) throw TopologyError("subgraph count must be >= 1");
}

std::vector<Scout> slice_scouts(const std::vector<Scout>& scouts, Index first, Index last) {
  std::vector<Scout> out = scouts;
  for (auto& s : out) {
    if (first < 0 || last > s.series.size() || first >= last)
      throw RangeError("slice window lies outside scout '" + s.name + "' series");
    s.series = RowVectorXd(s.series.segment(first, last - first));
  }
  return out;
}

ConnectivityGraph graph_from_correlation(const MatrixXd& correlation, std::vector<std::string> names,
                                         double threshold) {
  if (!(threshold >= 0)) throw ConfigError("threshold must be nonnegative");
  const Index v = correlation.rows();
  ConnectivityGraph g;
  g.names = std::move(names);
  g.correlation = correlation;
  g.threshold = threshold;
  Adjacency adj(static_cast<std::size_t>(v));
  for (Index a = 0; a < v; ++a) {
    for (Index b = a + 1; b < v; ++b) {
      if (correlation(a, b) >= threshold) {
        g.edges.push_back({a, b, correlation(a, b)});
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
      }
    }
  }
  connected_components(adj, &g.subgraph_count);
  g.validate();
  return g;
}

ConnectivityGraph build_graph(const std::vector<Scout>& scouts, double threshold, double sample_rate,
                              double max_lag_s) {
  if (scouts.size() < 2) throw ConfigError("build_graph needs at least two scouts");
  const auto v = static_cast<Index>(scouts.size());
  MatrixXd corr = MatrixXd::Identity(v, v);
  std::vector<std::string> names;
  for (const auto& s : scouts) {
    if (s.series.size() == 0) throw ConfigError("scout '" + s.name + "' has no extracted series");
    names.push_back(s.name);
  }
  for (Index a = 0; a < v; ++a) {
    for (Index b = a + 1; b < v; ++b) {
      const auto& sa = scouts[static_cast<std::size_t>(a)].series;
      const auto& sb = scouts[static_cast<std::size_t>(b)].series;
      corr(a, b) = corr(b, a) =
          cross_correlation(sa.transpose(), sb.transpose(), sample_rate, max_lag_s).value;
    }
  }
  return graph_from_correlation(corr, std::move(names), threshold);
}

KanskyIndices kansky_indices(Index e, Index v, Index p) {
  if (v < 3) throw DomainError("alpha index needs at least 3 vertices (v = " + std::to_string(v) + ")");
  if (e < 0 || p < 1) throw DomainError("edge count must be >= 0 and subgraph count >= 1");
  const auto ed = static_cast<double>(e), vd = static_cast<double>(v), pd = static_cast<double>(p);
  KanskyIndices k;
  k.beta = ed / vd;
  k.gamma = 2.0 * ed / (vd * (vd - 1.0));
  k.alpha = 2.0 * (ed - vd + pd) / ((vd - 1.0) * (vd - 2.0));
  return k;
}

KanskyIndices kansky_indices(const ConnectivityGraph& g) {
  return kansky_indices(g.n_edges(), g.n_vertices(), g.subgraph_count);
}

std::string graph_to_json(const ConnectivityGraph& g, const std::string& config_hash) {
  nlohmann::ordered_json j;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  j["threshold"] = g.threshold;
  j["vertices"] = g.names;
  j["edges"] = nlohmann::ordered_json::array();
  for (const Edge& e : g.edges)
    j["edges"].push_back({{"a", e.a}, {"b", e.b}, {"weight", e.weight}});
  j["subgraphs"] = g.subgraph_count;
  if (g.n_vertices() >= 3) {
    const KanskyIndices k = kansky_indices(g);
    j["kansky"] = {{"e", g.n_edges()}, {"v", g.n_vertices()}, {"p", g.subgraph_count},
                   {"beta", k.beta}, {"gamma", k.gamma}, {"alpha", k.alpha}};
  }
  return j.dump(2) + "\n";
}

std::string adjacency_csv(const ConnectivityGraph& g) {
  std::ostringstream os;
  os << "vertex";
  for (const auto& n : g.names) os << ',' << n;
  os << '\n';
  char buf[40];
  for (Index a = 0; a < g.n_vertices(); ++a) {
    os << g.names[static_cast<std::size_t>(a)];
    for (Index b = 0; b < g.n_vertices(); ++b) {
      double w = 0.0;
      for (const Edge& e : g.edges)
        if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) w = e.weight;
      std::snprintf(buf, sizeof buf, "%.17g", w);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::string chord_diagram_svg(const ConnectivityGraph& g, const std::string& title) {
  const double size = 480, c = size / 2, radius = 180;
  const Index v = g.n_vertices();
  auto angle = [&](Index i) { return -std::numbers::pi / 2 + 2 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(std::max<Index>(v, 1)); };
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                size, size, size, size);
  os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    os << "<text x=\"" << c << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
       << title << "</text>\n";
  std::vector<Edge> edges = g.edges;
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.weight < b.weight; });
  const double lo = std::min(g.threshold, 1.0);
  for (const Edge& e : edges) {
    const double t = lo < 1.0 ? std::clamp((e.weight - lo) / (1.0 - lo), 0.0, 1.0) : 1.0;
    const int red = static_cast<int>(std::lround(255 * t)), blue = 255 - red;
    const double x1 = c + radius * std::cos(angle(e.a)), y1 = c + radius * std::sin(angle(e.a));
    const double x2 = c + radius * std::cos(angle(e.b)), y2 = c + radius * std::sin(angle(e.b));
    std::snprintf(buf, sizeof buf,
                  "<path d=\"M %.2f %.2f Q %.2f %.2f %.2f %.2f\" fill=\"none\" stroke=\"rgb(%d,0,%d)\" "
                  "stroke-width=\"%.2f\" stroke-opacity=\"0.8\"/>\n",
                  x1, y1, c, c, x2, y2, red, blue, 1.0 + 3.0 * t);
    os << buf;
  }
  for (Index i = 0; i < v; ++i) {
    const double x = c + radius * std::cos(angle(i)), y = c + radius * std::sin(angle(i));
    const double lx = c + (radius + 22) * std::cos(angle(i)), ly = c + (radius + 22) * std::sin(angle(i));
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"6\" fill=\"#444\"/>\n", x, y);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\" dominant-baseline=\"middle\" "
                  "font-family=\"sans-serif\" font-size=\"11\">%s</text>\n",
                  lx, ly, g.names[static_cast<std::size_t>(i)].c_str());
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace tmseeg
