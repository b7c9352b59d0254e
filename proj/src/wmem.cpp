#include "tmseeg/wmem.hpp"

#include "tmseeg/error.hpp"
#include "tmseeg/log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <set>

namespace tmseeg {

// ---------------------------------------------------------------------------
// Parcellation

void Parcellation::validate(const SourceSpace& space) const {
  const Index n = space.size();
  if (static_cast<Index>(assignment.size()) != n)
    throw TopologyError("parcellation does not cover the source space");
  if (members.empty() || size() > n) throw TopologyError("parcel count must lie in [1, n_sources]");
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  for (Index k = 0; k < size(); ++k) {
    const auto& m = members[static_cast<std::size_t>(k)];
    if (m.empty()) throw TopologyError("parcel " + std::to_string(k) + " is empty");
    for (Index s : m) {
      if (s < 0 || s >= n || assignment[static_cast<std::size_t>(s)] != k)
        throw TopologyError("parcel " + std::to_string(k) + " membership is inconsistent");
      ++seen[static_cast<std::size_t>(s)];
    }
    // Connectivity within the parcel.
    std::set<Index> inside(m.begin(), m.end()), reached{m.front()};
    std::queue<Index> q;
    q.push(m.front());
    while (!q.empty()) {
      const Index v = q.front();
      q.pop();
      for (Index w : space.adjacency[static_cast<std::size_t>(v)]) {
        if (inside.count(w) && reached.insert(w).second) q.push(w);
      }
    }
    if (reached.size() != inside.size())
      throw TopologyError("parcel " + std::to_string(k) + " is not connected");
  }
  if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; }))
    throw TopologyError("every source must belong to exactly one parcel");
}

Parcellation parcellate(const SourceSpace& space, Index n_parcels, std::uint64_t seed) {
  const Index n = space.size();
  if (n_parcels < 1 || n_parcels > n)
    throw ConfigError("parcel count must lie in [1, " + std::to_string(n) + "]");
  if (static_cast<Index>(space.adjacency.size()) != n)
    throw TopologyError("source space has no adjacency graph");
  Index components = 0;
  connected_components(space.adjacency, &components);
  if (components != 1)
    throw TopologyError("source adjacency graph has " + std::to_string(components) +
                        " components; parcellation needs a connected graph");

  std::vector<Index> seeds;
  {
    auto rng = make_stream(seed, 0, 0x9a7c);
    seeds.push_back(static_cast<Index>(rng() % static_cast<std::uint64_t>(n)));
    VectorXd dist = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    while (static_cast<Index>(seeds.size()) < n_parcels) {
      const Vector3d& last = space.positions[static_cast<std::size_t>(seeds.back())];
      for (Index i = 0; i < n; ++i)
        dist(i) = std::min(dist(i), (space.positions[static_cast<std::size_t>(i)] - last).squaredNorm());
      Index best = 0;
      dist.maxCoeff(&best);  // first maximum: lowest index wins ties
      seeds.push_back(best);
    }
  }

  Parcellation out;
  out.assignment.assign(static_cast<std::size_t>(n), -1);
  out.members.resize(static_cast<std::size_t>(n_parcels));
  using Candidate = std::pair<double, Index>;
  std::vector<std::set<Candidate>> frontier(static_cast<std::size_t>(n_parcels));
  auto claim = [&](Index k, Index s) {
    out.assignment[static_cast<std::size_t>(s)] = k;
    out.members[static_cast<std::size_t>(k)].push_back(s);
    const Vector3d& origin = space.positions[static_cast<std::size_t>(seeds[static_cast<std::size_t>(k)])];
    for (Index w : space.adjacency[static_cast<std::size_t>(s)]) {
      if (out.assignment[static_cast<std::size_t>(w)] < 0)
        frontier[static_cast<std::size_t>(k)].insert(
            {(space.positions[static_cast<std::size_t>(w)] - origin).squaredNorm(), w});
    }
  };
  for (Index k = 0; k < n_parcels; ++k) claim(k, seeds[static_cast<std::size_t>(k)]);

  Index assigned = n_parcels;
  while (assigned < n) {
    Index grow = -1;
    for (Index k = 0; k < n_parcels; ++k) {
      auto& f = frontier[static_cast<std::size_t>(k)];
      while (!f.empty() && out.assignment[static_cast<std::size_t>(f.begin()->second)] >= 0) f.erase(f.begin());
      if (f.empty()) continue;
      if (grow < 0 || out.members[static_cast<std::size_t>(k)].size() <
                          out.members[static_cast<std::size_t>(grow)].size())
        grow = k;
    }
    if (grow < 0) throw TopologyError("region growing stalled; adjacency graph is disconnected");
    auto& f = frontier[static_cast<std::size_t>(grow)];
    const Index s = f.begin()->second;
    f.erase(f.begin());
    claim(grow, s);
    ++assigned;
  }
  for (auto& m : out.members) std::sort(m.begin(), m.end());
  return out;
}

// ---------------------------------------------------------------------------
// Reference law

std::vector<Index> MemReferenceLaw::columns(Index k) const {
  std::vector<Index> cols;
  for (Index s : parcels.members[static_cast<std::size_t>(k)])
    for (Index c = 0; c < columns_per_source; ++c) cols.push_back(s * columns_per_source + c);
  return cols;
}

void MemReferenceLaw::validate() const {
  const Index k = parcels.size();
  if (alpha.size() != k || sigma2.size() != k) throw DimensionError("reference law sizes differ from parcel count");
  for (Index i = 0; i < k; ++i) {
    if (!(alpha(i) > 0 && alpha(i) < 1)) throw ConfigError("reference activation probability must lie in (0, 1)");
    if (!(sigma2(i) > 0) || !std::isfinite(sigma2(i)))
      throw ConfigError("reference covariance must be positive definite");
  }
  if (!mean.empty()) {
    if (static_cast<Index>(mean.size()) != k) throw DimensionError("reference mean count differs from parcel count");
    for (Index i = 0; i < k; ++i) {
      if (mean[static_cast<std::size_t>(i)].size() !=
          static_cast<Index>(parcels.members[static_cast<std::size_t>(i)].size()) * columns_per_source)
        throw DimensionError("reference mean of parcel " + std::to_string(i) + " has the wrong size");
    }
  }
}

MemReferenceLaw MemReferenceLaw::uniform(const Parcellation& parcels, Index columns_per_source,
                                         double alpha, double sigma2) {
  MemReferenceLaw law;
  law.parcels = parcels;
  law.columns_per_source = columns_per_source;
  law.alpha = VectorXd::Constant(parcels.size(), alpha);
  law.sigma2 = VectorXd::Constant(parcels.size(), sigma2);
  law.validate();
  return law;
}

MemReferenceLaw energy_scaled_law(const MatrixXd& gain, const Parcellation& parcels,
                                  Index columns_per_source, ConstRefVec data, double noise_var,
                                  double alpha) {
  MemReferenceLaw law = MemReferenceLaw::uniform(parcels, columns_per_source, alpha, 1.0);
  const double energy = data.squaredNorm();
  const double floor_energy = static_cast<double>(data.size()) * noise_var;
  const double excess = std::max(energy - floor_energy, 0.1 * std::max(energy, floor_energy));
  double expected = 0.0;
  for (Index k = 0; k < parcels.size(); ++k) {
    double g2 = 0.0;
    for (Index c : law.columns(k)) g2 += gain.col(c).squaredNorm();
    if (!(g2 > 0)) throw DegenerateError("parcel " + std::to_string(k) + " has a zero lead field");
    expected += alpha * g2;
  }
  law.sigma2.setConstant(excess / expected);
  law.validate();
  return law;
}

// ---------------------------------------------------------------------------
// Dual

MemDual::MemDual(const MatrixXd& gain, const MemReferenceLaw& law, ConstRefVec data, double noise_var)
    : gain_(gain), law_(law), data_(data), noise_var_(noise_var) {
  if (!(noise_var > 0)) throw ConfigError("noise variance must be positive");
  if (gain.rows() != data.size()) throw DimensionError("data length differs from gain rows");
  if (gain.cols() != law.n_columns()) throw DimensionError("reference law does not match gain columns");
  for (Index k = 0; k < law.parcels.size(); ++k) cols_.push_back(law.columns(k));
}

MemDual::ParcelTerms MemDual::parcel_terms(Index k, ConstRefVec u) const {
  const auto& cols = cols_[static_cast<std::size_t>(k)];
  const double s2 = law_.sigma2(k);
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const double ui = u(cols[i]);
    quad += ui * ui;
    if (!law_.mean.empty()) lin += ui * law_.mean[static_cast<std::size_t>(k)](static_cast<Index>(i));
  }
  const double tilt = lin + 0.5 * s2 * quad;
  const double a = law_.alpha(k);
  const double log_in = std::log1p(-a), log_act = std::log(a) + tilt;
  const double hi = std::max(log_in, log_act);
  const double logz = hi + std::log(std::exp(log_in - hi) + std::exp(log_act - hi));
  if (!std::isfinite(logz)) throw SolverError("log-partition overflow in parcel " + std::to_string(k));
  return {logz, std::exp(log_act - logz), tilt};
}

double MemDual::log_partition(ConstRefVec u) const {
  double f = 0.0;
  for (Index k = 0; k < law_.parcels.size(); ++k) f += parcel_terms(k, u).log_partition;
  return f;
}

VectorXd MemDual::expected_sources(ConstRefVec xi) const {
  const VectorXd u = gain_.transpose() * xi;
  VectorXd w = VectorXd::Zero(u.size());
  for (Index k = 0; k < law_.parcels.size(); ++k) {
    const auto t = parcel_terms(k, u);
    const auto& cols = cols_[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const double mu = law_.mean.empty() ? 0.0 : law_.mean[static_cast<std::size_t>(k)](static_cast<Index>(i));
      w(cols[i]) = t.active_prob * (mu + law_.sigma2(k) * u(cols[i]));
    }
  }
  return w;
}

double MemDual::value(ConstRefVec xi, VectorXd* gradient) const {
  const VectorXd u = gain_.transpose() * xi;
  const double f = log_partition(u) + 0.5 * noise_var_ * xi.squaredNorm() - xi.dot(data_);
  if (gradient) *gradient = gain_ * expected_sources(xi) + noise_var_ * xi - data_;
  return f;
}

MatrixXd MemDual::hessian(ConstRefVec xi) const {
  const VectorXd u = gain_.transpose() * xi;
  MatrixXd h = noise_var_ * MatrixXd::Identity(gain_.rows(), gain_.rows());
  for (Index k = 0; k < law_.parcels.size(); ++k) {
    const auto t = parcel_terms(k, u);
    const auto& cols = cols_[static_cast<std::size_t>(k)];
    MatrixXd gk(gain_.rows(), static_cast<Index>(cols.size()));
    VectorXd mk(static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) {
      gk.col(static_cast<Index>(i)) = gain_.col(cols[i]);
      const double mu = law_.mean.empty() ? 0.0 : law_.mean[static_cast<std::size_t>(k)](static_cast<Index>(i));
      mk(static_cast<Index>(i)) = mu + law_.sigma2(k) * u(cols[i]);
    }
    h.noalias() += t.active_prob * law_.sigma2(k) * gk * gk.transpose();
    const VectorXd gm = gk * mk;
    h.noalias() += t.active_prob * (1.0 - t.active_prob) * gm * gm.transpose();
  }
  return h;
}

double MemDual::entropy_drop(ConstRefVec xi) const {
  const VectorXd u = gain_.transpose() * xi;
  double kl = 0.0;
  for (Index k = 0; k < law_.parcels.size(); ++k) {
    const auto t = parcel_terms(k, u);
    const double a = law_.alpha(k), p = t.active_prob;
    double bern = 0.0;
    if (p > 0) bern += p * std::log(p / a);
    if (p < 1) bern += (1.0 - p) * (std::log1p(-p) - std::log1p(-a));
    // Tilted Gaussian N(mu + S u, S) against N(mu, S): u^T S u / 2.
    double quad = 0.0;
    for (Index c : cols_[static_cast<std::size_t>(k)]) quad += u(c) * u(c);
    kl += std::max(bern, 0.0) + p * 0.5 * law_.sigma2(k) * quad;
  }
  return kl;
}

// ---------------------------------------------------------------------------

MemSolution mem_solve(ConstRefVec data, const MatrixXd& gain, const MemReferenceLaw& law,
                      double noise_var, int max_iter, double tol) {
  law.validate();
  const MemDual dual(gain, law, data, noise_var);
  const Index n = dual.dimension();

  VectorXd xi = VectorXd::Zero(n), g;
  double f = dual.value(xi, &g);
  auto inverse_hessian = [&](const VectorXd& at) {
    Eigen::LLT<MatrixXd> llt(dual.hessian(at));
    return MatrixXd(llt.solve(MatrixXd::Identity(n, n)));
  };
  MatrixXd h = inverse_hessian(xi);

  MemSolution sol;
  int it = 0;
  for (; it < max_iter && g.norm() > tol; ++it) {
    VectorXd p = -h * g;
    double slope = g.dot(p);
    if (!(slope < 0)) {
      h = inverse_hessian(xi);
      p = -h * g;
      slope = g.dot(p);
    }
    double step = 1.0, f_new = 0.0;
    VectorXd xi_new, g_new;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      xi_new = xi + step * p;
      f_new = dual.value(xi_new, &g_new);
      if (f_new <= f + 1e-4 * step * slope) { accepted = true; break; }
      // At rounding level the Armijo test is noise; accept a step that shrinks the gradient.
      if (f_new <= f + 64 * std::numeric_limits<double>::epsilon() * std::abs(f) &&
          g_new.norm() < g.norm()) { accepted = true; break; }
      step *= 0.5;
    }
    if (!accepted) break;
    const VectorXd s = xi_new - xi, y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const VectorXd hy = h * y;
      const double yhy = y.dot(hy);
      h += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) - (hy * s.transpose() + s * hy.transpose()) / sy;
    }
    xi = xi_new;
    g = g_new;
    f = f_new;
  }
  sol.iterations = it;
  sol.gradient_norm = g.norm();
  if (!(sol.gradient_norm <= tol)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "MEM dual did not converge in %d iterations (gradient norm %.3e)",
                  it, sol.gradient_norm);
    throw SolverError(buf);
  }
  sol.dual_point = xi;
  sol.expected_sources = dual.expected_sources(xi);
  sol.entropy_drop = dual.entropy_drop(xi);
  sol.data_residual = (gain * sol.expected_sources - data).norm();
  return sol;
}

MemSolution mem_solve(ConstRefVec data, const GainMatrix& gain, const MemReferenceLaw& law,
                      double noise_var, int max_iter, double tol) {
  return mem_solve(data, gain.matrix, law, noise_var, max_iter, tol);
}

// ---------------------------------------------------------------------------
// Wavelet-domain localization

std::vector<VectorXd> scale_noise_variances(const WaveletDecomposition& baseline,
                                            Index baseline_length) {
  const int levels = baseline.levels();
  std::vector<VectorXd> out;
  for (int j = 1; j <= levels + 1; ++j) {
    const MatrixXd& coef = j <= levels ? baseline.details[static_cast<std::size_t>(j - 1)]
                                       : baseline.approximation;
    const int shift = std::min(j, levels);
    const Index used = std::clamp<Index>(baseline_length >> shift, 1, coef.cols());
    VectorXd var = coef.leftCols(used).cwiseAbs2().rowwise().mean();
    std::vector<double> sorted(var.data(), var.data() + var.size());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    double median = sorted[sorted.size() / 2];
    if (sorted.size() % 2 == 0) {
      const double lower = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2));
      median = 0.5 * (median + lower);
    }
    const double weight = static_cast<double>(j) / static_cast<double>(levels + 1);
    var = (1.0 - weight) * var.array() + weight * median;
    out.push_back(var);
  }
  return out;
}

SourceEstimate wmem_localize(const Epoch& ep, const GainMatrix& gain, const Parcellation& parcels,
                             const MatrixXd& baseline, const WmemConfig& config,
                             std::vector<BoxDiagnostic>* diagnostics) {
  if (ep.data.rows() != gain.n_sensors() || baseline.rows() != gain.n_sensors())
    throw DimensionError("epoch/baseline channel count differs from gain rows");
  if (!(config.box_selection > 0 && config.box_selection <= 1))
    throw ConfigError("box_selection must lie in (0, 1]");
  parcels.validate(gain.sources);

  const Wavelet wavelet = daubechies(config.wavelet_order);
  const int levels = config.levels;
  const WaveletDecomposition dec = dwt(ep.data, ep.sample_rate, wavelet, levels, config.boundary);
  const WaveletDecomposition base = dwt(baseline, ep.sample_rate, wavelet, levels, config.boundary);
  const auto noise = scale_noise_variances(base, baseline.cols());

  std::vector<int> scales = config.scales;
  if (scales.empty()) for (int j = 1; j <= levels + 1; ++j) scales.push_back(j);
  for (int j : scales)
    if (j < 1 || j > levels + 1) throw ConfigError("wMEM scale " + std::to_string(j) + " is out of range");

  auto coefficients = [&](int j) -> const MatrixXd& {
    return j <= levels ? dec.details[static_cast<std::size_t>(j - 1)] : dec.approximation;
  };

  struct Box { double energy; int scale; Index index; };
  std::vector<Box> boxes;
  double total = 0.0;
  for (int j : scales) {
    const VectorXd e = coefficients(j).cwiseAbs2().colwise().sum().transpose();
    for (Index k = 0; k < e.size(); ++k) {
      boxes.push_back({e(k), j, k});
      total += e(k);
    }
  }
  std::sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
    if (a.energy != b.energy) return a.energy > b.energy;
    if (a.scale != b.scale) return a.scale < b.scale;
    return a.index < b.index;
  });

  WaveletDecomposition src = dec;
  const Index n_cols = gain.matrix.cols();
  for (auto& d : src.details) d.setZero(n_cols, d.cols());
  src.approximation.setZero(n_cols, src.approximation.cols());

  if (total > 0) {
    // Per-scale whitened gain.
    std::vector<VectorXd> inv_sd(static_cast<std::size_t>(levels + 1));
    std::vector<MatrixXd> white_gain(static_cast<std::size_t>(levels + 1));
    double covered = 0.0;
    for (const Box& box : boxes) {
      if (covered >= config.box_selection * total || box.energy <= 0) break;
      covered += box.energy;
      const auto js = static_cast<std::size_t>(box.scale - 1);
      if (white_gain[js].size() == 0) {
        const VectorXd& var = noise[js];
        const double top = var.maxCoeff();
        inv_sd[js] = var.cwiseMax(std::max(top * 1e-12, std::numeric_limits<double>::min()))
                         .cwiseSqrt().cwiseInverse();
        white_gain[js] = inv_sd[js].asDiagonal() * gain.matrix;
      }
      const VectorXd m = inv_sd[js].cwiseProduct(coefficients(box.scale).col(box.index));
      BoxDiagnostic diag{box.scale, box.index, box.energy};
      VectorXd w;
      try {
        const MemReferenceLaw law = energy_scaled_law(white_gain[js], parcels, gain.columns_per_source(),
                                                      m, 1.0, config.alpha);
        const MemSolution sol = mem_solve(m, white_gain[js], law, 1.0, config.max_iter, config.tol);
        w = sol.expected_sources;
        diag.iterations = sol.iterations;
        diag.gradient_norm = sol.gradient_norm;
        diag.entropy_drop = sol.entropy_drop;
        diag.converged = true;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numerical) throw;
        log_warning("wMEM box (scale " + std::to_string(box.scale) + ", index " +
                    std::to_string(box.index) + ") zeroed: " + e.what());
        w = VectorXd::Zero(n_cols);
      }
      if (diagnostics) diagnostics->push_back(diag);
      MatrixXd& target = box.scale <= levels ? src.details[js] : src.approximation;
      target.col(box.index) = w;
    }
  }

  SourceEstimate est;
  est.method = Method::wmem;
  est.sample_rate = ep.sample_rate;
  est.t0_index = ep.t0_index();
  est.columns_per_source = gain.columns_per_source();
  est.values = idwt_matrix(src);
  return est;
}

}  // namespace tmseeg
