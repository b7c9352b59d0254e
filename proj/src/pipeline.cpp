#include "tmseeg/pipeline.hpp"

#include "tmseeg/error.hpp"
#include "tmseeg/hash.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

namespace tmseeg {

namespace {

// Schema reader: typed lookups with field-path errors, and a closing check
// that rejects keys nobody asked for.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  void number(const std::string& key, double& out) {
    if (!take(key)) return;
    if (!j_.at(key).is_number()) fail(key, "a number");
    out = j_.at(key).get<double>();
  }
  template <class I>
  void integer(const std::string& key, I& out) {
    if (!take(key)) return;
    if (!j_.at(key).is_number_integer()) fail(key, "an integer");
    out = j_.at(key).get<I>();
  }
  void boolean(const std::string& key, bool& out) {
    if (!take(key)) return;
    if (!j_.at(key).is_boolean()) fail(key, "true or false");
    out = j_.at(key).get<bool>();
  }
  void string(const std::string& key, std::string& out) {
    if (!take(key)) return;
    if (!j_.at(key).is_string()) fail(key, "a string");
    out = j_.at(key).get<std::string>();
  }
  void optional_number(const std::string& key, std::optional<double>& out) {
    if (j_.contains(key)) used_.insert(key);
    if (!has(key)) return;
    double v = 0.0;
    number(key, v);
    out = v;
  }
  const Json* array(const std::string& key) {
    if (!take(key)) return nullptr;
    if (!j_.at(key).is_array()) fail(key, "an array");
    return &j_.at(key);
  }
  Reader child(const std::string& key) {
    used_.insert(key);
    static const Json empty = Json::object();
    return Reader(has(key) ? j_.at(key) : empty, path_ + "." + key);
  }
  std::string path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) throw ConfigError(path_ + "." + key + ": unknown field");
  }

 private:
  bool take(const std::string& key) {
    if (j_.contains(key)) used_.insert(key);
    return has(key);
  }
  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw ConfigError(path_ + "." + key + ": expected " + what);
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class F>
auto with_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ConfigError("config." + path + ": " + message);
}

SourceActivity parse_activity(const Json& j, const std::string& path) {
  Reader r(j, path);
  SourceActivity a;
  r.integer("source", a.source);
  std::string waveform = to_string(a.waveform);
  r.string("waveform", waveform);
  a.waveform = with_path(r.path("waveform"), [&] { return waveform_from_string(waveform); });
  r.number("frequency", a.frequency);
  r.number("amplitude", a.amplitude);
  std::optional<double> onset, offset;
  r.optional_number("onset_s", onset);
  r.optional_number("offset_s", offset);
  a.onset_s = onset;
  a.offset_s = offset;
  r.number("phase", a.phase);
  r.number("bandwidth", a.bandwidth);
  r.integer("group", a.group);
  r.number("coupling_before", a.coupling_before);
  r.number("coupling_after", a.coupling_after);
  if (const Json* o = r.array("orientation")) {
    if (o->size() != 3 || !std::all_of(o->begin(), o->end(), [](const Json& v) { return v.is_number(); }))
      throw ConfigError(r.path("orientation") + ": expected three numbers");
    a.orientation = Vector3d(o->at(0).get<double>(), o->at(1).get<double>(), o->at(2).get<double>());
  }
  r.finish();
  return a;
}

Json activity_json(const SourceActivity& a) {
  Json j = {{"source", a.source}, {"waveform", to_string(a.waveform)}, {"frequency", a.frequency},
            {"amplitude", a.amplitude}};
  j["onset_s"] = a.onset_s ? Json(*a.onset_s) : Json(nullptr);
  j["offset_s"] = a.offset_s ? Json(*a.offset_s) : Json(nullptr);
  j["phase"] = a.phase;
  j["bandwidth"] = a.bandwidth;
  j["group"] = a.group;
  j["coupling_before"] = a.coupling_before;
  j["coupling_after"] = a.coupling_after;
  j["orientation"] = a.orientation ? Json{a.orientation->x(), a.orientation->y(), a.orientation->z()} : Json(nullptr);
  return j;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

PipelineConfig PipelineConfig::from_json(const Json& j) {
  PipelineConfig c;
  Reader root(j, "config");
  root.integer("seed", c.seed);

  {
    Reader r = root.child("geometry");
    auto& g = c.geometry;
    r.integer("n_sensors", g.n_sensors);
    r.integer("n_sources", g.n_sources);
    r.number("source_radius", g.source_radius);
    std::string orientation = to_string(g.orientation), reference = to_string(g.reference);
    r.string("orientation", orientation);
    r.string("reference", reference);
    g.orientation = with_path(r.path("orientation"), [&] { return orientation_mode_from_string(orientation); });
    g.reference = with_path(r.path("reference"), [&] { return reference_from_string(reference); });
    r.integer("reference_index", g.reference_index);
    r.integer("neighbors", g.neighbors);
    r.integer("series_terms", g.series_terms);
    r.number("cap_z_min", g.cap_z_min);
    if (const Json* shells = r.array("shells")) {
      g.shells.clear();
      for (std::size_t i = 0; i < shells->size(); ++i) {
        Reader s(shells->at(i), r.path("shells") + "[" + std::to_string(i) + "]");
        Shell sh{0.0, 0.0};
        s.number("radius", sh.radius);
        s.number("conductivity", sh.conductivity);
        s.finish();
        g.shells.push_back(sh);
      }
    }
    r.finish();
  }
  {
    Reader r = root.child("simulation");
    auto& s = c.simulation;
    r.number("sample_rate", s.sample_rate);
    r.number("duration_s", s.duration_s);
    r.number("pulse_time_s", s.pulse_time_s);
    r.number("noise_std", s.noise_std);
    r.boolean("tms_artifact", s.tms_artifact);
    r.number("artifact_amplitude", s.artifact_amplitude);
    r.string("scenario", s.scenario);
    r.integer("drivers_per_hemisphere", s.drivers_per_hemisphere);
    r.number("driver_frequency", s.driver_frequency);
    r.number("driver_amplitude", s.driver_amplitude);
    r.number("driver_bandwidth", s.driver_bandwidth);
    r.number("driver_onset_s", s.driver_onset_s);
    r.number("coupling_before", s.coupling_before);
    r.number("coupling_after", s.coupling_after);
    if (const Json* acts = r.array("activities")) {
      for (std::size_t i = 0; i < acts->size(); ++i)
        s.activities.push_back(parse_activity(acts->at(i), r.path("activities") + "[" + std::to_string(i) + "]"));
    }
    r.finish();
  }
  {
    Reader r = root.child("preprocess");
    auto& p = c.preprocess;
    r.boolean("interpolate_artifact", p.interpolate_artifact);
    r.number("cut_start_ms", p.cut_start_ms);
    r.number("cut_end_ms", p.cut_end_ms);
    r.number("highpass_hz", p.highpass_hz);
    r.integer("highpass_order", p.highpass_order);
    r.number("notch_hz", p.notch_hz);
    r.number("notch_bandwidth_hz", p.notch_bandwidth_hz);
    r.boolean("zero_phase", p.zero_phase);
    r.number("epoch_pre_s", p.epoch_pre_s);
    r.number("epoch_post_s", p.epoch_post_s);
    r.number("baseline_start_s", p.baseline_start_s);
    r.number("baseline_end_s", p.baseline_end_s);
    r.finish();
  }
  {
    Reader r = root.child("inverse");
    auto& inv = c.inverse;
    if (const Json* methods = r.array("methods")) {
      inv.methods.clear();
      for (std::size_t i = 0; i < methods->size(); ++i) {
        const std::string path = r.path("methods") + "[" + std::to_string(i) + "]";
        if (!methods->at(i).is_string()) throw ConfigError(path + ": expected a string");
        inv.methods.push_back(with_path(path, [&] { return method_from_string(methods->at(i).get<std::string>()); }));
      }
    }
    r.number("snr", inv.snr);
    r.optional_number("lambda", inv.lambda);
    r.number("gamma_depth", inv.gamma_depth);
    r.integer("parcels", inv.parcels);
    Reader w = r.child("wmem");
    w.integer("wavelet_order", inv.wmem.wavelet_order);
    w.integer("levels", inv.wmem.levels);
    std::string boundary = to_string(inv.wmem.boundary);
    w.string("boundary", boundary);
    inv.wmem.boundary = with_path(w.path("boundary"), [&] { return boundary_mode_from_string(boundary); });
    w.number("box_selection", inv.wmem.box_selection);
    w.number("alpha", inv.wmem.alpha);
    w.integer("max_iter", inv.wmem.max_iter);
    w.number("tol", inv.wmem.tol);
    if (const Json* band = w.array("band")) {
      if (band->size() != 2 || !band->at(0).is_number() || !band->at(1).is_number())
        throw ConfigError(w.path("band") + ": expected [f_lo, f_hi]");
      inv.wmem_band = std::make_pair(band->at(0).get<double>(), band->at(1).get<double>());
    }
    w.finish();
    r.finish();
  }
  {
    Reader r = root.child("connectivity");
    auto& k = c.connectivity;
    r.number("threshold", k.threshold);
    r.number("max_lag_s", k.max_lag_s);
    r.integer("scouts_per_hemisphere", k.placement.n_per_hemisphere);
    r.integer("patch_radius", k.placement.patch_radius);
    r.integer("min_separation", k.placement.min_separation);
    r.number("before_start_s", k.before_start_s);
    r.number("before_end_s", k.before_end_s);
    r.number("after_start_s", k.after_start_s);
    r.number("after_end_s", k.after_end_s);
    r.integer("intra_vertices", k.intra_vertices);
    r.finish();
  }
  {
    Reader r = root.child("zones");
    r.integer("k", c.zones.k);
    if (const Json* ws = r.array("windows")) {
      c.zones.windows.clear();
      for (std::size_t i = 0; i < ws->size(); ++i) {
        Reader w(ws->at(i), r.path("windows") + "[" + std::to_string(i) + "]");
        ZoneWindow zw;
        w.string("name", zw.name);
        w.number("start_s", zw.start_s);
        w.number("end_s", zw.end_s);
        w.finish();
        c.zones.windows.push_back(zw);
      }
    }
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  const std::string text = read_text(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return from_json(j);
}

Json PipelineConfig::to_json() const {
  Json j;
  j["seed"] = seed;
  const auto& g = geometry;
  Json shells = Json::array();
  for (const Shell& s : g.shells) shells.push_back({{"radius", s.radius}, {"conductivity", s.conductivity}});
  j["geometry"] = {{"n_sensors", g.n_sensors}, {"n_sources", g.n_sources}, {"source_radius", g.source_radius},
                   {"orientation", to_string(g.orientation)}, {"reference", to_string(g.reference)},
                   {"reference_index", g.reference_index}, {"neighbors", g.neighbors},
                   {"series_terms", g.series_terms}, {"cap_z_min", g.cap_z_min}, {"shells", shells}};
  const auto& s = simulation;
  Json acts = Json::array();
  for (const auto& a : s.activities) acts.push_back(activity_json(a));
  j["simulation"] = {{"sample_rate", s.sample_rate}, {"duration_s", s.duration_s},
                     {"pulse_time_s", s.pulse_time_s}, {"noise_std", s.noise_std},
                     {"tms_artifact", s.tms_artifact}, {"artifact_amplitude", s.artifact_amplitude},
                     {"scenario", s.scenario}, {"drivers_per_hemisphere", s.drivers_per_hemisphere},
                     {"driver_frequency", s.driver_frequency}, {"driver_amplitude", s.driver_amplitude},
                     {"driver_bandwidth", s.driver_bandwidth}, {"driver_onset_s", s.driver_onset_s},
                     {"coupling_before", s.coupling_before}, {"coupling_after", s.coupling_after},
                     {"activities", acts}};
  const auto& p = preprocess;
  j["preprocess"] = {{"interpolate_artifact", p.interpolate_artifact}, {"cut_start_ms", p.cut_start_ms},
                     {"cut_end_ms", p.cut_end_ms}, {"highpass_hz", p.highpass_hz},
                     {"highpass_order", p.highpass_order}, {"notch_hz", p.notch_hz},
                     {"notch_bandwidth_hz", p.notch_bandwidth_hz}, {"zero_phase", p.zero_phase},
                     {"epoch_pre_s", p.epoch_pre_s}, {"epoch_post_s", p.epoch_post_s},
                     {"baseline_start_s", p.baseline_start_s}, {"baseline_end_s", p.baseline_end_s}};
  const auto& inv = inverse;
  std::vector<std::string> methods;
  for (Method m : inv.methods) methods.push_back(to_string(m));
  Json wm = {{"wavelet_order", inv.wmem.wavelet_order}, {"levels", inv.wmem.levels},
             {"boundary", to_string(inv.wmem.boundary)}, {"box_selection", inv.wmem.box_selection},
             {"alpha", inv.wmem.alpha}, {"max_iter", inv.wmem.max_iter}, {"tol", inv.wmem.tol}};
  wm["band"] = inv.wmem_band ? Json{inv.wmem_band->first, inv.wmem_band->second} : Json(nullptr);
  j["inverse"] = {{"methods", methods}, {"snr", inv.snr},
                  {"lambda", inv.lambda ? Json(*inv.lambda) : Json(nullptr)},
                  {"gamma_depth", inv.gamma_depth}, {"parcels", inv.parcels}, {"wmem", wm}};
  const auto& k = connectivity;
  j["connectivity"] = {{"threshold", k.threshold}, {"max_lag_s", k.max_lag_s},
                       {"scouts_per_hemisphere", k.placement.n_per_hemisphere},
                       {"patch_radius", k.placement.patch_radius}, {"min_separation", k.placement.min_separation},
                       {"before_start_s", k.before_start_s}, {"before_end_s", k.before_end_s},
                       {"after_start_s", k.after_start_s}, {"after_end_s", k.after_end_s},
                       {"intra_vertices", k.intra_vertices}};
  Json windows = Json::array();
  for (const auto& w : zones.windows) windows.push_back({{"name", w.name}, {"start_s", w.start_s}, {"end_s", w.end_s}});
  j["zones"] = {{"k", zones.k}, {"windows", windows}};
  return j;
}

std::string PipelineConfig::hash() const { return hash_hex(to_json().dump()); }

void PipelineConfig::validate() const {
  const auto& g = geometry;
  require(g.n_sensors >= 3, "geometry.n_sensors", "must be >= 3");
  require(g.n_sources >= 3, "geometry.n_sources", "must be >= 3");
  require(g.neighbors >= 1 && g.neighbors < g.n_sources, "geometry.neighbors", "must lie in [1, n_sources)");
  require(g.series_terms >= 20, "geometry.series_terms", "must be >= 20");
  require(g.cap_z_min > -1 && g.cap_z_min < 1, "geometry.cap_z_min", "must lie in (-1, 1)");
  require(!g.shells.empty(), "geometry.shells", "needs at least one shell");
  for (std::size_t i = 0; i < g.shells.size(); ++i) {
    const std::string path = "geometry.shells[" + std::to_string(i) + "]";
    require(g.shells[i].radius > 0 && g.shells[i].conductivity > 0, path, "radius and conductivity must be positive");
    if (i > 0) require(g.shells[i].radius > g.shells[i - 1].radius, path, "radii must increase outward");
  }
  require(g.source_radius > 0 && g.source_radius < g.shells.front().radius, "geometry.source_radius",
          "must lie inside the innermost shell");
  if (g.reference == Reference::electrode)
    require(g.reference_index >= 0 && g.reference_index < g.n_sensors, "geometry.reference_index",
            "must name an existing electrode");

  const auto& s = simulation;
  const double nyquist = s.sample_rate / 2;
  require(s.sample_rate > 0, "simulation.sample_rate", "must be positive");
  require(s.duration_s > 0, "simulation.duration_s", "must be positive");
  require(s.pulse_time_s > 0 && s.pulse_time_s < s.duration_s, "simulation.pulse_time_s",
          "must lie inside the recording");
  require(s.noise_std >= 0, "simulation.noise_std", "must be >= 0");
  require(s.artifact_amplitude >= 0, "simulation.artifact_amplitude", "must be >= 0");
  require(s.scenario == "coupled_alpha" || s.scenario == "custom" || s.scenario == "none", "simulation.scenario",
          "must be coupled_alpha, custom or none");
  if (s.scenario == "coupled_alpha") {
    require(s.drivers_per_hemisphere >= 1 && 2 * s.drivers_per_hemisphere <= g.n_sources,
            "simulation.drivers_per_hemisphere", "must lie in [1, n_sources / 2]");
    require(s.driver_frequency > 0 && s.driver_frequency < nyquist, "simulation.driver_frequency",
            "must lie in (0, Nyquist)");
    require(s.driver_amplitude >= 0, "simulation.driver_amplitude", "must be >= 0");
    require(s.driver_bandwidth > 0, "simulation.driver_bandwidth", "must be positive");
    require(s.coupling_before >= 0 && s.coupling_before <= 1, "simulation.coupling_before", "must lie in [0, 1]");
    require(s.coupling_after >= 0 && s.coupling_after <= 1, "simulation.coupling_after", "must lie in [0, 1]");
  }
  for (std::size_t i = 0; i < s.activities.size(); ++i) {
    const auto& a = s.activities[i];
    const std::string path = "simulation.activities[" + std::to_string(i) + "]";
    require(a.source >= 0 && a.source < g.n_sources, path + ".source", "out of range");
    require(a.frequency >= 0 && a.frequency < nyquist, path + ".frequency", "must lie in [0, Nyquist)");
    require(a.coupling_before >= 0 && a.coupling_before <= 1 && a.coupling_after >= 0 && a.coupling_after <= 1,
            path, "couplings must lie in [0, 1]");
  }

  const auto& p = preprocess;
  require(p.cut_start_ms < p.cut_end_ms, "preprocess.cut_start_ms", "must be below cut_end_ms");
  require(p.highpass_hz >= 0 && p.highpass_hz < nyquist, "preprocess.highpass_hz", "must lie in [0, Nyquist)");
  require(p.highpass_order >= 1 && p.highpass_order <= 8, "preprocess.highpass_order", "must lie in [1, 8]");
  require(p.notch_hz >= 0 && p.notch_hz < nyquist, "preprocess.notch_hz", "must lie in [0, Nyquist)");
  require(p.notch_bandwidth_hz > 0, "preprocess.notch_bandwidth_hz", "must be positive");
  require(p.epoch_pre_s > 0 && p.epoch_pre_s <= s.pulse_time_s, "preprocess.epoch_pre_s",
          "must be positive and fit before the pulse");
  require(p.epoch_post_s > 0 && s.pulse_time_s + p.epoch_post_s <= s.duration_s + 1e-9, "preprocess.epoch_post_s",
          "must be positive and fit after the pulse");
  require(p.baseline_start_s >= -p.epoch_pre_s && p.baseline_start_s < p.baseline_end_s && p.baseline_end_s <= 0,
          "preprocess.baseline_start_s", "baseline must satisfy -epoch_pre_s <= start < end <= 0");
  const auto baseline_samples = static_cast<Index>(std::llround((p.baseline_end_s - p.baseline_start_s) * s.sample_rate));
  require(baseline_samples >= std::max<Index>(2, g.n_sensors), "preprocess.baseline_end_s",
          "baseline needs at least n_sensors samples");

  const auto& inv = inverse;
  require(!inv.methods.empty(), "inverse.methods", "needs at least one method");
  require(inv.snr > 0, "inverse.snr", "must be positive");
  if (inv.lambda) require(*inv.lambda > 0, "inverse.lambda", "must be positive");
  require(inv.gamma_depth >= 0 && inv.gamma_depth <= 1, "inverse.gamma_depth", "must lie in [0, 1]");
  require(inv.parcels >= 1 && inv.parcels <= g.n_sources, "inverse.parcels", "must lie in [1, n_sources]");
  require(inv.wmem.wavelet_order >= 1 && inv.wmem.wavelet_order <= 20, "inverse.wmem.wavelet_order",
          "must lie in [1, 20]");
  const int max_levels = static_cast<int>(std::floor(std::log2(static_cast<double>(std::max<Index>(baseline_samples, 2)))));
  require(inv.wmem.levels >= 1 && inv.wmem.levels <= max_levels, "inverse.wmem.levels",
          "must lie in [1, " + std::to_string(max_levels) + "] for the baseline length");
  require(inv.wmem.box_selection > 0 && inv.wmem.box_selection <= 1, "inverse.wmem.box_selection",
          "must lie in (0, 1]");
  require(inv.wmem.alpha > 0 && inv.wmem.alpha < 1, "inverse.wmem.alpha", "must lie in (0, 1)");
  require(inv.wmem.max_iter >= 1, "inverse.wmem.max_iter", "must be >= 1");
  require(inv.wmem.tol > 0, "inverse.wmem.tol", "must be positive");
  if (inv.wmem_band)
    require(inv.wmem_band->first >= 0 && inv.wmem_band->first < inv.wmem_band->second, "inverse.wmem.band",
            "must satisfy 0 <= f_lo < f_hi");

  const auto& k = connectivity;
  auto inside = [&](double t) { return t >= -p.epoch_pre_s && t <= p.epoch_post_s; };
  require(k.threshold >= 0, "connectivity.threshold", "must be >= 0");
  require(k.max_lag_s >= 0, "connectivity.max_lag_s", "must be >= 0");
  require(k.placement.n_per_hemisphere >= 2, "connectivity.scouts_per_hemisphere",
          "must be >= 2 (the alpha index needs three vertices)");
  require(k.placement.patch_radius >= 0, "connectivity.patch_radius", "must be >= 0");
  require(k.placement.min_separation >= 1, "connectivity.min_separation", "must be >= 1");
  require(inside(k.before_start_s) && inside(k.before_end_s) && k.before_start_s < k.before_end_s,
          "connectivity.before_start_s", "before window must be ordered and inside the epoch");
  require(inside(k.after_start_s) && inside(k.after_end_s) && k.after_start_s < k.after_end_s,
          "connectivity.after_start_s", "after window must be ordered and inside the epoch");
  require(std::min(k.before_end_s - k.before_start_s, k.after_end_s - k.after_start_s) >= 2 * k.max_lag_s,
          "connectivity.max_lag_s", "windows must span at least twice the maximum lag");
  require(k.intra_vertices >= 3 && k.intra_vertices <= g.n_sources, "connectivity.intra_vertices",
          "must lie in [3, n_sources]");

  require(zones.k >= 1 && zones.k <= g.n_sources, "zones.k", "must lie in [1, n_sources]");
  require(!zones.windows.empty(), "zones.windows", "needs at least one window");
  for (std::size_t i = 0; i < zones.windows.size(); ++i) {
    const auto& w = zones.windows[i];
    require(!w.name.empty() && inside(w.start_s) && inside(w.end_s) && w.start_s < w.end_s,
            "zones.windows[" + std::to_string(i) + "]", "needs a name and an ordered window inside the epoch");
  }
}

std::string display_name(Method m) {
  switch (m) {
    case Method::mne: return "MNE";
    case Method::dspm: return "dSPM";
    case Method::sloreta: return "sLORETA";
    case Method::wmem: return "wMEM";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Stages

GainMatrix build_gain(const PipelineConfig& cfg) {
  const auto& g = cfg.geometry;
  SensorArray sensors = make_cap_sensors(g.n_sensors, g.reference, g.cap_z_min);
  sensors.reference_index = g.reference_index;
  const SourceSpace space = make_spherical_source_space(g.n_sources, g.source_radius, g.orientation, g.neighbors);
  return build_spherical_leadfield(sensors, space, g.shells, g.series_terms);
}

Scenario build_scenario(const PipelineConfig& cfg, const GainMatrix& gain) {
  const auto& s = cfg.simulation;
  Scenario sc;
  sc.pulse_time_s = s.pulse_time_s;
  sc.tms_artifact = s.tms_artifact;
  sc.artifact_amplitude = s.artifact_amplitude;
  sc.artifact_start_ms = cfg.preprocess.cut_start_ms;
  sc.artifact_end_ms = cfg.preprocess.cut_end_ms;
  sc.activities = s.activities;
  if (s.scenario != "coupled_alpha") return sc;

  // Drivers spread over each hemisphere away from the midline: the most
  // lateral source first, then farthest-point picks.
  const auto& pos = gain.sources.positions;
  const double margin = 0.25 * cfg.geometry.source_radius;
  for (int h = 0; h < 2; ++h) {
    const double side = h == 0 ? -1.0 : 1.0;
    std::vector<Index> chosen;
    for (Index d = 0; d < s.drivers_per_hemisphere; ++d) {
      Index best = -1;
      double best_score = -std::numeric_limits<double>::infinity();
      for (Index i = 0; i < gain.n_sources(); ++i) {
        const double x = side * pos[static_cast<std::size_t>(i)].x();
        if (x < margin) continue;
        double score = x;
        if (!chosen.empty()) {
          score = std::numeric_limits<double>::infinity();
          for (Index c : chosen) score = std::min(score, (pos[static_cast<std::size_t>(i)] - pos[static_cast<std::size_t>(c)]).norm());
        }
        if (score > best_score) {
          best_score = score;
          best = i;
        }
      }
      if (best < 0 || (!chosen.empty() && best_score <= 0))
        throw ScenarioError("not enough lateral sources for " + std::to_string(s.drivers_per_hemisphere) +
                            " drivers per hemisphere");
      chosen.push_back(best);
      SourceActivity a;
      a.source = best;
      a.waveform = Waveform::oscillator;
      a.frequency = s.driver_frequency;
      a.amplitude = s.driver_amplitude;
      a.bandwidth = s.driver_bandwidth;
      a.onset_s = s.driver_onset_s;
      a.group = 0;
      a.coupling_before = s.coupling_before;
      a.coupling_after = s.coupling_after;
      sc.activities.push_back(a);
    }
  }
  return sc;
}

Recording simulate(const PipelineConfig& cfg, const GainMatrix& gain) {
  const auto& s = cfg.simulation;
  const NoiseCovariance noise = NoiseCovariance::identity(gain.n_sensors(), s.noise_std * s.noise_std);
  return simulate_recording(gain, build_scenario(cfg, gain), noise, s.sample_rate, s.duration_s, cfg.seed);
}

Epoch preprocess(const PipelineConfig& cfg, const Recording& rec) {
  const auto& p = cfg.preprocess;
  Recording r = rec;
  if (p.interpolate_artifact) r = interpolate_artifact(r, p.cut_start_ms, p.cut_end_ms, 1.0, cfg.seed);
  if (p.highpass_hz > 0) r = butterworth_highpass(r, p.highpass_hz, p.highpass_order, p.zero_phase);
  if (p.notch_hz > 0) r = notch_filter(r, p.notch_hz, p.notch_bandwidth_hz, p.zero_phase);
  return epoch(r, p.epoch_pre_s, p.epoch_post_s);
}

NoiseCovariance baseline_covariance(const PipelineConfig& cfg, const Epoch& ep) {
  return estimate_noise_covariance(ep, cfg.preprocess.baseline_start_s, cfg.preprocess.baseline_end_s);
}

MatrixXd baseline_segment(const PipelineConfig& cfg, const Epoch& ep) {
  const Index a = ep.index_of(cfg.preprocess.baseline_start_s), b = ep.index_of(cfg.preprocess.baseline_end_s);
  if (a < 0 || b > ep.n_samples() || a >= b) throw RangeError("baseline lies outside the epoch");
  return ep.data.middleCols(a, b - a);
}

Localization localize(const PipelineConfig& cfg, const GainMatrix& gain, const Epoch& ep, Method method) {
  const auto& inv = cfg.inverse;
  Localization out;
  out.provenance["method"] = to_string(method);
  out.provenance["gain_hash"] = hash_hex(gain.matrix);
  out.provenance["epoch_hash"] = hash_hex(ep.data);
  try {
    if (method == Method::wmem) {
      const Parcellation parc = parcellate(gain.sources, inv.parcels, cfg.seed);
      WmemConfig wc = inv.wmem;
      if (inv.wmem_band) {
        wc.scales = scales_for_band(inv.wmem_band->first, inv.wmem_band->second, ep.sample_rate, wc.levels);
        if (wc.scales.empty()) throw ConfigError("wMEM band selects no wavelet scale");
      }
      out.estimate = wmem_localize(ep, gain, parc, baseline_segment(cfg, ep), wc, &out.diagnostics);
      Index failed = 0;
      for (const auto& d : out.diagnostics) failed += !d.converged;
      out.provenance["parcels"] = inv.parcels;
      out.provenance["wavelet"] = daubechies(wc.wavelet_order).name();
      out.provenance["levels"] = wc.levels;
      out.provenance["scales"] = wc.scales;
      out.provenance["boxes_solved"] = out.diagnostics.size();
      out.provenance["boxes_failed"] = failed;
      return out;
    }
    const NoiseCovariance cov = baseline_covariance(cfg, ep);
    const double lambda = inv.lambda ? *inv.lambda : lambda_from_snr(gain, cov, inv.gamma_depth, inv.snr);
    InverseKernel k;
    switch (method) {
      case Method::mne: k = mne_kernel(gain, cov, inv.gamma_depth, lambda); break;
      case Method::dspm: k = dspm_kernel(gain, cov, inv.gamma_depth, lambda); break;
      case Method::sloreta: k = sloreta_kernel(gain, cov, inv.gamma_depth, lambda); break;
      case Method::wmem: break;
    }
    out.estimate = apply_kernel(k, ep, ApplyMode::values, false);
    out.provenance["lambda"] = lambda;
    out.provenance["gamma_depth"] = inv.gamma_depth;
    out.provenance["covariance_hash"] = k.covariance_hash;
    out.kernel = std::move(k);
  } catch (const Error& e) {
    // Keep the error kind, prefix the method for context.
    const std::string msg = to_string(method) + ": " + e.what();
    switch (e.kind()) {
      case ErrorKind::config: throw ConfigError(msg);
      case ErrorKind::numerical: throw SolverError(msg);
      case ErrorKind::io: throw IoError(msg);
    }
    throw;
  }
  return out;
}

namespace {

struct Windows {
  Index b0, b1, a0, a1;
};

Windows connectivity_windows(const ConnectivityConfig& k, const SourceEstimate& est) {
  auto index = [&](double t) { return est.t0_index + static_cast<Index>(std::llround(t * est.sample_rate)); };
  return {index(k.before_start_s), index(k.before_end_s), index(k.after_start_s), index(k.after_end_s)};
}

}  // namespace

ScoutLayout place_scouts(const PipelineConfig& cfg, const GainMatrix& gain,
                         const std::vector<const SourceEstimate*>& estimates) {
  if (estimates.empty()) throw ConfigError("scout placement needs at least one estimate");
  const auto& k = cfg.connectivity;
  VectorXd consensus = VectorXd::Zero(gain.n_sources());
  for (const SourceEstimate* est : estimates) {
    if (est->n_sources() != gain.n_sources()) throw DimensionError("estimate does not match the source space");
    const Windows w = connectivity_windows(k, *est);
    const VectorXd act = integrated_activity(*est, w.b0, w.a1);
    const double peak = act.maxCoeff();
    if (!(peak > 0)) throw DegenerateError("estimate is zero; cannot place scouts");
    consensus += act / peak;
  }
  consensus /= static_cast<double>(estimates.size());

  ScoutLayout layout;
  layout.scouts = auto_place_scouts(consensus, gain.sources, k.placement);

  Index center = layout.scouts.front().members.front();
  for (const auto& s : layout.scouts)
    if (consensus(s.members.front()) > consensus(center)) center = s.members.front();
  const auto hops = hop_distances(gain.sources.adjacency, center);
  auto key = [&](Index x) {
    const Index h = hops[static_cast<std::size_t>(x)];
    return h < 0 ? std::numeric_limits<Index>::max() : h;
  };
  std::vector<Index> order(static_cast<std::size_t>(gain.n_sources()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return key(x) < key(y); });
  layout.intra_sources.assign(order.begin(), order.begin() + k.intra_vertices);
  return layout;
}

ConnectivityResult analyze_connectivity(const PipelineConfig& cfg, const GainMatrix& gain,
                                        const SourceEstimate& est, const ScoutLayout& layout) {
  const auto& k = cfg.connectivity;
  const Windows w = connectivity_windows(k, est);
  ConnectivityResult res;
  res.scouts = layout.scouts;
  for (auto& s : res.scouts) extract_scout_series(est, s);
  res.inter_before = build_graph(slice_scouts(res.scouts, w.b0, w.b1), k.threshold, est.sample_rate, k.max_lag_s);
  res.inter_after = build_graph(slice_scouts(res.scouts, w.a0, w.a1), k.threshold, est.sample_rate, k.max_lag_s);

  res.intra_sources = layout.intra_sources;
  std::vector<Scout> vertices = single_source_scouts(gain.sources, res.intra_sources);
  for (auto& s : vertices) extract_scout_series(est, s);
  res.intra_before = build_graph(slice_scouts(vertices, w.b0, w.b1), k.threshold, est.sample_rate, k.max_lag_s);
  res.intra_after = build_graph(slice_scouts(vertices, w.a0, w.a1), k.threshold, est.sample_rate, k.max_lag_s);
  return res;
}

ConnectivityResult analyze_connectivity(const PipelineConfig& cfg, const GainMatrix& gain,
                                        const SourceEstimate& est) {
  return analyze_connectivity(cfg, gain, est, place_scouts(cfg, gain, {&est}));
}

namespace {

struct KanskyRow {
  std::string scope, method, phase;
  const ConnectivityGraph* graph;
};

std::string kansky_table(const std::string& title, const std::vector<std::string>& methods,
                         const std::map<std::string, std::pair<const ConnectivityGraph*, const ConnectivityGraph*>>& graphs) {
  std::ostringstream os;
  os << title << '\n';
  const int w = 10;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-14s", "");
  os << buf;
  for (const char* phase : {"Before TMS", "After TMS"}) {
    std::snprintf(buf, sizeof buf, "%-*s", w * static_cast<int>(methods.size()), phase);
    os << buf;
  }
  os << '\n';
  std::snprintf(buf, sizeof buf, "%-14s", "");
  os << buf;
  for (int phase = 0; phase < 2; ++phase) {
    for (const auto& m : methods) {
      std::snprintf(buf, sizeof buf, "%-*s", w, m.c_str());
      os << buf;
    }
  }
  os << '\n';
  const char* labels[] = {"Edges (e)", "Vertices (v)", "Beta", "Gamma", "Alpha"};
  for (int row = 0; row < 5; ++row) {
    std::snprintf(buf, sizeof buf, "%-14s", labels[row]);
    os << buf;
    for (int phase = 0; phase < 2; ++phase) {
      for (const auto& m : methods) {
        const auto& pair = graphs.at(m);
        const ConnectivityGraph& g = phase == 0 ? *pair.first : *pair.second;
        const KanskyIndices ki = kansky_indices(g);
        std::string cell;
        switch (row) {
          case 0: cell = std::to_string(g.n_edges()); break;
          case 1: cell = std::to_string(g.n_vertices()); break;
          case 2: cell = fmt("%.2f", ki.beta); break;
          case 3: cell = fmt("%.2f", ki.gamma); break;
          default: cell = fmt("%.2f", ki.alpha); break;
        }
        std::snprintf(buf, sizeof buf, "%-*s", w, cell.c_str());
        os << buf;
      }
    }
    os << '\n';
  }
  return os.str();
}

Json kansky_json(const ConnectivityGraph& g) {
  const KanskyIndices k = kansky_indices(g);
  return {{"e", g.n_edges()}, {"v", g.n_vertices()}, {"p", g.subgraph_count},
          {"beta", k.beta}, {"gamma", k.gamma}, {"alpha", k.alpha}};
}

std::string file_token(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_';
  return out;
}

}  // namespace

Json compare_estimates(const PipelineConfig& cfg, const GainMatrix& gain, const NamedEstimates& estimates,
                       const fs::path& out_dir) {
  if (estimates.size() < 2) throw ConfigError("compare needs at least two estimates");
  const std::string config_hash = cfg.hash();

  std::vector<std::string> names;
  std::map<std::string, int> seen;
  for (const auto& [name, est] : estimates) {
    const int n = ++seen[name];
    names.push_back(n == 1 ? name : name + "#" + std::to_string(n));
  }

  std::vector<const SourceEstimate*> pointers;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (estimates[i].second.n_sources() != gain.n_sources())
      throw DimensionError("estimate '" + names[i] + "' does not match the source space");
    pointers.push_back(&estimates[i].second);
  }
  const ScoutLayout layout = place_scouts(cfg, gain, pointers);

  std::map<std::string, ConnectivityResult> results;
  std::map<std::string, SourceEstimate> by_name;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& est = estimates[i].second;
    by_name[names[i]] = est;
    try {
      results[names[i]] = analyze_connectivity(cfg, gain, est, layout);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numerical) throw SolverError(names[i] + ": " + e.what());
      throw;
    }
  }

  Json summary;
  summary["config_hash"] = config_hash;
  summary["methods"] = names;
  summary["threshold"] = cfg.connectivity.threshold;

  std::string csv = "config_hash," + config_hash + "\nscope,method,phase,e,v,p,beta,gamma,alpha\n";
  std::map<std::string, std::pair<const ConnectivityGraph*, const ConnectivityGraph*>> inter, intra;
  Json scouts_json = Json::object();
  for (const auto& name : names) {
    const ConnectivityResult& r = results.at(name);
    inter[name] = {&r.inter_before, &r.inter_after};
    intra[name] = {&r.intra_before, &r.intra_after};
    const std::string token = file_token(name);
    for (const auto& [scope, pair] : {std::pair<std::string, std::pair<const ConnectivityGraph*, const ConnectivityGraph*>>{"inter", inter[name]},
                                      {"intra", intra[name]}}) {
      for (int phase = 0; phase < 2; ++phase) {
        const ConnectivityGraph& g = phase == 0 ? *pair.first : *pair.second;
        const std::string ph = phase == 0 ? "before" : "after";
        const std::string stem = "graphs/" + scope + "_" + token + "_" + ph;
        write_text(out_dir / (stem + ".json"), graph_to_json(g, config_hash));
        write_text(out_dir / (stem + ".csv"), adjacency_csv(g));
        write_text(out_dir / (stem + ".svg"), chord_diagram_svg(g, name + " " + scope + "-zone, " + ph + " TMS"));
        const KanskyIndices k = kansky_indices(g);
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%ld,%ld,%ld,%.17g,%.17g,%.17g\n", scope.c_str(), name.c_str(),
                      ph.c_str(), static_cast<long>(g.n_edges()), static_cast<long>(g.n_vertices()),
                      static_cast<long>(g.subgraph_count), k.beta, k.gamma, k.alpha);
        csv += buf;
        summary["kansky"][scope][name][ph] = kansky_json(g);
      }
    }
    const double ab = kansky_indices(r.inter_before).alpha, aa = kansky_indices(r.inter_after).alpha;
    summary["inter_alpha_increases"][name] = aa > ab;
    Json sj = Json::array();
    for (const auto& s : r.scouts)
      sj.push_back({{"name", s.name}, {"hemisphere", to_string(s.hemisphere)}, {"members", s.members},
                    {"captured_variance", s.captured_variance}});
    scouts_json[name] = {{"scouts", sj}, {"intra_sources", r.intra_sources}};
  }
  write_text(out_dir / "kansky.csv", csv);
  write_text(out_dir / "kansky_inter.txt",
             kansky_table("Inter-zone connectivity (global indicators)", names, inter));
  write_text(out_dir / "kansky_intra.txt",
             kansky_table("Intra-zone connectivity (global indicators)", names, intra));
  write_json(out_dir / "scouts.json", Json{{"config_hash", config_hash}, {"scouts", scouts_json}});

  // Zones: compare_methods wants unique keys; names are already unique.
  const ZoneComparison zc = compare_methods(by_name, cfg.zones.windows, cfg.zones.k, cfg.seed);
  write_text(out_dir / "zones.csv", "config_hash," + config_hash + "\n" + zc.to_csv());
  write_text(out_dir / "zones.txt", "Active regions detection rate\n" + zc.to_table());
  for (const auto& row : zc.rows) {
    summary["zones"][row.method][row.window] = {{"detection_rate", row.detection_rate},
                                                {"active_count", row.active_count}};
  }
  Json overlaps = Json::array();
  for (const auto& o : zc.overlaps)
    overlaps.push_back({{"window", o.window}, {"a", o.method_a}, {"b", o.method_b}, {"jaccard", o.jaccard}});
  summary["zone_overlaps"] = overlaps;
  write_json(out_dir / "summary.json", summary);
  return summary;
}

// ---------------------------------------------------------------------------
// File-level stages

namespace {

void check_hash(const std::string& found, const PipelineConfig& cfg, const fs::path& stem) {
  const std::string expected = cfg.hash();
  if (found != expected)
    throw ConfigError("input '" + stem.string() + "' was produced with config hash " + found +
                      ", current config hash is " + expected);
}

GainMatrix load_checked_gain(const PipelineConfig& cfg, const fs::path& dir) {
  std::string h;
  GainMatrix g = load_gain(dir / "gain", &h);
  check_hash(h, cfg, dir / "gain");
  return g;
}

SourceEstimate load_checked_estimate(const PipelineConfig& cfg, const fs::path& stem) {
  std::string h;
  SourceEstimate est = load_estimate(stem, &h);
  check_hash(h, cfg, stem);
  return est;
}

fs::path estimate_stem(const fs::path& dir, Method m) { return dir / ("estimate_" + to_string(m)); }

}  // namespace

void run_simulate(const PipelineConfig& cfg, const fs::path& dir) {
  const std::string h = cfg.hash();
  const GainMatrix gain = build_gain(cfg);
  const Recording rec = simulate(cfg, gain);
  save_gain(dir / "gain", gain, h);
  save_recording(dir / "recording", rec, gain.sensors.labels, h);
  write_json(dir / "config.json", cfg.to_json());
}

void run_preprocess(const PipelineConfig& cfg, const fs::path& dir) {
  std::string h;
  const Recording rec = load_recording(dir / "recording", &h);
  check_hash(h, cfg, dir / "recording");
  const Epoch ep = preprocess(cfg, rec);
  save_epoch(dir / "epoch", ep, h);
  save_covariance(dir / "noise_cov", baseline_covariance(cfg, ep), h);
}

void run_localize(const PipelineConfig& cfg, const fs::path& dir, Method method,
                  const std::optional<fs::path>& epoch_stem) {
  const GainMatrix gain = load_checked_gain(cfg, dir);
  const fs::path stem = epoch_stem ? *epoch_stem : dir / "epoch";
  std::string h;
  const Epoch ep = load_epoch(stem, &h);
  check_hash(h, cfg, stem);
  const Localization loc = localize(cfg, gain, ep, method);
  const std::string token = to_string(method);
  save_estimate(estimate_stem(dir, method), loc.estimate, h, loc.provenance);
  if (loc.kernel) save_kernel(dir / ("kernel_" + token), *loc.kernel, h);
  if (method == Method::wmem) {
    write_text(dir / "wmem_diagnostics.jsonl", box_diagnostics_jsonl(loc.diagnostics));
    const WaveletDecomposition dec = dwt(ep, daubechies(cfg.inverse.wmem.wavelet_order), cfg.inverse.wmem.levels,
                                         cfg.inverse.wmem.boundary);
    write_text(dir / "multiresolution.csv", multiresolution_csv(dec));
  }
}

void run_scouts(const PipelineConfig& cfg, const fs::path& dir, Method method) {
  const GainMatrix gain = load_checked_gain(cfg, dir);
  const SourceEstimate est = load_checked_estimate(cfg, estimate_stem(dir, method));
  const ConnectivityResult r = analyze_connectivity(cfg, gain, est);
  Json sj = Json::array();
  for (const auto& s : r.scouts)
    sj.push_back({{"name", s.name}, {"hemisphere", to_string(s.hemisphere)}, {"members", s.members},
                  {"captured_variance", s.captured_variance}});
  write_json(dir / ("scouts_" + to_string(method) + ".json"),
             Json{{"config_hash", cfg.hash()}, {"method", to_string(method)}, {"scouts", sj},
                  {"intra_sources", r.intra_sources}});
}

void run_connectivity(const PipelineConfig& cfg, const fs::path& dir, Method method) {
  const GainMatrix gain = load_checked_gain(cfg, dir);
  const SourceEstimate est = load_checked_estimate(cfg, estimate_stem(dir, method));
  const ConnectivityResult r = analyze_connectivity(cfg, gain, est);
  const fs::path out = dir / ("connectivity_" + to_string(method));
  const std::string h = cfg.hash();
  const std::pair<const char*, const ConnectivityGraph*> graphs[] = {
      {"inter_before", &r.inter_before}, {"inter_after", &r.inter_after},
      {"intra_before", &r.intra_before}, {"intra_after", &r.intra_after}};
  for (const auto& [name, g] : graphs) {
    write_text(out / (std::string(name) + ".json"), graph_to_json(*g, h));
    write_text(out / (std::string(name) + ".csv"), adjacency_csv(*g));
    write_text(out / (std::string(name) + ".svg"), chord_diagram_svg(*g, display_name(method) + " " + name));
  }
}

void run_zones(const PipelineConfig& cfg, const fs::path& dir, Method method) {
  const SourceEstimate est = load_checked_estimate(cfg, estimate_stem(dir, method));
  std::string csv = "config_hash," + cfg.hash() + "\nwindow,start_s,end_s,detection_rate,active_count\n";
  char buf[256];
  for (const auto& w : cfg.zones.windows) {
    const ZoneSegmentation z = detect_active_zones(est, w.start_s, w.end_s, cfg.zones.k, cfg.seed);
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%ld\n", w.name.c_str(), w.start_s, w.end_s,
                  z.detection_rate, static_cast<long>(z.active_count()));
    csv += buf;
  }
  write_text(dir / ("zones_" + to_string(method) + ".csv"), csv);
}

void run_compare(const PipelineConfig& cfg, const fs::path& dir, const std::vector<fs::path>& estimate_stems) {
  const GainMatrix gain = load_checked_gain(cfg, dir);
  NamedEstimates estimates;
  if (estimate_stems.empty()) {
    for (Method m : cfg.inverse.methods)
      estimates.emplace_back(display_name(m), load_checked_estimate(cfg, estimate_stem(dir, m)));
  } else {
    for (const auto& stem : estimate_stems) {
      SourceEstimate est = load_checked_estimate(cfg, stem);
      estimates.emplace_back(display_name(est.method), std::move(est));
    }
  }
  compare_estimates(cfg, gain, estimates, dir / "report");
}

void run_report(const PipelineConfig& cfg, const fs::path& dir) {
  run_simulate(cfg, dir);
  run_preprocess(cfg, dir);
  for (Method m : cfg.inverse.methods) run_localize(cfg, dir, m);
  run_compare(cfg, dir);
}

}  // namespace tmseeg
