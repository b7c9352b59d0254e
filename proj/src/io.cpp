#include "tmseeg/io.hpp"

#include "tmseeg/error.hpp"
#include "tmseeg/hash.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tmseeg {

namespace {

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

Json sidecar(const std::string& kind, const MatrixXd& m, const std::string& config_hash) {
  Json j;
  j["kind"] = kind;
  j["config_hash"] = config_hash;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data_hash"] = hash_hex(m);
  return j;
}

template <class T>
T field(const Json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw IoError(path.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IoError(path.string() + ": field '" + key + "' has the wrong type");
  }
}

// Loads stem.json + stem.csv, checks kind, shape and data hash.
std::pair<Json, MatrixXd> load_pair(const fs::path& stem, const std::string& kind, std::string* config_hash) {
  const fs::path jpath = with_ext(stem, ".json"), cpath = with_ext(stem, ".csv");
  Json j = read_json(jpath);
  if (field<std::string>(j, "kind", jpath) != kind)
    throw IoError(jpath.string() + ": expected a " + kind + " sidecar");
  MatrixXd m = read_matrix_csv(cpath);
  if (m.rows() != field<Index>(j, "rows", jpath) || m.cols() != field<Index>(j, "cols", jpath))
    throw IoError(cpath.string() + ": shape differs from its sidecar");
  if (hash_hex(m) != field<std::string>(j, "data_hash", jpath))
    throw IoError(cpath.string() + ": data hash differs from its sidecar");
  if (config_hash) *config_hash = field<std::string>(j, "config_hash", jpath);
  return {std::move(j), std::move(m)};
}

Json vec3_list(const std::vector<Vector3d>& v) {
  Json a = Json::array();
  for (const auto& p : v) a.push_back({p.x(), p.y(), p.z()});
  return a;
}

std::vector<Vector3d> parse_vec3_list(const Json& a) {
  std::vector<Vector3d> out;
  for (const auto& p : a) out.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  return out;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed on '" + path.string() + "'");
  return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

std::string matrix_csv(const MatrixXd& m) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 24);
  char buf[32];
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      const int len = std::snprintf(buf, sizeof buf, c ? ",%.17g" : "%.17g", m(r, c));
      out.append(buf, static_cast<std::size_t>(len));
    }
    out.push_back('\n');
  }
  return out;
}

MatrixXd parse_matrix_csv(const std::string& text, const std::string& origin) {
  std::vector<double> values;
  Index rows = 0, cols = -1;
  const char* p = text.c_str();
  const char* end = p + text.size();
  while (p < end) {
    Index count = 0;
    while (p < end && *p != '\n') {
      char* next = nullptr;
      errno = 0;
      const double v = std::strtod(p, &next);
      if (next == p || errno == ERANGE)
        throw IoError(origin + ": malformed number on line " + std::to_string(rows + 1));
      values.push_back(v);
      ++count;
      p = next;
      if (p < end && *p == ',') ++p;
      else if (p < end && *p == '\r') ++p;
      else if (p < end && *p != '\n') throw IoError(origin + ": unexpected character on line " + std::to_string(rows + 1));
    }
    if (p < end) ++p;  // newline
    if (count == 0) continue;
    if (cols >= 0 && count != cols) throw IoError(origin + ": ragged row " + std::to_string(rows + 1));
    cols = count;
    ++rows;
  }
  if (cols < 0) cols = 0;
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  return m;
}

void write_matrix_csv(const fs::path& path, const MatrixXd& m) { write_text(path, matrix_csv(m)); }

MatrixXd read_matrix_csv(const fs::path& path) { return parse_matrix_csv(read_text(path), path.string()); }

Json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

void save_gain(const fs::path& stem, const GainMatrix& gain, const std::string& config_hash) {
  Json j = sidecar("gain", gain.matrix, config_hash);
  j["orientation_mode"] = to_string(gain.orientation_mode);
  j["series_terms"] = gain.series_terms;
  Json shells = Json::array();
  for (const Shell& s : gain.shells) shells.push_back({{"radius", s.radius}, {"conductivity", s.conductivity}});
  j["shells"] = shells;
  j["sensors"] = {{"labels", gain.sensors.labels},
                  {"reference", to_string(gain.sensors.reference)},
                  {"reference_index", gain.sensors.reference_index},
                  {"positions", vec3_list(gain.sensors.positions)}};
  Json adjacency = Json::array();
  for (const auto& nb : gain.sources.adjacency) adjacency.push_back(nb);
  j["sources"] = {{"positions", vec3_list(gain.sources.positions)},
                  {"orientations", vec3_list(gain.sources.orientations)},
                  {"adjacency", adjacency}};
  write_matrix_csv(with_ext(stem, ".csv"), gain.matrix);
  write_json(with_ext(stem, ".json"), j);
}

GainMatrix load_gain(const fs::path& stem, std::string* config_hash) {
  auto [j, m] = load_pair(stem, "gain", config_hash);
  const fs::path jpath = with_ext(stem, ".json");
  GainMatrix g;
  try {
    g.matrix = std::move(m);
    g.orientation_mode = orientation_mode_from_string(j.at("orientation_mode").get<std::string>());
    g.series_terms = j.at("series_terms").get<int>();
    for (const auto& s : j.at("shells")) g.shells.push_back({s.at("radius").get<double>(), s.at("conductivity").get<double>()});
    const Json& sj = j.at("sensors");
    g.sensors.labels = sj.at("labels").get<std::vector<std::string>>();
    g.sensors.reference = reference_from_string(sj.at("reference").get<std::string>());
    g.sensors.reference_index = sj.at("reference_index").get<Index>();
    g.sensors.positions = parse_vec3_list(sj.at("positions"));
    const Json& src = j.at("sources");
    g.sources.positions = parse_vec3_list(src.at("positions"));
    g.sources.orientations = parse_vec3_list(src.at("orientations"));
    for (const auto& nb : src.at("adjacency")) g.sources.adjacency.push_back(nb.get<std::vector<Index>>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(jpath.string() + ": malformed gain sidecar (" + e.what() + ")");
  }
  g.validate();
  return g;
}

void save_recording(const fs::path& stem, const Recording& rec, const std::vector<std::string>& labels,
                    const std::string& config_hash) {
  Json j = sidecar("recording", rec.data, config_hash);
  j["sample_rate"] = rec.sample_rate;
  j["t0_index"] = rec.t0_index;
  j["labels"] = labels;
  j["units"] = "V";
  Json ann = Json::array();
  for (const auto& a : rec.annotations) ann.push_back({{"label", a.label}, {"start", a.start}, {"end", a.end}});
  j["annotations"] = ann;
  write_matrix_csv(with_ext(stem, ".csv"), rec.data);
  write_json(with_ext(stem, ".json"), j);
}

Recording load_recording(const fs::path& stem, std::string* config_hash) {
  auto [j, m] = load_pair(stem, "recording", config_hash);
  const fs::path jpath = with_ext(stem, ".json");
  Recording rec;
  rec.data = std::move(m);
  rec.sample_rate = field<double>(j, "sample_rate", jpath);
  rec.t0_index = field<Index>(j, "t0_index", jpath);
  try {
    for (const auto& a : j.at("annotations"))
      rec.annotations.push_back({a.at("label").get<std::string>(), a.at("start").get<Index>(), a.at("end").get<Index>()});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(jpath.string() + ": malformed annotations (" + e.what() + ")");
  }
  rec.validate();
  return rec;
}

void save_epoch(const fs::path& stem, const Epoch& ep, const std::string& config_hash) {
  Json j = sidecar("epoch", ep.data, config_hash);
  j["sample_rate"] = ep.sample_rate;
  j["pre_s"] = ep.pre_s;
  j["post_s"] = ep.post_s;
  write_matrix_csv(with_ext(stem, ".csv"), ep.data);
  write_json(with_ext(stem, ".json"), j);
}

Epoch load_epoch(const fs::path& stem, std::string* config_hash) {
  auto [j, m] = load_pair(stem, "epoch", config_hash);
  const fs::path jpath = with_ext(stem, ".json");
  Epoch ep;
  ep.data = std::move(m);
  ep.sample_rate = field<double>(j, "sample_rate", jpath);
  ep.pre_s = field<double>(j, "pre_s", jpath);
  ep.post_s = field<double>(j, "post_s", jpath);
  ep.validate();
  return ep;
}

void save_covariance(const fs::path& stem, const NoiseCovariance& cov, const std::string& config_hash) {
  Json j = sidecar("noise_covariance", cov.matrix, config_hash);
  j["n_samples_used"] = cov.n_samples_used;
  j["regularization_floor"] = cov.regularization_floor;
  write_matrix_csv(with_ext(stem, ".csv"), cov.matrix);
  write_json(with_ext(stem, ".json"), j);
}

NoiseCovariance load_covariance(const fs::path& stem, std::string* config_hash) {
  auto [j, m] = load_pair(stem, "noise_covariance", config_hash);
  const fs::path jpath = with_ext(stem, ".json");
  NoiseCovariance cov;
  cov.matrix = std::move(m);
  cov.n_samples_used = field<Index>(j, "n_samples_used", jpath);
  cov.regularization_floor = field<double>(j, "regularization_floor", jpath);
  cov.validate();
  return cov;
}

void save_kernel(const fs::path& stem, const InverseKernel& k, const std::string& config_hash) {
  Json j = sidecar("inverse_kernel", k.kernel, config_hash);
  j["method"] = to_string(k.method);
  j["lambda"] = k.lambda;
  j["gamma_depth"] = k.gamma_depth;
  j["orientation_mode"] = to_string(k.orientation_mode);
  j["gain_hash"] = k.gain_hash;
  j["covariance_hash"] = k.covariance_hash;
  j["normalization"] = std::vector<double>(k.normalization.data(), k.normalization.data() + k.normalization.size());
  write_matrix_csv(with_ext(stem, ".csv"), k.kernel);
  write_json(with_ext(stem, ".json"), j);
}

void save_estimate(const fs::path& stem, const SourceEstimate& est, const std::string& config_hash,
                   const Json& provenance) {
  Json j = sidecar("source_estimate", est.values, config_hash);
  j["method"] = to_string(est.method);
  j["sample_rate"] = est.sample_rate;
  j["t0_index"] = est.t0_index;
  j["columns_per_source"] = est.columns_per_source;
  j["power"] = est.power;
  j["units"] = est.method == Method::mne || est.method == Method::wmem ? "A*m" : "dimensionless";
  j["provenance"] = provenance;
  write_matrix_csv(with_ext(stem, ".csv"), est.values);
  write_json(with_ext(stem, ".json"), j);
}

SourceEstimate load_estimate(const fs::path& stem, std::string* config_hash) {
  auto [j, m] = load_pair(stem, "source_estimate", config_hash);
  const fs::path jpath = with_ext(stem, ".json");
  SourceEstimate est;
  est.values = std::move(m);
  est.method = method_from_string(field<std::string>(j, "method", jpath));
  est.sample_rate = field<double>(j, "sample_rate", jpath);
  est.t0_index = field<Index>(j, "t0_index", jpath);
  est.columns_per_source = field<Index>(j, "columns_per_source", jpath);
  est.power = field<bool>(j, "power", jpath);
  est.validate();
  return est;
}

std::string multiresolution_csv(const WaveletDecomposition& dec) {
  const MatrixXd grid = multiresolution_grid(dec);
  std::string out = "scale,f_lo_hz,f_hi_hz";
  for (Index b = 0; b < grid.cols(); ++b) out += ",bin" + std::to_string(b);
  out += '\n';
  char buf[128];
  for (Index r = 0; r < grid.rows(); ++r) {
    const auto [lo, hi] = dec.band(static_cast<int>(r) + 1);
    std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g", static_cast<long>(r + 1), lo, hi);
    out += buf;
    for (Index b = 0; b < grid.cols(); ++b) {
      std::snprintf(buf, sizeof buf, ",%.17g", grid(r, b));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string box_diagnostics_jsonl(const std::vector<BoxDiagnostic>& diagnostics) {
  std::string out;
  for (const auto& d : diagnostics) {
    Json j = {{"scale", d.scale}, {"box", d.box}, {"energy", d.energy}, {"iterations", d.iterations},
              {"gradient_norm", d.gradient_norm}, {"entropy_drop", d.entropy_drop}, {"converged", d.converged}};
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace tmseeg
