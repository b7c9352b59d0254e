#pragma once

#include "tmseeg/headmodel.hpp"
#include "tmseeg/inverse.hpp"
#include "tmseeg/signal.hpp"
#include "tmseeg/types.hpp"
#include "tmseeg/wavelet.hpp"
#include "tmseeg/wmem.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace tmseeg {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& content);

/// Comma-separated rows, every value printed with %.17g.
std::string matrix_csv(const MatrixXd& m);
MatrixXd parse_matrix_csv(const std::string& text, const std::string& origin = "csv");
void write_matrix_csv(const fs::path& path, const MatrixXd& m);
MatrixXd read_matrix_csv(const fs::path& path);

Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& j);

// Every artifact is stem.csv (numbers) + stem.json (sidecar). The sidecar
// carries the kind, the config hash and a hash of the matrix.

void save_gain(const fs::path& stem, const GainMatrix& gain, const std::string& config_hash);
GainMatrix load_gain(const fs::path& stem, std::string* config_hash = nullptr);

void save_recording(const fs::path& stem, const Recording& rec, const std::vector<std::string>& labels,
                    const std::string& config_hash);
Recording load_recording(const fs::path& stem, std::string* config_hash = nullptr);

void save_epoch(const fs::path& stem, const Epoch& ep, const std::string& config_hash);
Epoch load_epoch(const fs::path& stem, std::string* config_hash = nullptr);

void save_covariance(const fs::path& stem, const NoiseCovariance& cov, const std::string& config_hash);
NoiseCovariance load_covariance(const fs::path& stem, std::string* config_hash = nullptr);

void save_kernel(const fs::path& stem, const InverseKernel& k, const std::string& config_hash);

void save_estimate(const fs::path& stem, const SourceEstimate& est, const std::string& config_hash,
                   const Json& provenance = Json::object());
SourceEstimate load_estimate(const fs::path& stem, std::string* config_hash = nullptr);

/// Scales x finest-scale bins, one row per scale (approximation last).
std::string multiresolution_csv(const WaveletDecomposition& dec);
/// One JSON object per line.
std::string box_diagnostics_jsonl(const std::vector<BoxDiagnostic>& diagnostics);

}  // namespace tmseeg
