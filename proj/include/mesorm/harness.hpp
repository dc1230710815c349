#pragma once

#include "mesorm/cltengine.hpp"
#include "mesorm/linstat.hpp"
#include "mesorm/stats.hpp"

#include <json.hpp>

#include <complex>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mesorm {

struct ExperimentConfig {
  EnsembleSpec ensemble;  // seed is ignored, trial k uses base_seed + k
  std::size_t trials = 400;
  TestProfile profile;
  double eta0 = 0.03;
  Location location = Location::bulk;
  double e0 = 0.0;  // bulk only; edge runs pin E0 to the solved edge
  bool predict_finite = true;
  double contour_relative_height = 1e-3;
  std::uint64_t base_seed = 1;
  int workers = 1;
  double alpha = 0.01;
  double variance_tolerance = 0.2;
  std::vector<double> lambdas{0.25, 0.5, 1.0, 2.0};
  StieltjesSolverConfig solver;

  void validate() const;
  /// Everything that determines the report (workers excluded).
  nlohmann::json to_json() const;
  std::string hash() const;
};

FreeConvolutionModel build_model(const EnsembleSpec& spec, const StieltjesSolverConfig& cfg = {});

struct CharacteristicPoint {
  double lambda = 0.0;
  std::complex<double> empirical;  // (1/T) sum exp(i lambda (S_k - mean S))
  double model = 0.0;              // exp(-lambda^2 V / 2)
};

struct Verdict {
  bool pass = false;
  bool ks_used = false;
  std::vector<std::string> reasons;  // failed checks
  std::vector<std::string> notes;
};

struct TrialFailure {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string message;
};

struct ExperimentReport {
  nlohmann::json config;
  std::string config_hash;
  std::size_t trials = 0;
  std::vector<std::uint64_t> seeds;       // successful trials, in trial order
  std::vector<double> statistics;         // linear statistic minus centering
  std::vector<TrialFailure> failures;
  double e0 = 0.0;
  double centering = 0.0;
  Moments moments;
  PredictionRecord prediction;
  double mean_theory = 0.0;
  double variance_theory = 0.0;
  std::optional<KsResult> ks;
  std::vector<CharacteristicPoint> characteristic;
  bool degenerate = false;
  double alpha = 0.01;
  double variance_tolerance = 0.2;
  std::vector<std::string> warnings;
  Verdict verdict;

  // Runtime metadata, kept out of the JSON report.
  double wall_seconds = 0.0;
  int workers_used = 1;
};

/// Thread-safe spectrum store keyed by spec_hash, optionally persisted.
class SpectrumCache {
 public:
  explicit SpectrumCache(std::filesystem::path directory = {});

  std::shared_ptr<const SpectrumSample> get(const EnsembleSpec& spec);
  std::size_t size() const;
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::unordered_map<std::uint64_t, std::shared_ptr<const SpectrumSample>> map_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Runs fn(i) for i in [0, n) on `workers` threads. Exceptions from fn are
/// not caught here.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);
/// MESORM_WORKERS if set, otherwise the hardware concurrency.
int default_workers();

ExperimentReport run_experiment(const ExperimentConfig& cfg, SpectrumCache* cache = nullptr);
/// As run_experiment; requires an edge location.
ExperimentReport edge_experiment(const ExperimentConfig& cfg, SpectrumCache* cache = nullptr);

/// Fills the theory-free part of a report from per-trial values and attaches
/// KS, characteristic function and verdict against (mean, variance).
void summarize(ExperimentReport& report, double mean_theory, double variance_theory);

Verdict normality_verdict(const ExperimentReport& report, double alpha);
Verdict normality_verdict(const ExperimentReport& report, double alpha, double variance_tolerance);

void to_json(nlohmann::json& j, const ExperimentReport& r);
void from_json(const nlohmann::json& j, ExperimentReport& r);

void export_json(const ExperimentReport& r, const std::filesystem::path& path);
ExperimentReport import_json(const std::filesystem::path& path);
void export_csv(const ExperimentReport& r, const std::filesystem::path& path);
void export_histogram_svg(const ExperimentReport& r, const std::filesystem::path& path);
void export_qq_svg(const ExperimentReport& r, const std::filesystem::path& path);

enum class ExportFormat { json = 1, csv = 2, svg = 4, all = 7 };
int parse_formats(std::string_view text);

/// Writes the selected artifacts into `dir` (created if needed).
void export_report(const ExperimentReport& r, const std::filesystem::path& dir, int formats);
/// runs/<UTC timestamp>-<config hash>/ with report files, config snapshot and timing.json.
std::filesystem::path write_run_directory(const ExperimentReport& r,
                                          const std::filesystem::path& root, int formats,
                                          const std::string& config_snapshot);

}  // namespace mesorm
