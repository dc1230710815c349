#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace mesorm {

struct Atom {
  double location;
  double weight;
};

/// Finitely supported probability measure. Atoms are sorted by location,
/// locations are distinct and weights are strictly positive and sum to one.
class AtomicMeasure {
 public:
  AtomicMeasure() = default;

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  const std::string& label() const { return label_; }

  double min_location() const { return atoms_.front().location; }
  double max_location() const { return atoms_.back().location; }
  double max_abs_location() const;

  /// Same weights, every location multiplied by `factor`.
  AtomicMeasure scaled(double factor) const;

  /// True if every weight times `n` is an integer (within 1e-9).
  bool realizable(std::size_t n) const;

  /// Diagonal of length `n` whose empirical measure is exactly this measure.
  /// Throws ModelError if the measure is not realizable at this size.
  std::vector<double> realize(std::size_t n) const;

  /// Whitespace-separated "location weight" lines, '#' starts a comment.
  static AtomicMeasure load(const std::filesystem::path& path);
  static AtomicMeasure parse(std::string_view text, std::string label = {});

  std::string to_text() const;

 private:
  friend AtomicMeasure build_atomic_measure(std::span<const std::pair<double, double>>,
                                            std::string);
  std::vector<Atom> atoms_;
  std::string label_;
};

/// Normalizes and sorts (location, weight) pairs; coincident locations merge.
AtomicMeasure build_atomic_measure(std::span<const std::pair<double, double>> points,
                                   std::string label = {});
AtomicMeasure point_mass(double location);

enum class EnsembleKind { deformed_wigner, sample_covariance };
enum class EntryLaw { gaussian, rademacher, uniform, three_point };

std::string_view to_string(EnsembleKind kind);
std::string_view to_string(EntryLaw law);
EnsembleKind parse_ensemble_kind(std::string_view text);
EntryLaw parse_entry_law(std::string_view text);

/// Moments of the normalized entries sqrt(N) H_ij.
struct MomentProfile {
  int beta = 1;
  double m2 = 2.0;  // diagonal second moment
  double w4 = 3.0;  // off-diagonal fourth absolute moment
  EntryLaw law = EntryLaw::gaussian;

  /// Fourth cumulant of a real standardized entry (used by sample covariance).
  double k4() const { return w4 - 3.0; }
};

/// Fourth moment implied by `law` in symmetry class `beta`. For three_point
/// the law is tunable and the requested value must lie in `three_point_range`.
double natural_w4(int beta, EntryLaw law);
std::pair<double, double> three_point_range(int beta);

/// Builds a consistent profile. If `w4` is given it must be realizable by
/// `law`; otherwise the law's natural value is used (three_point requires it).
MomentProfile make_moment_profile(int beta, EntryLaw law, double m2,
                                  std::optional<double> w4 = std::nullopt);

/// Full recipe for one random matrix draw.
struct EnsembleSpec {
  EnsembleKind kind = EnsembleKind::deformed_wigner;
  std::size_t n = 0;  // Wigner size, or number of samples (columns of X)
  std::size_t m = 0;  // sample covariance only: dimension (rows of X)
  MomentProfile profile;
  AtomicMeasure deformation;  // mu_A or mu_Sigma
  std::uint64_t seed = 0;

  /// M / N for sample covariance, 0 otherwise.
  double gamma() const;
  /// Side length of the sampled matrix (N or M).
  std::size_t dimension() const;
  /// Throws UsageError / ModelError when the spec cannot be sampled.
  void validate() const;
  EnsembleSpec with_seed(std::uint64_t s) const;
};

struct RegularityReport {
  bool ok = false;
  double infimum = 0.0;  // may be +inf for a single atom
  double margin = 0.0;   // infimum - threshold
  double argmin = 0.0;
  bool hard_edge = false;  // sample covariance with gamma == 1
};

/// Single-interval / square-root-edge condition on the deformation.
/// Deformed Wigner: inf over the hull of supp(mu) of int (a-x)^-2 dmu vs 1.
/// Sample covariance: inf over [1/sigma_max, 1/sigma_min] of
/// int (tx/(1-tx))^2 dmu vs 1/gamma.
RegularityReport check_regularity(const AtomicMeasure& mu, EnsembleKind kind,
                                  std::optional<double> gamma = std::nullopt);

using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;
using SelfAdjointMatrix = std::variant<RealMatrix, ComplexMatrix>;

/// Deterministic in (spec, spec.seed). Deformed Wigner returns H + A,
/// sample covariance returns Sigma^{1/2} X X^T Sigma^{1/2} (M x M).
SelfAdjointMatrix sample_matrix(const EnsembleSpec& spec);

}  // namespace mesorm
