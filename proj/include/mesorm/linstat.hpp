#pragma once

#include "mesorm/freeconv.hpp"
#include "mesorm/spectra.hpp"
#include "mesorm/testfunction.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace mesorm {

/// Sorted real spectrum of one matrix draw.
struct SpectrumSample {
  std::vector<double> eigenvalues;
  std::uint64_t spec_hash = 0;

  std::size_t size() const { return eigenvalues.size(); }
};

/// Canonical JSON description of a spec (seed included).
nlohmann::json spec_fingerprint(const EnsembleSpec& spec);
/// FNV-1a over `spec_fingerprint(spec).dump()`.
std::uint64_t spec_hash(const EnsembleSpec& spec);
std::uint64_t fnv1a(std::string_view bytes);

/// Dense symmetric / Hermitian eigenvalues (no eigenvectors). The trace and
/// Frobenius norm of the input are checked against the returned spectrum.
SpectrumSample eigenvalues(const SelfAdjointMatrix& matrix, std::uint64_t hash = 0);
SpectrumSample eigenvalues(const RealMatrix& matrix, std::uint64_t hash = 0);
SpectrumSample eigenvalues(const ComplexMatrix& matrix, std::uint64_t hash = 0);

/// sample_matrix + eigenvalues, tagged with spec_hash(spec).
SpectrumSample sample_spectrum(const EnsembleSpec& spec);

/// ||H v - lambda v|| for the eigenvector of H nearest `lambda`, found by
/// inverse iteration. Diagnostic; costs one LU factorization.
double eigenpair_residual(const RealMatrix& matrix, double lambda);

/// sum_i g((lambda_i - E0) / eta0) over the sorted spectrum.
double linear_statistic(const SpectrumSample& s, const ScaledTestFunction& tf);
double linear_statistic(std::span<const double> eigenvalues, const ScaledTestFunction& tf);

/// n int f(x) rho(x) dx for the limiting law of `model` (plus the atom at 0
/// of mass 1 - 1/gamma for sample covariance with gamma > 1).
double centering_integral(const FreeConvolutionModel& model, const ScaledTestFunction& tf,
                          std::size_t n);
/// int_a^b f rho dx with square-root substitution at the support edges.
double density_integral(const FreeConvolutionModel& model, const std::function<double(double)>& f,
                        double a, double b, std::span<const double> cuts, double tol);

/// (1/n) sum 1/(lambda_i - z).
cplx empirical_stieltjes(std::span<const double> eigenvalues, cplx z);
/// max over z of |m_N(z) - m(z)| N Im z.
double local_law_residual(const SpectrumSample& s, const FreeConvolutionModel& model,
                          std::span<const cplx> grid);
/// Bulk grid of `points` energies strictly inside the support at height eta.
std::vector<cplx> bulk_grid(const FreeConvolutionModel& model, int points, double eta);

/// gamma_i with int_{-inf}^{gamma_i} rho = (i - 1/2) / n.
std::vector<double> classical_locations(const FreeConvolutionModel& model, std::size_t n);

void export_spectrum_csv(const SpectrumSample& s, const std::filesystem::path& path);
void export_spectrum_binary(const SpectrumSample& s, const std::filesystem::path& path);
/// Reads either format (binary is recognized by its magic).
SpectrumSample import_spectrum(const std::filesystem::path& path);

}  // namespace mesorm
