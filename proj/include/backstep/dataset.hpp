#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "backstep/grid.hpp"
#include "backstep/kernel_solver.hpp"
#include "backstep/operator_model.hpp"

namespace backstep {

enum class LambdaFamily { chebyshev };

// Family of reaction profiles c*cos(gamma*acos(x)) with gamma drawn uniformly
// from [gamma_lo, gamma_hi]; each sample index owns an independent stream.
struct LambdaFamilySpec {
  LambdaFamily family = LambdaFamily::chebyshev;
  double c = 50.0;
  double gamma_lo = 4.0;
  double gamma_hi = 9.0;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  int version = 1;
  std::size_t n_samples = 0;
  std::size_t n_points = 0;
  LambdaFamilySpec family;
  double split = 0.9;
  std::uint64_t seed = 0;
  std::string data_sha256;
  // Smallest C with pde_residual_sup <= C h^2 across all stored kernels.
  double residual_constant = 0.0;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

struct Dataset {
  DatasetManifest manifest;
  UniformGrid1D grid{3};
  std::vector<ReactionProfile> lambdas;
  std::vector<KernelField> kernels;
};

// The gamma draw for one sample; independent of every other index.
double sample_gamma(const LambdaFamilySpec& spec, std::size_t index);

ReactionProfile sample_lambda(const LambdaFamilySpec& spec, std::size_t index,
                              std::size_t n_points);

// Writes manifest.json and data.bin under out_dir. data.bin holds, per sample
// in index order, n_points float64 lambda values followed by the
// n_points(n_points+1)/2 float64 kernel triangle, row-major, little-endian,
// no padding.
DatasetManifest build_dataset(const LambdaFamilySpec& spec, std::size_t n_samples,
                              std::size_t n_points, const GoursatSolveOptions& options,
                              double split, const std::string& out_dir);

// Checksummed load. Version mismatch and truncation raise FormatError with
// distinct messages; content corruption at the right length raises
// ChecksumError.
Dataset load_dataset(const std::string& dir);

// Flattens into training arrays with the train/test split drawn by a shuffle
// seeded from the manifest, so every consumer sees the same partition.
TrainingSet to_training_set(const Dataset& data);

}  // namespace backstep
