#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nclab {

using Index = Eigen::Index;

// Binary-class, binary-group dataset. Rows of `samples` are observations.
// label 0 = negative, 1 = positive. `clean_labels` keeps the pre-flip truth.
struct Dataset {
  Eigen::MatrixXd samples;
  Eigen::VectorXi labels;
  Eigen::VectorXi clean_labels;
  Eigen::VectorXi groups;

  Index size() const { return samples.rows(); }
  Index dim() const { return samples.cols(); }

  // Throws ContractError when lengths disagree, values are not binary, or a
  // label differs from its clean label other than as a 1 -> 0 flip.
  void validate() const;

  Dataset subset(std::span<const Index> indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Cell (class k, group a) is an isotropic Gaussian centred at
//   x[0] = (k - 1/2) * class_mean_separation
//   x[1] = (a - 1/2) * group_shift
// with every other coordinate zero.
struct GenConfig {
  Index n_per_cell = 500;
  Index dim = 2;
  double class_mean_separation = 4.0;
  double group_shift = 2.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  Eigen::VectorXd cell_mean(int label, int group) const;
};

struct FlipRecord {
  std::vector<Index> flipped_indices;
  int target_group = 1;
  double fraction = 0.0;
};

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  void validate() const;
};

struct SplitAssignment {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
  std::vector<std::string> warnings;
};

// Samples are emitted cell by cell: (0,0), (0,1), (1,0), (1,1).
Dataset generate_gaussian_mixture(const GenConfig& cfg);

// Flips round-half-up(fraction * P) of the P positives of `target_group`
// (restricted to `eligible` when given) from label 1 to 0.
std::pair<Dataset, FlipRecord> inject_label_bias(const Dataset& ds, int target_group,
                                                 double fraction, std::uint64_t seed);
std::pair<Dataset, FlipRecord> inject_label_bias(const Dataset& ds, int target_group,
                                                 double fraction, std::uint64_t seed,
                                                 std::span<const Index> eligible);

// Stratified on (clean label, group); each cell is partitioned with
// largest-remainder rounding. Index lists come back sorted ascending.
SplitAssignment split_dataset(const Dataset& ds, const SplitFractions& fractions,
                              std::uint64_t seed);

// Header: f0..f{d-1},label,group[,clean_label] (column order free).
Dataset load_csv_dataset(const std::filesystem::path& path);
void write_csv_dataset(const Dataset& ds, const std::filesystem::path& path);

// Independent stream for `stream` derived from a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace nclab
