#include "nclab/datagen.hpp"

#include "nclab/csv.hpp"
#include "nclab/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace nclab {

namespace {

bool is_binary(int v) { return v == 0 || v == 1; }

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void Dataset::validate() const {
  const Index n = samples.rows();
  if (labels.size() != n || clean_labels.size() != n || groups.size() != n) {
    throw ContractError("dataset columns have inconsistent lengths");
  }
  for (Index i = 0; i < n; ++i) {
    if (!is_binary(labels[i]) || !is_binary(clean_labels[i])) {
      throw ContractError("label of sample " + std::to_string(i) + " is not binary");
    }
    if (!is_binary(groups[i])) {
      throw ContractError("group of sample " + std::to_string(i) + " is not binary");
    }
    if (labels[i] != clean_labels[i] && !(labels[i] == 0 && clean_labels[i] == 1)) {
      throw ContractError("sample " + std::to_string(i) + " has a flip other than 1 -> 0");
    }
  }
}

Dataset Dataset::subset(std::span<const Index> indices) const {
  Dataset out;
  const auto m = static_cast<Index>(indices.size());
  out.samples.resize(m, dim());
  out.labels.resize(m);
  out.clean_labels.resize(m);
  out.groups.resize(m);
  for (Index r = 0; r < m; ++r) {
    const Index i = indices[static_cast<std::size_t>(r)];
    if (i < 0 || i >= size()) throw ContractError("subset index out of range");
    out.samples.row(r) = samples.row(i);
    out.labels[r] = labels[i];
    out.clean_labels[r] = clean_labels[i];
    out.groups[r] = groups[i];
  }
  return out;
}

void GenConfig::validate() const {
  if (n_per_cell < 1) throw ConfigError("n_per_cell must be >= 1");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (!(noise_sd > 0.0) || !std::isfinite(noise_sd)) throw ConfigError("noise_sd must be > 0");
  if (!(class_mean_separation > 0.0) || !std::isfinite(class_mean_separation)) {
    throw ConfigError("class_mean_separation must be > 0");
  }
  if (!(group_shift >= 0.0) || !std::isfinite(group_shift)) {
    throw ConfigError("group_shift must be >= 0");
  }
  if (dim < 2 && group_shift != 0.0) throw ConfigError("group_shift needs dim >= 2");
}

Eigen::VectorXd GenConfig::cell_mean(int label, int group) const {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  mean[0] = (label - 0.5) * class_mean_separation;
  if (dim >= 2) mean[1] = (group - 0.5) * group_shift;
  return mean;
}

void SplitFractions::validate() const {
  for (double f : {train, val, test}) {
    if (!(f >= 0.0) || f > 1.0) throw ConfigError("split fractions must lie in [0, 1]");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

Dataset generate_gaussian_mixture(const GenConfig& cfg) {
  cfg.validate();
  const Index n = 4 * cfg.n_per_cell;
  Dataset ds;
  ds.samples.resize(n, cfg.dim);
  ds.labels.resize(n);
  ds.groups.resize(n);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, cfg.noise_sd);
  Index row = 0;
  for (int label : {0, 1}) {
    for (int group : {0, 1}) {
      const Eigen::RowVectorXd mean = cfg.cell_mean(label, group).transpose();
      for (Index i = 0; i < cfg.n_per_cell; ++i, ++row) {
        for (Index c = 0; c < cfg.dim; ++c) ds.samples(row, c) = mean[c] + normal(rng);
        ds.labels[row] = label;
        ds.groups[row] = group;
      }
    }
  }
  ds.clean_labels = ds.labels;
  return ds;
}

std::pair<Dataset, FlipRecord> inject_label_bias(const Dataset& ds, int target_group,
                                                 double fraction, std::uint64_t seed) {
  std::vector<Index> all(static_cast<std::size_t>(ds.size()));
  std::iota(all.begin(), all.end(), Index{0});
  return inject_label_bias(ds, target_group, fraction, seed, all);
}

std::pair<Dataset, FlipRecord> inject_label_bias(const Dataset& ds, int target_group,
                                                 double fraction, std::uint64_t seed,
                                                 std::span<const Index> eligible) {
  if (!(fraction >= 0.0) || fraction > 1.0) throw ConfigError("bias fraction must lie in [0, 1]");
  if (!is_binary(target_group)) throw ConfigError("target group must be 0 or 1");

  std::vector<Index> positives;
  for (Index i : eligible) {
    if (i < 0 || i >= ds.size()) throw ContractError("eligible index out of range");
    if (ds.groups[i] == target_group && ds.labels[i] == 1) positives.push_back(i);
  }
  if (positives.empty()) {
    throw EmptyPopulationError("no positive samples in group " + std::to_string(target_group));
  }

  const auto count = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(positives.size()) + 0.5));
  std::mt19937_64 rng(seed);
  std::shuffle(positives.begin(), positives.end(), rng);
  positives.resize(count);
  std::sort(positives.begin(), positives.end());

  Dataset out = ds;
  for (Index i : positives) out.labels[i] = 0;
  return {std::move(out), FlipRecord{std::move(positives), target_group, fraction}};
}

SplitAssignment split_dataset(const Dataset& ds, const SplitFractions& fractions,
                              std::uint64_t seed) {
  fractions.validate();
  const std::array<double, 3> parts{fractions.train, fractions.val, fractions.test};
  const auto nonzero_parts = std::count_if(parts.begin(), parts.end(), [](double f) { return f > 0; });

  SplitAssignment out;
  std::array<std::vector<Index>*, 3> targets{&out.train, &out.val, &out.test};
  std::mt19937_64 rng(seed);

  for (int label : {0, 1}) {
    for (int group : {0, 1}) {
      std::vector<Index> cell;
      for (Index i = 0; i < ds.size(); ++i) {
        if (ds.clean_labels[i] == label && ds.groups[i] == group) cell.push_back(i);
      }
      if (cell.empty()) continue;
      if (static_cast<long>(cell.size()) < nonzero_parts) {
        out.warnings.push_back("cell (label " + std::to_string(label) + ", group " +
                               std::to_string(group) + ") has " + std::to_string(cell.size()) +
                               " samples for " + std::to_string(nonzero_parts) + " split parts");
      }
      std::shuffle(cell.begin(), cell.end(), rng);

      // Largest remainder; ties go to the earlier part.
      const double n = static_cast<double>(cell.size());
      std::array<std::size_t, 3> sizes{};
      std::array<double, 3> remainders{};
      std::size_t assigned = 0;
      for (std::size_t p = 0; p < 3; ++p) {
        const double quota = parts[p] * n;
        sizes[p] = static_cast<std::size_t>(std::floor(quota));
        remainders[p] = quota - std::floor(quota);
        assigned += sizes[p];
      }
      std::array<std::size_t, 3> order{0, 1, 2};
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
      for (std::size_t k = 0; assigned < cell.size(); ++k, ++assigned) ++sizes[order[k % 3]];

      std::size_t offset = 0;
      for (std::size_t p = 0; p < 3; ++p) {
        targets[p]->insert(targets[p]->end(), cell.begin() + static_cast<long>(offset),
                           cell.begin() + static_cast<long>(offset + sizes[p]));
        offset += sizes[p];
      }
    }
  }
  for (auto* t : targets) std::sort(t->begin(), t->end());
  return out;
}

Dataset load_csv_dataset(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  const std::size_t label_col = table.column("label");
  const std::size_t group_col = table.column("group");
  const bool has_clean = table.has_column("clean_label");

  std::vector<std::size_t> feature_cols;
  while (table.has_column("f" + std::to_string(feature_cols.size()))) {
    feature_cols.push_back(table.column("f" + std::to_string(feature_cols.size())));
  }
  if (feature_cols.empty()) throw ParseError("no feature columns f0.. in header", 1);
  const std::size_t expected = feature_cols.size() + 2 + (has_clean ? 1 : 0);
  if (table.header.size() != expected) {
    throw ParseError("unexpected columns in header; expected f0..f" +
                         std::to_string(feature_cols.size() - 1) + ",label,group[,clean_label]",
                     1);
  }

  const auto n = static_cast<Index>(table.rows.size());
  Dataset ds;
  ds.samples.resize(n, static_cast<Index>(feature_cols.size()));
  ds.labels.resize(n);
  ds.clean_labels.resize(n);
  ds.groups.resize(n);
  auto binary = [](std::string_view field, std::size_t line, const char* what) {
    const long long v = csv::to_integer(field, line);
    if (v != 0 && v != 1) {
      throw ParseError(std::string(what) + " must be 0 or 1, found " + std::string(field), line);
    }
    return static_cast<int>(v);
  };
  for (Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    const std::size_t line = table.line_numbers[static_cast<std::size_t>(r)];
    for (std::size_t c = 0; c < feature_cols.size(); ++c) {
      const double v = csv::to_double(row[feature_cols[c]], line);
      if (!std::isfinite(v)) throw ParseError("non-finite feature value", line);
      ds.samples(r, static_cast<Index>(c)) = v;
    }
    ds.labels[r] = binary(row[label_col], line, "label");
    ds.groups[r] = binary(row[group_col], line, "group");
    ds.clean_labels[r] = has_clean ? binary(row[table.column("clean_label")], line, "clean_label")
                                   : ds.labels[r];
    if (ds.labels[r] != ds.clean_labels[r] && ds.labels[r] != 0) {
      throw ParseError("label/clean_label pair is not a 1 -> 0 flip", line);
    }
  }
  return ds;
}

void write_csv_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (Index c = 0; c < ds.dim(); ++c) out << 'f' << c << ',';
  out << "label,group,clean_label\n";
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index c = 0; c < ds.dim(); ++c) out << csv::format(ds.samples(i, c)) << ',';
    out << ds.labels[i] << ',' << ds.groups[i] << ',' << ds.clean_labels[i] << '\n';
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace nclab
