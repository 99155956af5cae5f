#pragma once

// Neural Collapse geometry of penultimate features.
//
// All functions are templated on the feature scalar and accept any dense
// Eigen expression. Class means are plain empirical means; the global mean is
// the unweighted mean of class means, so with K = 2 the two centred means are
// always antipodal and the NC2 metrics vanish identically.

#include "nclab/errors.hpp"
#include "nclab/nnet.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace nclab {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename T>
struct Warned {
  T value;
  std::vector<std::string> warnings;
};

template <typename Scalar>
struct ClassStatistics {
  MatrixX<Scalar> class_means;       // K x p, row k = mu_k
  std::vector<Index> class_counts;   // n_k
  VectorX<Scalar> global_mean;       // mu_G
  MatrixX<Scalar> normalized_means;  // row k = (mu_k - mu_G) / ||mu_k - mu_G||, zero if degenerate
  std::vector<bool> degenerate;      // centred mean is (numerically) zero

  Index num_classes() const { return class_means.rows(); }
  Index feature_dim() const { return class_means.cols(); }
  bool any_degenerate() const {
    for (bool d : degenerate) {
      if (d) return true;
    }
    return false;
  }
  MatrixX<Scalar> centered_means() const {
    return class_means.rowwise() - global_mean.transpose();
  }
};

template <typename Scalar>
struct GroupClassStatistics {
  struct Cell {
    VectorX<Scalar> mean;
    Index count = 0;
  };
  std::map<std::pair<int, int>, Cell> cells;  // keyed by (class, group)
  Index num_classes = 2;
  int num_groups = 2;
  std::vector<std::string> warnings;

  const Cell* find(int label, int group) const {
    const auto it = cells.find({label, group});
    return it == cells.end() ? nullptr : &it->second;
  }
};

namespace detail {

inline void check_labels(const Eigen::Ref<const Eigen::VectorXi>& labels, Index rows, Index num_classes) {
  if (labels.size() != rows) throw ContractError("label count does not match feature rows");
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ContractError("label " + std::to_string(labels[i]) + " outside 0.." +
                          std::to_string(num_classes - 1));
    }
  }
}

template <typename Derived>
void check_against(const Eigen::MatrixBase<Derived>& features,
                   const Eigen::Ref<const Eigen::VectorXi>& labels,
                   const ClassStatistics<typename Derived::Scalar>& stats) {
  if (features.cols() != stats.feature_dim()) {
    throw ContractError("feature width does not match class statistics");
  }
  check_labels(labels, features.rows(), stats.num_classes());
  std::vector<Index> counts(static_cast<std::size_t>(stats.num_classes()), 0);
  for (Index i = 0; i < labels.size(); ++i) ++counts[static_cast<std::size_t>(labels[i])];
  if (counts != stats.class_counts) {
    throw ContractError("class statistics were computed from a different label set");
  }
}

template <typename Scalar, typename Derived>
Index argmax_row(const Eigen::MatrixBase<Derived>& row) {
  Index best = 0;
  for (Index k = 1; k < row.size(); ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

}  // namespace detail

template <typename Derived>
ClassStatistics<typename Derived::Scalar> class_statistics(
    const Eigen::MatrixBase<Derived>& features, const Eigen::Ref<const Eigen::VectorXi>& labels,
    Index num_classes = 2) {
  using Scalar = typename Derived::Scalar;
  if (num_classes < 2) throw ContractError("at least two classes are required");
  detail::check_labels(labels, features.rows(), num_classes);

  ClassStatistics<Scalar> stats;
  const Index p = features.cols();
  stats.class_means = MatrixX<Scalar>::Zero(num_classes, p);
  stats.class_counts.assign(static_cast<std::size_t>(num_classes), 0);
  for (Index i = 0; i < features.rows(); ++i) {
    stats.class_means.row(labels[i]) += features.row(i);
    ++stats.class_counts[static_cast<std::size_t>(labels[i])];
  }
  for (Index k = 0; k < num_classes; ++k) {
    const Index n_k = stats.class_counts[static_cast<std::size_t>(k)];
    if (n_k == 0) throw DegenerateError("class " + std::to_string(k) + " has no samples");
    stats.class_means.row(k) /= static_cast<Scalar>(n_k);
  }
  stats.global_mean = stats.class_means.colwise().mean().transpose();

  const MatrixX<Scalar> centered = stats.centered_means();
  const Scalar scale = stats.class_means.rowwise().norm().maxCoeff();
  const Scalar tolerance = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale;
  stats.normalized_means = MatrixX<Scalar>::Zero(num_classes, p);
  stats.degenerate.assign(static_cast<std::size_t>(num_classes), false);
  for (Index k = 0; k < num_classes; ++k) {
    const Scalar norm = centered.row(k).norm();
    if (norm <= tolerance) {
      stats.degenerate[static_cast<std::size_t>(k)] = true;
    } else {
      stats.normalized_means.row(k) = centered.row(k) / norm;
    }
  }
  return stats;
}

// NC1: mean distance of each feature to its own class mean.
template <typename Derived>
typename Derived::Scalar nc1_variability(const Eigen::MatrixBase<Derived>& features,
                                         const Eigen::Ref<const Eigen::VectorXi>& labels,
                                         const ClassStatistics<typename Derived::Scalar>& stats) {
  using Scalar = typename Derived::Scalar;
  detail::check_against(features, labels, stats);
  Scalar total(0);
  for (Index i = 0; i < features.rows(); ++i) {
    total += (features.row(i) - stats.class_means.row(labels[i])).norm();
  }
  return total / static_cast<Scalar>(features.rows());
}

// Per-group NC1 against the shared class means. Groups without samples are
// left out of the map and reported as warnings.
template <typename Derived>
Warned<std::map<int, typename Derived::Scalar>> nc1_per_group(
    const Eigen::MatrixBase<Derived>& features, const Eigen::Ref<const Eigen::VectorXi>& labels,
    const Eigen::Ref<const Eigen::VectorXi>& groups,
    const ClassStatistics<typename Derived::Scalar>& stats, int num_groups = 2) {
  using Scalar = typename Derived::Scalar;
  detail::check_against(features, labels, stats);
  if (groups.size() != features.rows()) throw ContractError("group count does not match feature rows");

  std::vector<Scalar> sums(static_cast<std::size_t>(num_groups), Scalar(0));
  std::vector<Index> counts(static_cast<std::size_t>(num_groups), 0);
  for (Index i = 0; i < features.rows(); ++i) {
    const int a = groups[i];
    if (a < 0 || a >= num_groups) throw ContractError("group " + std::to_string(a) + " out of range");
    sums[static_cast<std::size_t>(a)] += (features.row(i) - stats.class_means.row(labels[i])).norm();
    ++counts[static_cast<std::size_t>(a)];
  }
  Warned<std::map<int, Scalar>> out;
  for (int a = 0; a < num_groups; ++a) {
    const auto n_a = counts[static_cast<std::size_t>(a)];
    if (n_a == 0) {
      out.warnings.push_back("group " + std::to_string(a) + " has no samples");
      continue;
    }
    out.value[a] = sums[static_cast<std::size_t>(a)] / static_cast<Scalar>(n_a);
  }
  return out;
}

// NC2 equinorm: coefficient of variation (population std / mean) of the
// centred class-mean norms.
template <typename Scalar>
Scalar nc2_equinorm(const ClassStatistics<Scalar>& stats) {
  const VectorX<Scalar> norms = stats.centered_means().rowwise().norm();
  const Scalar mean = norms.mean();
  if (!(mean > Scalar(0))) throw DegenerateError("all centred class means are zero");
  const Scalar var = (norms.array() - mean).square().mean();
  return std::sqrt(var) / mean;
}

// NC2 equiangularity: mean over class pairs of |cos(k, k') + 1/(K-1)|.
template <typename Scalar>
Scalar nc2_equiangularity(const ClassStatistics<Scalar>& stats) {
  if (stats.any_degenerate()) throw DegenerateError("a centred class mean is zero");
  const Index K = stats.num_classes();
  const MatrixX<Scalar> gram = stats.normalized_means * stats.normalized_means.transpose();
  const Scalar target = Scalar(-1) / static_cast<Scalar>(K - 1);
  Scalar total(0);
  Index pairs = 0;
  for (Index k = 0; k < K; ++k) {
    for (Index j = k + 1; j < K; ++j, ++pairs) total += std::abs(gram(k, j) - target);
  }
  return total / static_cast<Scalar>(pairs);
}

// NC3: Frobenius distance between the normalised centred-mean matrix and the
// normalised classifier weights. Ranges over [0, 2].
template <typename Scalar, typename Derived>
Scalar nc3_self_duality(const ClassStatistics<Scalar>& stats,
                        const Eigen::MatrixBase<Derived>& classifier_weights) {
  if (classifier_weights.rows() != stats.num_classes() ||
      classifier_weights.cols() != stats.feature_dim()) {
    throw ContractError("classifier weights must be K x p");
  }
  const MatrixX<Scalar> centered = stats.centered_means();
  const Scalar m_norm = centered.norm();
  const Scalar w_norm = classifier_weights.norm();
  if (!(m_norm > Scalar(0))) throw DegenerateError("centred class means are all zero");
  if (!(w_norm > Scalar(0))) throw DegenerateError("classifier weights are zero");
  return (centered / m_norm - classifier_weights / w_norm).norm();
}

template <typename Scalar>
Scalar nc3_self_duality(const ClassStatistics<Scalar>& stats, const ModelState& model) {
  return nc3_self_duality(stats, model.classifier_weights.cast<Scalar>());
}

// NC4: fraction of samples where argmax_k <h, w_k> (bias excluded) differs from
// argmin_k ||h - mu_k||. Ties go to the lower class index on both sides.
template <typename Derived, typename WDerived>
typename Derived::Scalar nc4_mismatch(const Eigen::MatrixBase<Derived>& features,
                                      const ClassStatistics<typename Derived::Scalar>& stats,
                                      const Eigen::MatrixBase<WDerived>& classifier_weights) {
  using Scalar = typename Derived::Scalar;
  if (features.rows() == 0) throw ContractError("no samples");
  if (features.cols() != stats.feature_dim() || classifier_weights.cols() != stats.feature_dim() ||
      classifier_weights.rows() != stats.num_classes()) {
    throw ContractError("feature, mean and classifier shapes disagree");
  }
  Index mismatches = 0;
  for (Index i = 0; i < features.rows(); ++i) {
    const VectorX<Scalar> scores = classifier_weights * features.row(i).transpose();
    const VectorX<Scalar> dist = (stats.class_means.rowwise() - features.row(i)).rowwise().squaredNorm();
    Index nearest = 0;
    for (Index k = 1; k < dist.size(); ++k) {
      if (dist[k] < dist[nearest]) nearest = k;
    }
    if (detail::argmax_row<Scalar>(scores) != nearest) ++mismatches;
  }
  return static_cast<Scalar>(mismatches) / static_cast<Scalar>(features.rows());
}

template <typename Derived>
GroupClassStatistics<typename Derived::Scalar> group_class_statistics(
    const Eigen::MatrixBase<Derived>& features, const Eigen::Ref<const Eigen::VectorXi>& labels,
    const Eigen::Ref<const Eigen::VectorXi>& groups, Index num_classes = 2, int num_groups = 2) {
  using Scalar = typename Derived::Scalar;
  detail::check_labels(labels, features.rows(), num_classes);
  if (groups.size() != features.rows()) throw ContractError("group count does not match feature rows");

  GroupClassStatistics<Scalar> out;
  out.num_classes = num_classes;
  out.num_groups = num_groups;
  for (Index i = 0; i < features.rows(); ++i) {
    const int a = groups[i];
    if (a < 0 || a >= num_groups) throw ContractError("group " + std::to_string(a) + " out of range");
    auto [it, inserted] = out.cells.try_emplace({labels[i], a});
    if (inserted) it->second.mean = VectorX<Scalar>::Zero(features.cols());
    it->second.mean += features.row(i).transpose();
    ++it->second.count;
  }
  for (auto& [key, cell] : out.cells) cell.mean /= static_cast<Scalar>(cell.count);
  for (int k = 0; k < num_classes; ++k) {
    for (int a = 0; a < num_groups; ++a) {
      if (!out.find(k, a)) {
        out.warnings.push_back("cell (class " + std::to_string(k) + ", group " + std::to_string(a) +
                               ") is empty");
      }
    }
  }
  return out;
}

// Mean over classes of ||mu_{k,0} - mu_{k,1}||. Classes missing either cell
// are skipped with a warning.
template <typename Scalar>
Warned<Scalar> nc_configuration_distance(const GroupClassStatistics<Scalar>& gstats) {
  Warned<Scalar> out{Scalar(0), {}};
  Index used = 0;
  for (int k = 0; k < gstats.num_classes; ++k) {
    const auto* c0 = gstats.find(k, 0);
    const auto* c1 = gstats.find(k, 1);
    if (!c0 || !c1) {
      out.warnings.push_back("class " + std::to_string(k) + " lacks a group cell; excluded");
      continue;
    }
    out.value += (c0->mean - c1->mean).norm();
    ++used;
  }
  if (used == 0) throw DegenerateError("no class has samples in both groups");
  out.value /= static_cast<Scalar>(used);
  return out;
}

// All metrics at one checkpoint. Metrics that are undefined for the input are
// NaN and explained in `warnings`.
struct NCReport {
  double nc1_global = 0.0;
  std::map<int, double> nc1_per_group;
  double nc2_equinorm = 0.0;
  double nc2_equiangular = 0.0;
  double nc3_selfdual = 0.0;
  double nc4_mismatch = 0.0;
  double config_divergence = 0.0;
  // |sum_a (n_a / n) S_a - S|
  double group_identity_residual = 0.0;
  std::vector<std::string> warnings;

  double nc1_group(int a) const {
    const auto it = nc1_per_group.find(a);
    return it == nc1_per_group.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
  }
};

// An empty weight matrix skips NC3 and NC4.
NCReport nc_report(const FeatureBatch& fb, const Eigen::Ref<const Eigen::MatrixXd>& classifier_weights,
                   Index num_classes = 2);

}  // namespace nclab
