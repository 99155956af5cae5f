#pragma once

#include <Eigen/Core>

#include <optional>
#include <string_view>

namespace nclab {

// Probability that a random positive outscores a random negative; ties count
// one half. Throws DegenerateError when a class is absent.
double roc_auc(const Eigen::Ref<const Eigen::VectorXd>& scores,
               const Eigen::Ref<const Eigen::VectorXi>& labels);

// F1 of the positive class (label 1). Empty when there are neither actual nor
// predicted positives, where the score is undefined.
std::optional<double> f1_score(const Eigen::Ref<const Eigen::VectorXi>& predicted,
                               const Eigen::Ref<const Eigen::VectorXi>& actual);

// Kendall tau-b. Empty when either vector is constant.
std::optional<double> kendall_tau(const Eigen::Ref<const Eigen::VectorXd>& xs,
                                  const Eigen::Ref<const Eigen::VectorXd>& ys);

enum class UTestMethod { exact, normal_approx };
std::string_view to_string(UTestMethod method);

struct UTestResult {
  double u_statistic = 0.0;  // U of the first sample
  double u_other = 0.0;      // U of the second sample; u_statistic + u_other = n * m
  double p_value = 1.0;      // two-sided
  UTestMethod method = UTestMethod::exact;
};

// Two-sided Mann-Whitney U. Exact null distribution when both samples have at
// most `kExactLimit` elements and there are no ties; otherwise the normal
// approximation with tie and continuity corrections.
UTestResult mann_whitney_u(const Eigen::Ref<const Eigen::VectorXd>& sample_a,
                           const Eigen::Ref<const Eigen::VectorXd>& sample_b);

inline constexpr Eigen::Index kExactLimit = 12;

// Midranks (1-based) of a sample.
Eigen::VectorXd midranks(const Eigen::Ref<const Eigen::VectorXd>& values);

}  // namespace nclab
