#include "nclab/collapse.hpp"

namespace nclab {

namespace {

template <typename F>
double or_nan(F&& f, const char* name, std::vector<std::string>& warnings) {
  try {
    return f();
  } catch (const DegenerateError& e) {
    warnings.push_back(std::string(name) + ": " + e.what());
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

NCReport nc_report(const FeatureBatch& fb, const Eigen::Ref<const Eigen::MatrixXd>& classifier_weights,
                   Index num_classes) {
  const auto stats = class_statistics(fb.features, fb.labels, num_classes);
  NCReport report;
  report.nc1_global = nc1_variability(fb.features, fb.labels, stats);

  auto per_group = nc1_per_group(fb.features, fb.labels, fb.groups, stats);
  report.nc1_per_group = std::move(per_group.value);
  report.warnings = std::move(per_group.warnings);

  double weighted = 0.0;
  for (const auto& [a, s_a] : report.nc1_per_group) {
    const auto n_a = (fb.groups.array() == a).count();
    weighted += static_cast<double>(n_a) / static_cast<double>(fb.size()) * s_a;
  }
  report.group_identity_residual = std::abs(weighted - report.nc1_global);

  report.nc2_equinorm = or_nan([&] { return nc2_equinorm(stats); }, "nc2_equinorm", report.warnings);
  report.nc2_equiangular =
      or_nan([&] { return nc2_equiangularity(stats); }, "nc2_equiangular", report.warnings);
  if (classifier_weights.size() == 0) {
    report.nc3_selfdual = report.nc4_mismatch = std::numeric_limits<double>::quiet_NaN();
    report.warnings.push_back("no classifier weights: nc3_selfdual and nc4_mismatch undefined");
  } else {
    report.nc3_selfdual =
        or_nan([&] { return nc3_self_duality(stats, classifier_weights); }, "nc3_selfdual", report.warnings);
    report.nc4_mismatch = nc4_mismatch(fb.features, stats, classifier_weights);
  }

  const auto gstats = group_class_statistics(fb.features, fb.labels, fb.groups, num_classes);
  report.warnings.insert(report.warnings.end(), gstats.warnings.begin(), gstats.warnings.end());
  report.config_divergence = or_nan(
      [&] {
        auto d = nc_configuration_distance(gstats);
        report.warnings.insert(report.warnings.end(), d.warnings.begin(), d.warnings.end());
        return d.value;
      },
      "config_divergence", report.warnings);
  return report;
}

}  // namespace nclab
