#include "nclab/probes.hpp"

#include "nclab/errors.hpp"
#include "nclab/stats.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace nclab {

namespace {

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& z) {
  // exp of a non-positive argument only.
  return z.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

void check_targets(const Eigen::Ref<const Eigen::VectorXi>& targets, Index rows) {
  if (targets.size() != rows) throw ContractError("target count does not match input rows");
  if (((targets.array() != 0) && (targets.array() != 1)).any()) {
    throw ContractError("probe targets must be binary");
  }
}

void require_disjoint(const std::vector<Index>& a, const std::vector<Index>& b) {
  std::vector<Index> sa = a, sb = b, common;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
  if (!common.empty()) throw ContractError("probe train and evaluation indices overlap");
}

}  // namespace

Eigen::VectorXd ProbeModel::scores(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const {
  if (inputs.cols() != weights.size()) throw ContractError("probe input width mismatch");
  return sigmoid(((inputs * weights).array() + bias)).matrix();
}

ProbeLossAndGradient probe_loss_and_gradient(const ProbeModel& probe,
                                             const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                             const Eigen::Ref<const Eigen::VectorXi>& targets) {
  if (inputs.rows() == 0) throw ContractError("empty probe batch");
  if (inputs.cols() != probe.weights.size()) throw ContractError("probe input width mismatch");
  check_targets(targets, inputs.rows());
  const Eigen::ArrayXd z = (inputs * probe.weights).array() + probe.bias;
  const Eigen::ArrayXd y = targets.cast<double>().array();
  const auto m = static_cast<double>(inputs.rows());

  ProbeLossAndGradient out;
  double loss = 0.0;
  for (Index i = 0; i < z.size(); ++i) loss += softplus(z[i]) - y[i] * z[i];
  out.loss = loss / m;
  const Eigen::VectorXd residual = (sigmoid(z) - y).matrix() / m;
  out.weight_gradient = inputs.transpose() * residual;
  out.bias_gradient = residual.sum();
  return out;
}

ProbeModel train_linear_probe(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                              const Eigen::Ref<const Eigen::VectorXi>& targets, const ProbeHyper& hyper,
                              std::uint64_t /*seed*/) {
  check_targets(targets, inputs.rows());
  if (!inputs.allFinite()) throw NumericError("non-finite probe input");
  const auto positives = (targets.array() == 1).count();
  if (positives == 0 || positives == targets.size()) {
    throw DegenerateError("probe targets take a single value");
  }
  if (hyper.max_iterations < 1) throw ConfigError("probe max_iterations must be >= 1");

  const Index m = inputs.rows();
  const Index q = inputs.cols();
  const Eigen::RowVectorXd mean = inputs.colwise().mean();
  Eigen::RowVectorXd scale = ((inputs.rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Index c = 0; c < q; ++c) {
    if (!(scale[c] > 1e-12)) scale[c] = 1.0;
  }
  const Eigen::MatrixXd z = (inputs.rowwise() - mean).array().rowwise() / scale.array();

  double step = hyper.learning_rate;
  if (step <= 0.0) {
    // The mean logistic loss is (1/4) lambda_max([z 1]^T [z 1] / m)-smooth.
    Eigen::MatrixXd augmented(m, q + 1);
    augmented << z, Eigen::VectorXd::Ones(m);
    const Eigen::MatrixXd gram = augmented.transpose() * augmented / static_cast<double>(m);
    const double lambda_max = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                                  .eigenvalues()
                                  .maxCoeff();
    step = 4.0 / lambda_max;
  }

  ProbeModel standardized{Eigen::VectorXd::Zero(q), 0.0};
  for (Index it = 0; it < hyper.max_iterations; ++it) {
    const ProbeLossAndGradient lg = probe_loss_and_gradient(standardized, z, targets);
    const double grad_norm = std::sqrt(lg.weight_gradient.squaredNorm() + lg.bias_gradient * lg.bias_gradient);
    if (grad_norm < hyper.gradient_tolerance) break;
    standardized.weights -= step * lg.weight_gradient;
    standardized.bias -= step * lg.bias_gradient;
  }

  ProbeModel probe;
  probe.weights = standardized.weights.array() / scale.transpose().array();
  probe.bias = standardized.bias - mean.dot(probe.weights);
  return probe;
}

double split_test(const ModelState& model, const Dataset& ds, const SplitAssignment& splits,
                  const ProbeHyper& hyper, std::uint64_t seed) {
  require_disjoint(splits.train, splits.test);
  const Dataset fit = ds.subset(splits.train);
  const Dataset eval = ds.subset(splits.test);
  const ProbeModel probe = train_linear_probe(forward(model, fit.samples).features, fit.groups, hyper, seed);
  return roc_auc(probe.scores(forward(model, eval.samples).features), eval.groups);
}

std::string_view to_string(RawProbeKind kind) { return kind == RawProbeKind::mlp ? "mlp" : "linear"; }

RawProbeKind raw_probe_kind_from_string(std::string_view name) {
  if (name == "mlp") return RawProbeKind::mlp;
  if (name == "linear") return RawProbeKind::linear;
  throw ConfigError("unknown raw probe kind '" + std::string(name) + "'");
}

double raw_data_probe(const Dataset& ds, const SplitAssignment& splits, Architecture arch,
                      const TrainHyper& hyper, std::uint64_t seed, RawProbeKind kind,
                      const ProbeHyper& linear_hyper) {
  require_disjoint(splits.train, splits.test);
  const Dataset fit = ds.subset(splits.train);
  const Dataset eval = ds.subset(splits.test);
  if (kind == RawProbeKind::linear) {
    const ProbeModel probe = train_linear_probe(fit.samples, fit.groups, linear_hyper, seed);
    return roc_auc(probe.scores(eval.samples), eval.groups);
  }

  require_disjoint(splits.val, splits.test);
  const Dataset val = ds.subset(splits.val);
  if ((fit.groups.array() == fit.groups[0]).all()) throw DegenerateError("probe targets take a single value");
  arch.input_dim = ds.dim();
  arch.num_classes = 2;
  TrainHyper h = hyper;
  h.seed = derive_seed(seed, 1);
  TrainResult result = train(init_model(arch, derive_seed(seed, 0)), fit.samples, fit.groups, val.samples,
                             val.groups, h);
  return roc_auc(predict(result.early_stopped, eval.samples).positive_scores, eval.groups);
}

}  // namespace nclab
