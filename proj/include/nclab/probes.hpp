#pragma once

#include "nclab/datagen.hpp"
#include "nclab/nnet.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string_view>

namespace nclab {

// Logistic-regression probe: score(x) = sigmoid(<weights, x> + bias).
struct ProbeModel {
  Eigen::VectorXd weights;
  double bias = 0.0;

  Eigen::VectorXd scores(const Eigen::Ref<const Eigen::MatrixXd>& inputs) const;
};

struct ProbeHyper {
  Index max_iterations = 5000;
  double gradient_tolerance = 1e-6;
  // Step size on standardised inputs; 0 selects 1/L from the loss curvature bound.
  double learning_rate = 0.0;
};

struct ProbeLossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd weight_gradient;
  double bias_gradient = 0.0;
};

// Mean logistic loss of the probe on (inputs, targets) and its gradient.
ProbeLossAndGradient probe_loss_and_gradient(const ProbeModel& probe,
                                             const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                             const Eigen::Ref<const Eigen::VectorXi>& targets);

// Full-batch gradient descent from zero on z-scored inputs; the returned
// probe acts on the original inputs. `seed` is accepted for interface
// symmetry: zero initialisation with full batches uses no randomness.
ProbeModel train_linear_probe(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                              const Eigen::Ref<const Eigen::VectorXi>& targets, const ProbeHyper& hyper,
                              std::uint64_t seed = 0);

// Group-attribute probe on penultimate features: fitted on the train split,
// scored by ROC-AUC on the test split.
double split_test(const ModelState& model, const Dataset& ds, const SplitAssignment& splits,
                  const ProbeHyper& hyper = {}, std::uint64_t seed = 0);

enum class RawProbeKind { mlp, linear };
std::string_view to_string(RawProbeKind kind);
RawProbeKind raw_probe_kind_from_string(std::string_view name);

// Group-attribute predictor on raw inputs (held-out ROC-AUC). The MLP variant
// uses `arch` with the dataset's input width, trains on the train split and
// keeps the best-validation-loss state.
double raw_data_probe(const Dataset& ds, const SplitAssignment& splits, Architecture arch,
                      const TrainHyper& hyper, std::uint64_t seed,
                      RawProbeKind kind = RawProbeKind::mlp, const ProbeHyper& linear_hyper = {});

}  // namespace nclab
