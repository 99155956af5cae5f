#pragma once

#include "nclab/datagen.hpp"
#include "nclab/errors.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace nclab {

// input_dim -> hidden_widths... -> num_classes. The last hidden layer is the
// penultimate feature layer h.
struct Architecture {
  Index input_dim = 2;
  std::vector<Index> hidden_widths{64, 64};
  Index num_classes = 2;

  Index feature_dim() const { return hidden_widths.back(); }
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Hidden ReLU layers followed by a linear head whose rows are the class
// weight vectors w_k. Also used as the gradient container.
struct ModelState {
  std::vector<DenseLayer> hidden;
  Eigen::MatrixXd classifier_weights;  // K x p
  Eigen::VectorXd classifier_bias;     // K

  Architecture architecture() const;
  Index num_parameters() const;
  bool all_finite() const;

  // Same shapes, all zero.
  ModelState zeros_like() const;

  // Visits every parameter block of `a` together with the matching block of
  // `b` as Eigen::Map<ArrayXd>.
  template <typename F>
  friend void zip_parameters(ModelState& a, const ModelState& b, F&& f);
  template <typename F>
  void for_each_parameter(F&& f) const;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

struct TrainHyper {
  double learning_rate = 0.05;
  double momentum = 0.9;
  Index batch_size = 64;
  Index max_epochs = 200;
  double weight_decay = 0.0;
  Index early_stop_patience = 10;
  double early_stop_min_delta = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

// Penultimate activations of a batch with the labels and groups they belong to.
struct FeatureBatch {
  Eigen::MatrixXd features;  // m x p
  Eigen::VectorXi labels;
  Eigen::VectorXi groups;

  Index size() const { return features.rows(); }
};

struct ForwardPass {
  Eigen::MatrixXd features;  // m x p
  Eigen::MatrixXd logits;    // m x K
};

// He-normal weights (variance 2 / fan_in), zero biases.
ModelState init_model(const Architecture& arch, std::uint64_t seed);

ForwardPass forward(const ModelState& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

FeatureBatch extract_features(const ModelState& model, const Dataset& ds);

struct LossAndGradients {
  double loss = 0.0;
  ModelState gradients;
};

// Mean softmax cross-entropy over the batch and its exact gradient.
LossAndGradients loss_and_gradients(const ModelState& model,
                                    const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                    const Eigen::Ref<const Eigen::VectorXi>& labels);

double cross_entropy(const ModelState& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                     const Eigen::Ref<const Eigen::VectorXi>& labels);

// Heavy-ball momentum with L2 weight decay folded into the gradient:
//   v <- momentum * v + (g + weight_decay * w);  w <- w - learning_rate * v
class SgdMomentum {
 public:
  SgdMomentum(const ModelState& model, const TrainHyper& hyper);

  void step(ModelState& model, const ModelState& gradients);
  const ModelState& velocity() const { return velocity_; }

 private:
  ModelState velocity_;
  double learning_rate_;
  double momentum_;
  double weight_decay_;
};

// Single update with a fresh (zero) velocity.
ModelState sgd_step(const ModelState& model, const ModelState& gradients, const TrainHyper& hyper);

struct EpochStats {
  Index epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainResult {
  ModelState final_state;
  ModelState early_stopped;
  Index early_stopped_epoch = 0;  // epoch whose state is `early_stopped`
  // First epoch at which `early_stop_patience` epochs passed without a
  // min_delta improvement, if that happened.
  std::optional<Index> patience_exhausted_epoch;
  std::vector<EpochStats> history;
};

// Called after every epoch with the freshly updated model.
using EpochCallback = std::function<void(const EpochStats&, const ModelState&)>;

// Thrown when training produces non-finite values; carries the history of
// completed epochs.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const NumericError& cause, std::vector<EpochStats> history)
      : NumericError(cause), history_(std::move(history)) {}
  const std::vector<EpochStats>& history() const { return history_; }

 private:
  std::vector<EpochStats> history_;
};

// Runs max_epochs epochs of shuffled mini-batch SGD. The early-stopped state is
// the epoch with the lowest validation loss.
TrainResult train(ModelState model, const Eigen::Ref<const Eigen::MatrixXd>& train_inputs,
                  const Eigen::Ref<const Eigen::VectorXi>& train_labels,
                  const Eigen::Ref<const Eigen::MatrixXd>& val_inputs,
                  const Eigen::Ref<const Eigen::VectorXi>& val_labels, const TrainHyper& hyper,
                  const EpochCallback& on_epoch = {});

struct Prediction {
  Eigen::VectorXi labels;           // argmax, ties to the lower class index
  Eigen::VectorXd positive_scores;  // softmax probability of class 1
};

Prediction predict(const ModelState& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

// Row-wise softmax of a logit matrix.
Eigen::MatrixXd softmax(const Eigen::Ref<const Eigen::MatrixXd>& logits);

// Versioned JSON checkpoint.
void save_model(const ModelState& model, const std::filesystem::path& path);
ModelState load_model(const std::filesystem::path& path);

// -- template definitions ---------------------------------------------------

template <typename F>
void zip_parameters(ModelState& a, const ModelState& b, F&& f) {
  auto apply = [&](auto& x, const auto& y) {
    if (x.size() != y.size()) throw ContractError("parameter shapes differ");
    Eigen::Map<Eigen::ArrayXd> xa(x.data(), x.size());
    Eigen::Map<const Eigen::ArrayXd> ya(y.data(), y.size());
    f(xa, ya);
  };
  if (a.hidden.size() != b.hidden.size()) throw ContractError("layer counts differ");
  for (std::size_t l = 0; l < a.hidden.size(); ++l) {
    apply(a.hidden[l].weights, b.hidden[l].weights);
    apply(a.hidden[l].bias, b.hidden[l].bias);
  }
  apply(a.classifier_weights, b.classifier_weights);
  apply(a.classifier_bias, b.classifier_bias);
}

template <typename F>
void ModelState::for_each_parameter(F&& f) const {
  auto apply = [&](const auto& x) { f(Eigen::Map<const Eigen::ArrayXd>(x.data(), x.size())); };
  for (const auto& layer : hidden) {
    apply(layer.weights);
    apply(layer.bias);
  }
  apply(classifier_weights);
  apply(classifier_bias);
}

}  // namespace nclab
