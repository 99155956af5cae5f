#include "nclab/nnet.hpp"

#include "nclab/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace nclab {

namespace {

constexpr int kCheckpointVersion = 1;

struct Activations {
  std::vector<Eigen::MatrixXd> pre;   // Z_l per hidden layer
  std::vector<Eigen::MatrixXd> post;  // A_l; post[0] is the input
  Eigen::MatrixXd logits;
};

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  if (!inputs.allFinite()) throw NumericError("non-finite value in network input");
}

void check_input_width(const ModelState& model, Index cols) {
  if (model.hidden.empty()) throw ContractError("model has no hidden layers");
  if (model.hidden.front().weights.cols() != cols) {
    throw ContractError("input width " + std::to_string(cols) + " does not match model input " +
                        std::to_string(model.hidden.front().weights.cols()));
  }
}

Activations run_forward(const ModelState& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  check_input_width(model, inputs.cols());
  Activations act;
  act.post.emplace_back(inputs);
  for (const auto& layer : model.hidden) {
    Eigen::MatrixXd z = act.post.back() * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    act.post.emplace_back(z.cwiseMax(0.0));
    act.pre.push_back(std::move(z));
  }
  act.logits = act.post.back() * model.classifier_weights.transpose();
  act.logits.rowwise() += model.classifier_bias.transpose();
  return act;
}

// Per-row log-sum-exp of the logits.
Eigen::VectorXd log_normalizers(const Eigen::MatrixXd& logits) {
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  const Eigen::VectorXd sums = (logits.colwise() - row_max).array().exp().rowwise().sum();
  return row_max.array() + sums.array().log();
}

double mean_cross_entropy(const Eigen::MatrixXd& logits, const Eigen::Ref<const Eigen::VectorXi>& labels) {
  const Eigen::VectorXd lse = log_normalizers(logits);
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) total += lse[i] - logits(i, labels[i]);
  return total / static_cast<double>(logits.rows());
}

void check_labels(const Eigen::Ref<const Eigen::VectorXi>& labels, Index rows, Index classes) {
  if (labels.size() != rows) throw ContractError("label count does not match input rows");
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ContractError("label " + std::to_string(labels[i]) + " out of range");
    }
  }
}

Eigen::MatrixXd gather_rows(const Eigen::Ref<const Eigen::MatrixXd>& m, std::span<const Index> rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

Eigen::VectorXi gather(const Eigen::Ref<const Eigen::VectorXi>& v, std::span<const Index> rows) {
  Eigen::VectorXi out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Index>(r)] = v[rows[r]];
  return out;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  // Row-major on disk.
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw ParseError("checkpoint matrix shape does not match its data");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const Eigen::MatrixXd m = matrix_from_json(j);
  if (m.cols() != 1) throw ParseError("checkpoint bias is not a column vector");
  return m.col(0);
}

}  // namespace

void Architecture::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
  if (hidden_widths.empty()) throw ConfigError("at least one hidden layer is required");
  for (Index w : hidden_widths) {
    if (w < 1) throw ConfigError("hidden widths must be >= 1");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
}

void TrainHyper::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (!(early_stop_min_delta >= 0.0)) throw ConfigError("early_stop_min_delta must be >= 0");
}

Architecture ModelState::architecture() const {
  Architecture arch;
  arch.hidden_widths.clear();
  arch.input_dim = hidden.empty() ? 0 : hidden.front().weights.cols();
  for (const auto& layer : hidden) arch.hidden_widths.push_back(layer.weights.rows());
  arch.num_classes = classifier_weights.rows();
  return arch;
}

Index ModelState::num_parameters() const {
  Index n = 0;
  for_each_parameter([&](const auto& block) { n += block.size(); });
  return n;
}

bool ModelState::all_finite() const {
  bool finite = true;
  for_each_parameter([&](const auto& block) { finite = finite && block.allFinite(); });
  return finite;
}

ModelState ModelState::zeros_like() const {
  ModelState z;
  for (const auto& layer : hidden) {
    z.hidden.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                        Eigen::VectorXd::Zero(layer.bias.size())});
  }
  z.classifier_weights = Eigen::MatrixXd::Zero(classifier_weights.rows(), classifier_weights.cols());
  z.classifier_bias = Eigen::VectorXd::Zero(classifier_bias.size());
  return z;
}

ModelState init_model(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  auto he_normal = [&](Index rows, Index cols) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(cols)));
    Eigen::MatrixXd w(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) w(r, c) = normal(rng);
    }
    return w;
  };
  ModelState model;
  Index fan_in = arch.input_dim;
  for (Index width : arch.hidden_widths) {
    model.hidden.push_back({he_normal(width, fan_in), Eigen::VectorXd::Zero(width)});
    fan_in = width;
  }
  model.classifier_weights = he_normal(arch.num_classes, fan_in);
  model.classifier_bias = Eigen::VectorXd::Zero(arch.num_classes);
  return model;
}

ForwardPass forward(const ModelState& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  require_finite(inputs);
  Activations act = run_forward(model, inputs);
  return {std::move(act.post.back()), std::move(act.logits)};
}

FeatureBatch extract_features(const ModelState& model, const Dataset& ds) {
  return {forward(model, ds.samples).features, ds.labels, ds.groups};
}

Eigen::MatrixXd softmax(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  Eigen::MatrixXd p = (logits.colwise() - row_max).array().exp();
  const Eigen::VectorXd sums = p.rowwise().sum();
  return sums.asDiagonal().inverse() * p;
}

double cross_entropy(const ModelState& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                     const Eigen::Ref<const Eigen::VectorXi>& labels) {
  if (inputs.rows() == 0) throw ContractError("empty batch");
  require_finite(inputs);
  check_labels(labels, inputs.rows(), model.classifier_weights.rows());
  return mean_cross_entropy(run_forward(model, inputs).logits, labels);
}

LossAndGradients loss_and_gradients(const ModelState& model,
                                    const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                    const Eigen::Ref<const Eigen::VectorXi>& labels) {
  const Index m = inputs.rows();
  if (m == 0) throw ContractError("empty batch");
  require_finite(inputs);
  check_labels(labels, m, model.classifier_weights.rows());

  Activations act = run_forward(model, inputs);
  LossAndGradients out;
  out.loss = mean_cross_entropy(act.logits, labels);
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");

  Eigen::MatrixXd delta = softmax(act.logits);
  for (Index i = 0; i < m; ++i) delta(i, labels[i]) -= 1.0;
  delta /= static_cast<double>(m);

  ModelState& g = out.gradients;
  g.hidden.resize(model.hidden.size());
  g.classifier_weights = delta.transpose() * act.post.back();
  g.classifier_bias = delta.colwise().sum().transpose();

  Eigen::MatrixXd upstream = delta * model.classifier_weights;
  for (std::size_t l = model.hidden.size(); l-- > 0;) {
    const Eigen::MatrixXd dz = upstream.cwiseProduct((act.pre[l].array() > 0.0).cast<double>().matrix());
    g.hidden[l].weights = dz.transpose() * act.post[l];
    g.hidden[l].bias = dz.colwise().sum().transpose();
    if (l > 0) upstream = dz * model.hidden[l].weights;
  }
  return out;
}

SgdMomentum::SgdMomentum(const ModelState& model, const TrainHyper& hyper)
    : velocity_(model.zeros_like()),
      learning_rate_(hyper.learning_rate),
      momentum_(hyper.momentum),
      weight_decay_(hyper.weight_decay) {}

void SgdMomentum::step(ModelState& model, const ModelState& gradients) {
  ModelState decayed = gradients;
  zip_parameters(decayed, model, [&](auto& g, const auto& w) { g += weight_decay_ * w; });
  zip_parameters(velocity_, decayed, [&](auto& v, const auto& g) { v = momentum_ * v + g; });
  zip_parameters(model, velocity_, [&](auto& w, const auto& v) { w -= learning_rate_ * v; });
}

ModelState sgd_step(const ModelState& model, const ModelState& gradients, const TrainHyper& hyper) {
  ModelState next = model;
  SgdMomentum(model, hyper).step(next, gradients);
  return next;
}

TrainResult train(ModelState model, const Eigen::Ref<const Eigen::MatrixXd>& train_inputs,
                  const Eigen::Ref<const Eigen::VectorXi>& train_labels,
                  const Eigen::Ref<const Eigen::MatrixXd>& val_inputs,
                  const Eigen::Ref<const Eigen::VectorXi>& val_labels, const TrainHyper& hyper,
                  const EpochCallback& on_epoch) {
  hyper.validate();
  if (train_inputs.rows() == 0 || val_inputs.rows() == 0) {
    throw ContractError("train and validation sets must be nonempty");
  }
  require_finite(train_inputs);
  require_finite(val_inputs);
  check_labels(train_labels, train_inputs.rows(), model.classifier_weights.rows());
  check_labels(val_labels, val_inputs.rows(), model.classifier_weights.rows());

  TrainResult result;
  SgdMomentum optimizer(model, hyper);
  std::mt19937_64 rng(hyper.seed);
  std::vector<Index> order(static_cast<std::size_t>(train_inputs.rows()));
  std::iota(order.begin(), order.end(), Index{0});

  double best_val = std::numeric_limits<double>::infinity();
  double patience_ref = std::numeric_limits<double>::infinity();
  Index since_improvement = 0;

  for (Index epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hyper.batch_size), ++batch) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      const std::span<const Index> rows(order.data() + start, stop - start);
      LossAndGradients lg;
      try {
        lg = loss_and_gradients(model, gather_rows(train_inputs, rows), gather(train_labels, rows));
      } catch (const NumericError& e) {
        throw TrainingDiverged(NumericError(e.what(), static_cast<std::size_t>(epoch), batch),
                               result.history);
      }
      optimizer.step(model, lg.gradients);
      if (!model.all_finite()) {
        throw TrainingDiverged(
            NumericError("non-finite parameters", static_cast<std::size_t>(epoch), batch),
            result.history);
      }
      loss_sum += lg.loss * static_cast<double>(rows.size());
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    const Prediction train_pred = predict(model, train_inputs);
    stats.train_accuracy = (train_pred.labels.array() == train_labels.array()).cast<double>().mean();
    stats.val_loss = cross_entropy(model, val_inputs, val_labels);
    if (!std::isfinite(stats.val_loss)) {
      throw TrainingDiverged(NumericError("non-finite validation loss", static_cast<std::size_t>(epoch), batch),
                             result.history);
    }
    result.history.push_back(stats);

    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      result.early_stopped = model;
      result.early_stopped_epoch = epoch;
    }
    if (stats.val_loss < patience_ref - hyper.early_stop_min_delta) {
      patience_ref = stats.val_loss;
      since_improvement = 0;
    } else if (++since_improvement >= hyper.early_stop_patience && !result.patience_exhausted_epoch) {
      result.patience_exhausted_epoch = epoch;
    }

    if (on_epoch) on_epoch(stats, model);
  }
  result.final_state = std::move(model);
  return result;
}

Prediction predict(const ModelState& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const ForwardPass pass = forward(model, inputs);
  const Eigen::MatrixXd probs = softmax(pass.logits);
  Prediction out;
  out.labels.resize(inputs.rows());
  out.positive_scores = probs.col(probs.cols() > 1 ? 1 : 0);
  for (Index i = 0; i < pass.logits.rows(); ++i) {
    Index best = 0;
    // maxCoeff returns the first maximum, which is the lower class index on ties.
    pass.logits.row(i).maxCoeff(&best);
    out.labels[i] = static_cast<int>(best);
  }
  return out;
}

void save_model(const ModelState& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "nclab-model";
  j["version"] = kCheckpointVersion;
  const Architecture arch = model.architecture();
  j["architecture"] = {{"input_dim", arch.input_dim},
                       {"hidden_widths", arch.hidden_widths},
                       {"num_classes", arch.num_classes}};
  j["hidden"] = nlohmann::json::array();
  for (const auto& layer : model.hidden) {
    j["hidden"].push_back({{"weights", matrix_to_json(layer.weights)},
                           {"bias", matrix_to_json(layer.bias)}});
  }
  j["classifier_weights"] = matrix_to_json(model.classifier_weights);
  j["classifier_bias"] = matrix_to_json(model.classifier_bias);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

ModelState load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "nclab-model") throw ParseError("not an nclab model checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError("unsupported checkpoint version " + j.at("version").dump());
    }
    ModelState model;
    for (const auto& layer : j.at("hidden")) {
      model.hidden.push_back({matrix_from_json(layer.at("weights")), vector_from_json(layer.at("bias"))});
    }
    model.classifier_weights = matrix_from_json(j.at("classifier_weights"));
    model.classifier_bias = vector_from_json(j.at("classifier_bias"));
    // Shape consistency.
    Index fan_in = model.hidden.empty() ? 0 : model.hidden.front().weights.cols();
    for (const auto& layer : model.hidden) {
      if (layer.weights.cols() != fan_in || layer.bias.size() != layer.weights.rows()) {
        throw ParseError("inconsistent layer shapes in checkpoint");
      }
      fan_in = layer.weights.rows();
    }
    if (model.hidden.empty() || model.classifier_weights.cols() != fan_in ||
        model.classifier_bias.size() != model.classifier_weights.rows()) {
      throw ParseError("inconsistent classifier shapes in checkpoint");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace nclab
