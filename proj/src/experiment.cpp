#include "nclab/experiment.hpp"

#include "nclab/csv.hpp"
#include "nclab/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace nclab {

namespace {

using nlohmann::json;

constexpr int kManifestVersion = 1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Copies known keys of `src` into `dst`; throws on keys outside `allowed`.
void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string fmt(double v) { return csv::format(v); }

std::string fmt(const std::optional<double>& v) { return v ? csv::format(*v) : "nan"; }

std::optional<double> optional_from(double v) {
  return std::isnan(v) ? std::nullopt : std::optional<double>(v);
}

void write_text(const std::filesystem::path& path, const std::string& text, bool append) {
  std::ofstream out(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string report_columns(const NCReport& r) {
  std::ostringstream os;
  os << fmt(r.nc1_global) << ',' << fmt(r.nc1_group(0)) << ',' << fmt(r.nc1_group(1)) << ','
     << fmt(r.nc2_equinorm) << ',' << fmt(r.nc2_equiangular) << ',' << fmt(r.nc3_selfdual) << ','
     << fmt(r.nc4_mismatch) << ',' << fmt(r.config_divergence) << ',' << fmt(r.group_identity_residual);
  return os.str();
}

constexpr std::string_view kReportHeader =
    "nc1,nc1_g0,nc1_g1,nc2_equinorm,nc2_equiangular,nc3_selfdual,nc4_mismatch,config_divergence,"
    "group_identity_residual";

NCReport report_from_row(const csv::Table& t, const std::vector<std::string>& row, std::size_t line) {
  auto get = [&](std::string_view name) { return csv::to_double(row[t.column(name)], line); };
  NCReport r;
  r.nc1_global = get("nc1");
  for (int a : {0, 1}) {
    const double v = get(a == 0 ? "nc1_g0" : "nc1_g1");
    if (!std::isnan(v)) r.nc1_per_group[a] = v;
  }
  r.nc2_equinorm = get("nc2_equinorm");
  r.nc2_equiangular = get("nc2_equiangular");
  r.nc3_selfdual = get("nc3_selfdual");
  r.nc4_mismatch = get("nc4_mismatch");
  r.config_divergence = get("config_divergence");
  r.group_identity_residual = get("group_identity_residual");
  return r;
}

}  // namespace

std::string_view to_string(Arm arm) { return arm == Arm::clean ? "clean" : "biased"; }
std::string_view to_string(Stage stage) { return stage == Stage::early ? "early" : "final"; }

Arm arm_from_string(std::string_view name) {
  if (name == "clean") return Arm::clean;
  if (name == "biased") return Arm::biased;
  throw ParseError("unknown arm '" + std::string(name) + "'");
}

Stage stage_from_string(std::string_view name) {
  if (name == "early") return Stage::early;
  if (name == "final") return Stage::final;
  throw ParseError("unknown stage '" + std::string(name) + "'");
}

// -- configuration --------------------------------------------------------------

void ExperimentConfig::validate() const {
  data.validate();
  split.validate();
  if (!(bias_fraction >= 0.0 && bias_fraction <= 1.0)) throw ConfigError("bias_fraction must lie in [0, 1]");
  if (target_group != 0 && target_group != 1) throw ConfigError("target_group must be 0 or 1");
  resolved_architecture().validate();
  if (architecture.num_classes != 2) throw ConfigError("the experiment harness trains binary classifiers");
  train.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  if (!(split.train > 0.0 && split.val > 0.0 && split.test > 0.0)) {
    throw ConfigError("experiments need nonempty train, validation and test splits");
  }
  if (!(collapse_threshold > 0.0)) throw ConfigError("collapse_threshold must be > 0");
}

Architecture ExperimentConfig::resolved_architecture() const {
  Architecture arch = architecture;
  arch.input_dim = data.dim;
  return arch;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  reject_unknown(j,
                 {"data", "split", "bias_fraction", "target_group", "architecture", "train", "seeds",
                  "output_dir", "probes", "collapse_threshold"},
                 "config");
  if (j.contains("data")) {
    const json& d = j["data"];
    reject_unknown(d, {"n_per_cell", "dim", "class_mean_separation", "group_shift", "noise_sd", "seed"}, "data");
    read_field(d, "n_per_cell", cfg.data.n_per_cell);
    read_field(d, "dim", cfg.data.dim);
    read_field(d, "class_mean_separation", cfg.data.class_mean_separation);
    read_field(d, "group_shift", cfg.data.group_shift);
    read_field(d, "noise_sd", cfg.data.noise_sd);
    read_field(d, "seed", cfg.data.seed);
  }
  if (j.contains("split")) {
    const json& s = j["split"];
    reject_unknown(s, {"train", "val", "test"}, "split");
    read_field(s, "train", cfg.split.train);
    read_field(s, "val", cfg.split.val);
    read_field(s, "test", cfg.split.test);
  }
  read_field(j, "bias_fraction", cfg.bias_fraction);
  read_field(j, "target_group", cfg.target_group);
  if (j.contains("architecture")) {
    const json& a = j["architecture"];
    reject_unknown(a, {"hidden_widths", "num_classes"}, "architecture");
    read_field(a, "hidden_widths", cfg.architecture.hidden_widths);
    read_field(a, "num_classes", cfg.architecture.num_classes);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t,
                   {"learning_rate", "momentum", "batch_size", "max_epochs", "weight_decay",
                    "early_stop_patience", "early_stop_min_delta"},
                   "train");
    read_field(t, "learning_rate", cfg.train.learning_rate);
    read_field(t, "momentum", cfg.train.momentum);
    read_field(t, "batch_size", cfg.train.batch_size);
    read_field(t, "max_epochs", cfg.train.max_epochs);
    read_field(t, "weight_decay", cfg.train.weight_decay);
    read_field(t, "early_stop_patience", cfg.train.early_stop_patience);
    read_field(t, "early_stop_min_delta", cfg.train.early_stop_min_delta);
  }
  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    if (s.is_number_unsigned() || s.is_number_integer()) {
      const auto count = s.get<long long>();
      if (count < 1) throw ConfigError("seed count must be >= 1");
      cfg.seeds.resize(static_cast<std::size_t>(count));
      for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = i;
    } else {
      read_field(j, "seeds", cfg.seeds);
    }
  }
  read_field(j, "output_dir", cfg.output_dir);
  if (j.contains("probes")) {
    const json& p = j["probes"];
    reject_unknown(p, {"raw_kind", "linear"}, "probes");
    if (p.contains("raw_kind")) cfg.probes.raw_kind = raw_probe_kind_from_string(p["raw_kind"].get<std::string>());
    if (p.contains("linear")) {
      const json& l = p["linear"];
      reject_unknown(l, {"max_iterations", "gradient_tolerance", "learning_rate"}, "probes.linear");
      read_field(l, "max_iterations", cfg.probes.linear.max_iterations);
      read_field(l, "gradient_tolerance", cfg.probes.linear.gradient_tolerance);
      read_field(l, "learning_rate", cfg.probes.linear.learning_rate);
    }
  }
  read_field(j, "collapse_threshold", cfg.collapse_threshold);
  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["data"] = {{"n_per_cell", cfg.data.n_per_cell},
               {"dim", cfg.data.dim},
               {"class_mean_separation", cfg.data.class_mean_separation},
               {"group_shift", cfg.data.group_shift},
               {"noise_sd", cfg.data.noise_sd},
               {"seed", cfg.data.seed}};
  j["split"] = {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test}};
  j["bias_fraction"] = cfg.bias_fraction;
  j["target_group"] = cfg.target_group;
  j["architecture"] = {{"hidden_widths", cfg.architecture.hidden_widths},
                       {"num_classes", cfg.architecture.num_classes}};
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"momentum", cfg.train.momentum},
                {"batch_size", cfg.train.batch_size},
                {"max_epochs", cfg.train.max_epochs},
                {"weight_decay", cfg.train.weight_decay},
                {"early_stop_patience", cfg.train.early_stop_patience},
                {"early_stop_min_delta", cfg.train.early_stop_min_delta}};
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  j["probes"] = {{"raw_kind", std::string(to_string(cfg.probes.raw_kind))},
                 {"linear",
                  {{"max_iterations", cfg.probes.linear.max_iterations},
                   {"gradient_tolerance", cfg.probes.linear.gradient_tolerance},
                   {"learning_rate", cfg.probes.linear.learning_rate}}}};
  j["collapse_threshold"] = cfg.collapse_threshold;
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

// -- records ------------------------------------------------------------------------

const CheckpointRecord* ExperimentRecord::checkpoint(Stage stage) const {
  for (const auto& c : checkpoints) {
    if (c.stage == stage) return &c;
  }
  return nullptr;
}

const EpochRecord* ExperimentRecord::epoch(Index number) const {
  for (const auto& e : epochs) {
    if (e.epoch == number) return &e;
  }
  return nullptr;
}

PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  PreparedData out;
  GenConfig gen = cfg.data;
  gen.seed = derive_seed(seed, streams::data);
  out.clean = generate_gaussian_mixture(gen);
  out.splits = split_dataset(out.clean, cfg.split, derive_seed(seed, streams::split));
  out.biased = out.clean;
  out.flips = FlipRecord{{}, cfg.target_group, cfg.bias_fraction};
  if (cfg.bias_fraction > 0.0) {
    // Train and validation are biased independently, each at the full fraction.
    const std::uint64_t flip_seed = derive_seed(seed, streams::flips);
    std::uint64_t part = 0;
    for (const auto* indices : {&out.splits.train, &out.splits.val}) {
      auto [next, record] =
          inject_label_bias(out.biased, cfg.target_group, cfg.bias_fraction, derive_seed(flip_seed, part++), *indices);
      out.biased = std::move(next);
      out.flips.flipped_indices.insert(out.flips.flipped_indices.end(), record.flipped_indices.begin(),
                                       record.flipped_indices.end());
    }
    std::sort(out.flips.flipped_indices.begin(), out.flips.flipped_indices.end());
  }
  return out;
}

double raw_auc_for_seed(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed) {
  return raw_data_probe(data.clean, data.splits, cfg.resolved_architecture(), cfg.train,
                        derive_seed(seed, streams::raw_probe), cfg.probes.raw_kind, cfg.probes.linear);
}

ExperimentRecord run_arm(const ExperimentConfig& cfg, Arm arm, std::uint64_t seed, const RunOptions& options) {
  cfg.validate();
  ExperimentRecord record;
  record.arm = arm;
  record.seed = seed;

  const PreparedData data = prepare_data(cfg, seed);
  const Dataset& ds = arm == Arm::biased ? data.biased : data.clean;
  if (arm == Arm::biased) record.flipped_indices = data.flips.flipped_indices;
  record.flip_count = static_cast<Index>(record.flipped_indices.size());
  record.test_indices = data.splits.test;
  record.warnings = data.splits.warnings;

  const Dataset train_set = ds.subset(data.splits.train);
  const Dataset val_set = ds.subset(data.splits.val);
  const Dataset test_set = ds.subset(data.splits.test);

  TrainHyper hyper = cfg.train;
  hyper.seed = derive_seed(seed, streams::shuffle);
  // Both arms of a seed start from the same initialisation.
  ModelState init = init_model(cfg.resolved_architecture(), derive_seed(seed, streams::init));

  EpochCallback on_epoch = [&](const EpochStats& stats, const ModelState& model) {
    EpochRecord row;
    row.epoch = stats.epoch;
    row.train_loss = stats.train_loss;
    row.val_loss = stats.val_loss;
    row.train_accuracy = stats.train_accuracy;
    if (options.track_epochs) {
      row.train_report = nc_report(extract_features(model, train_set), model.classifier_weights);
    } else {
      row.train_report.nc1_global = kNaN;
    }
    record.epochs.push_back(std::move(row));
  };

  TrainResult trained;
  try {
    trained = train(std::move(init), train_set.samples, train_set.labels, val_set.samples, val_set.labels, hyper,
                    on_epoch);
  } catch (const TrainingDiverged& e) {
    record.error = e.what();
    return record;
  }

  double raw_auc = kNaN;
  try {
    raw_auc = options.raw_auc ? *options.raw_auc : raw_auc_for_seed(cfg, data, seed);
  } catch (const Error& e) {
    record.warnings.push_back(std::string("raw probe: ") + e.what());
  }

  for (Stage stage : {Stage::early, Stage::final}) {
    const ModelState& model = stage == Stage::early ? trained.early_stopped : trained.final_state;
    if (options.on_checkpoint) options.on_checkpoint(stage, model);
    CheckpointRecord cp;
    cp.stage = stage;
    cp.epoch = stage == Stage::early ? trained.early_stopped_epoch : static_cast<Index>(trained.history.size());

    FeatureBatch test_features = extract_features(model, test_set);
    test_features.labels = test_set.clean_labels;
    cp.test_report = nc_report(test_features, model.classifier_weights);

    const Prediction pred = predict(model, test_set.samples);
    for (int a : {0, 1}) {
      std::vector<Index> rows;
      for (Index i = 0; i < test_set.size(); ++i) {
        if (test_set.groups[i] == a) rows.push_back(i);
      }
      Eigen::VectorXi p(static_cast<Index>(rows.size())), t(static_cast<Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        p[static_cast<Index>(r)] = pred.labels[rows[r]];
        t[static_cast<Index>(r)] = test_set.clean_labels[rows[r]];
      }
      cp.f1[static_cast<std::size_t>(a)] = f1_score(p, t);
      if (!cp.f1[static_cast<std::size_t>(a)]) {
        record.warnings.push_back("F1 undefined for group " + std::to_string(a) + " at " +
                                  std::string(to_string(stage)) + " stage");
      }
    }

    cp.split.stage = stage;
    cp.split.arm = arm;
    cp.split.raw_auc = raw_auc;
    try {
      cp.split.feature_auc = split_test(model, ds, data.splits, cfg.probes.linear, derive_seed(seed, streams::probe));
    } catch (const DegenerateError& e) {
      cp.split.feature_auc = kNaN;
      record.warnings.push_back(std::string("split test: ") + e.what());
    }
    record.checkpoints.push_back(std::move(cp));
  }
  return record;
}

std::vector<ExperimentRecord> run_suite(const ExperimentConfig& cfg, const SuiteOptions& options) {
  cfg.validate();
  const std::size_t n = cfg.seeds.size();
  std::vector<std::array<ExperimentRecord, 2>> results(n);
  std::vector<bool> done(n, false);
  std::size_t flushed = 0;
  std::mutex mutex;
  std::atomic<std::size_t> next{0};

  auto run_seed = [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    std::array<ExperimentRecord, 2> pair;
    std::optional<double> raw_auc;
    std::string raw_warning;
    try {
      raw_auc = raw_auc_for_seed(cfg, prepare_data(cfg, seed), seed);
    } catch (const Error& e) {
      raw_auc = kNaN;
      raw_warning = std::string("raw probe: ") + e.what();
    }
    for (Arm arm : {Arm::clean, Arm::biased}) {
      RunOptions ro;
      ro.track_epochs = options.track_epochs;
      ro.raw_auc = raw_auc;
      auto& slot = pair[arm == Arm::clean ? 0 : 1];
      if (options.on_checkpoint) {
        ro.on_checkpoint = [&, arm, seed](Stage stage, const ModelState& model) {
          ExperimentRecord id;
          id.arm = arm;
          id.seed = seed;
          options.on_checkpoint(id, stage, model);
        };
      }
      try {
        slot = run_arm(cfg, arm, seed, ro);
      } catch (const Error& e) {
        slot = ExperimentRecord{};
        slot.arm = arm;
        slot.seed = seed;
        slot.error = e.what();
      }
      if (!raw_warning.empty()) slot.warnings.push_back(raw_warning);
    }

    std::lock_guard lock(mutex);
    results[i] = std::move(pair);
    done[i] = true;
    while (flushed < n && done[flushed]) {
      if (options.on_record) {
        for (const auto& r : results[flushed]) options.on_record(r);
      }
      ++flushed;
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) run_seed(i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run_seed(i);
      });
    }
  }

  std::vector<ExperimentRecord> records;
  records.reserve(2 * n);
  for (auto& pair : results) {
    for (auto& r : pair) records.push_back(std::move(r));
  }
  return records;
}

// -- comparison ------------------------------------------------------------------

Summary summarize(std::span<const double> values) {
  Summary s;
  s.count = static_cast<Index>(values.size());
  if (values.empty()) {
    s.mean = s.std = kNaN;
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

const GroupComparison* ComparisonReport::find(Stage stage, int group) const {
  for (const auto& g : groups) {
    if (g.stage == stage && g.group == group) return &g;
  }
  return nullptr;
}

const StageAssociation* ComparisonReport::association(Stage stage) const {
  for (const auto& a : associations) {
    if (a.stage == stage) return &a;
  }
  return nullptr;
}

ComparisonReport compare_arms(std::span<const ExperimentRecord> records) {
  ComparisonReport report;
  // Seed order of first appearance.
  std::vector<std::uint64_t> seeds;
  std::map<std::pair<std::uint64_t, Arm>, const ExperimentRecord*> by_key;
  for (const auto& r : records) {
    if (r.error) {
      report.warnings.push_back("seed " + std::to_string(r.seed) + " " + std::string(to_string(r.arm)) +
                                " arm failed: " + *r.error);
      continue;
    }
    if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
    by_key[{r.seed, r.arm}] = &r;
  }
  auto lookup = [&](std::uint64_t seed, Arm arm, Stage stage) -> const CheckpointRecord* {
    const auto it = by_key.find({seed, arm});
    return it == by_key.end() ? nullptr : it->second->checkpoint(stage);
  };

  for (Stage stage : {Stage::early, Stage::final}) {
    for (int group : {0, 1}) {
      std::vector<double> d_nc1, d_f1, f1_clean, f1_biased;
      for (std::uint64_t seed : seeds) {
        const auto* c = lookup(seed, Arm::clean, stage);
        const auto* b = lookup(seed, Arm::biased, stage);
        const auto g = static_cast<std::size_t>(group);
        if (c && c->f1[g]) f1_clean.push_back(*c->f1[g]);
        if (b && b->f1[g]) f1_biased.push_back(*b->f1[g]);
        if (!c || !b) continue;
        const double nc_c = c->test_report.nc1_group(group);
        const double nc_b = b->test_report.nc1_group(group);
        if (!std::isnan(nc_c) && !std::isnan(nc_b)) d_nc1.push_back(nc_b - nc_c);
        if (c->f1[g] && b->f1[g]) d_f1.push_back(*b->f1[g] - *c->f1[g]);
      }
      const std::string where = std::string(to_string(stage)) + " stage, group " + std::to_string(group);
      if (f1_clean.size() < 2 || f1_biased.size() < 2) {
        report.warnings.push_back(where + ": fewer than two seeds per arm; omitted");
        continue;
      }
      GroupComparison gc;
      gc.stage = stage;
      gc.group = group;
      gc.n_seeds = static_cast<Index>(d_f1.size());
      gc.delta_nc1 = summarize(d_nc1);
      gc.delta_f1 = summarize(d_f1);
      gc.u_test = mann_whitney_u(Eigen::Map<const Eigen::VectorXd>(f1_biased.data(), static_cast<Index>(f1_biased.size())),
                                 Eigen::Map<const Eigen::VectorXd>(f1_clean.data(), static_cast<Index>(f1_clean.size())));
      gc.significant = gc.u_test.p_value < ComparisonReport::p_critical;
      report.groups.push_back(gc);
    }

    StageAssociation assoc;
    assoc.stage = stage;
    std::vector<double> raw, feat;
    for (std::uint64_t seed : seeds) {
      const auto* b = lookup(seed, Arm::biased, stage);
      if (!b || std::isnan(b->split.raw_auc) || std::isnan(b->split.feature_auc)) continue;
      raw.push_back(b->split.raw_auc);
      feat.push_back(b->split.feature_auc);
    }
    assoc.n_seeds = static_cast<Index>(raw.size());
    if (raw.size() >= 2) {
      assoc.kendall_tau = kendall_tau(Eigen::Map<const Eigen::VectorXd>(raw.data(), assoc.n_seeds),
                                      Eigen::Map<const Eigen::VectorXd>(feat.data(), assoc.n_seeds));
    }
    report.associations.push_back(assoc);
  }
  return report;
}

// -- serialisation ------------------------------------------------------------------

std::string epochs_csv_header() {
  return "arm,seed,epoch,split,train_loss,val_loss,train_accuracy," + std::string(kReportHeader) + "\n";
}

std::string checkpoints_csv_header() {
  return "arm,seed,stage,epoch,split," + std::string(kReportHeader) +
         ",f1_g0,f1_g1,feature_auc,raw_auc,flip_count\n";
}

std::string comparison_csv_header() {
  return "stage,group,n_seeds,delta_nc1_mean,delta_nc1_std,delta_f1_mean,delta_f1_std,u_statistic,p_value,"
         "method,significant,kendall_tau\n";
}

std::string epochs_csv_rows(const ExperimentRecord& record) {
  std::ostringstream os;
  for (const auto& e : record.epochs) {
    os << to_string(record.arm) << ',' << record.seed << ',' << e.epoch << ",train," << fmt(e.train_loss) << ','
       << fmt(e.val_loss) << ',' << fmt(e.train_accuracy) << ',' << report_columns(e.train_report) << '\n';
  }
  return os.str();
}

std::string checkpoints_csv_rows(const ExperimentRecord& record) {
  std::ostringstream os;
  for (const auto& c : record.checkpoints) {
    os << to_string(record.arm) << ',' << record.seed << ',' << to_string(c.stage) << ',' << c.epoch << ",test,"
       << report_columns(c.test_report) << ',' << fmt(c.f1[0]) << ',' << fmt(c.f1[1]) << ','
       << fmt(c.split.feature_auc) << ',' << fmt(c.split.raw_auc) << ',' << record.flip_count << '\n';
  }
  return os.str();
}

std::string comparison_csv(const ComparisonReport& report) {
  std::ostringstream os;
  os << comparison_csv_header();
  for (const auto& g : report.groups) {
    const auto* assoc = report.association(g.stage);
    os << to_string(g.stage) << ',' << g.group << ',' << g.n_seeds << ',' << fmt(g.delta_nc1.mean) << ','
       << fmt(g.delta_nc1.std) << ',' << fmt(g.delta_f1.mean) << ',' << fmt(g.delta_f1.std) << ','
       << fmt(g.u_test.u_statistic) << ',' << fmt(g.u_test.p_value) << ',' << to_string(g.u_test.method) << ','
       << (g.significant ? 1 : 0) << ',' << fmt(assoc ? assoc->kendall_tau : std::nullopt) << '\n';
  }
  return os.str();
}

json manifest(const ExperimentConfig& cfg) {
  json j;
  j["format"] = "nclab-manifest";
  j["version"] = kManifestVersion;
  j["config"] = to_json(cfg);
  j["files"] = {std::string(kEpochsFile), std::string(kCheckpointsFile), std::string(kComparisonFile)};
  j["p_critical"] = ComparisonReport::p_critical;
  j["float_format"] = "shortest-roundtrip";
  return j;
}

RecordWriter::RecordWriter(const std::filesystem::path& dir)
    : epochs_(dir / kEpochsFile), checkpoints_(dir / kCheckpointsFile) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  write_text(epochs_, epochs_csv_header(), false);
  write_text(checkpoints_, checkpoints_csv_header(), false);
}

void RecordWriter::append(const ExperimentRecord& record) {
  write_text(epochs_, epochs_csv_rows(record), true);
  write_text(checkpoints_, checkpoints_csv_rows(record), true);
}

void write_comparison(const ComparisonReport& report, const std::filesystem::path& path) {
  write_text(path, comparison_csv(report), false);
}

void write_manifest(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  write_text(path, manifest(cfg).dump(2) + "\n", false);
}

void serialize(const ExperimentConfig& cfg, std::span<const ExperimentRecord> records,
               const ComparisonReport& report, const std::filesystem::path& dir) {
  RecordWriter writer(dir);
  for (const auto& r : records) writer.append(r);
  write_comparison(report, dir / kComparisonFile);
  write_manifest(cfg, dir / kManifestFile);
}

std::vector<ExperimentRecord> read_records(const std::filesystem::path& epochs_csv,
                                           const std::filesystem::path& checkpoints_csv) {
  std::vector<ExperimentRecord> records;
  std::map<std::pair<std::uint64_t, Arm>, std::size_t> index;
  auto slot = [&](Arm arm, std::uint64_t seed) -> ExperimentRecord& {
    const auto [it, inserted] = index.try_emplace({seed, arm}, records.size());
    if (inserted) {
      records.emplace_back();
      records.back().arm = arm;
      records.back().seed = seed;
    }
    return records[it->second];
  };

  if (std::filesystem::exists(epochs_csv)) {
    const csv::Table t = csv::read(epochs_csv);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      const std::size_t line = t.line_numbers[r];
      auto& rec = slot(arm_from_string(row[t.column("arm")]),
                       static_cast<std::uint64_t>(csv::to_integer(row[t.column("seed")], line)));
      EpochRecord e;
      e.epoch = static_cast<Index>(csv::to_integer(row[t.column("epoch")], line));
      e.train_loss = csv::to_double(row[t.column("train_loss")], line);
      e.val_loss = csv::to_double(row[t.column("val_loss")], line);
      e.train_accuracy = csv::to_double(row[t.column("train_accuracy")], line);
      e.train_report = report_from_row(t, row, line);
      rec.epochs.push_back(std::move(e));
    }
  }
  if (std::filesystem::exists(checkpoints_csv)) {
    const csv::Table t = csv::read(checkpoints_csv);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      const std::size_t line = t.line_numbers[r];
      const Arm arm = arm_from_string(row[t.column("arm")]);
      auto& rec = slot(arm, static_cast<std::uint64_t>(csv::to_integer(row[t.column("seed")], line)));
      CheckpointRecord c;
      c.stage = stage_from_string(row[t.column("stage")]);
      c.epoch = static_cast<Index>(csv::to_integer(row[t.column("epoch")], line));
      c.test_report = report_from_row(t, row, line);
      c.f1[0] = optional_from(csv::to_double(row[t.column("f1_g0")], line));
      c.f1[1] = optional_from(csv::to_double(row[t.column("f1_g1")], line));
      c.split.stage = c.stage;
      c.split.arm = arm;
      c.split.feature_auc = csv::to_double(row[t.column("feature_auc")], line);
      c.split.raw_auc = csv::to_double(row[t.column("raw_auc")], line);
      rec.flip_count = static_cast<Index>(csv::to_integer(row[t.column("flip_count")], line));
      rec.checkpoints.push_back(std::move(c));
    }
  }
  return records;
}

ComparisonReport read_comparison(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  ComparisonReport report;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line = t.line_numbers[r];
    auto get = [&](std::string_view name) { return csv::to_double(row[t.column(name)], line); };
    GroupComparison g;
    g.stage = stage_from_string(row[t.column("stage")]);
    g.group = static_cast<int>(csv::to_integer(row[t.column("group")], line));
    g.n_seeds = static_cast<Index>(csv::to_integer(row[t.column("n_seeds")], line));
    g.delta_nc1 = {get("delta_nc1_mean"), get("delta_nc1_std"), g.n_seeds};
    g.delta_f1 = {get("delta_f1_mean"), get("delta_f1_std"), g.n_seeds};
    g.u_test.u_statistic = get("u_statistic");
    g.u_test.p_value = get("p_value");
    g.u_test.method = row[t.column("method")] == "exact" ? UTestMethod::exact : UTestMethod::normal_approx;
    g.significant = csv::to_integer(row[t.column("significant")], line) != 0;
    report.groups.push_back(g);
    if (!report.association(g.stage)) {
      StageAssociation a;
      a.stage = g.stage;
      a.n_seeds = g.n_seeds;
      a.kendall_tau = optional_from(get("kendall_tau"));
      report.associations.push_back(a);
    }
  }
  return report;
}

}  // namespace nclab
