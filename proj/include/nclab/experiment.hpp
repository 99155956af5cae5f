#pragma once

#include "nclab/collapse.hpp"
#include "nclab/datagen.hpp"
#include "nclab/nnet.hpp"
#include "nclab/probes.hpp"
#include "nclab/stats.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nclab {

enum class Arm { clean, biased };
enum class Stage { early, final };

std::string_view to_string(Arm arm);
std::string_view to_string(Stage stage);
Arm arm_from_string(std::string_view name);
Stage stage_from_string(std::string_view name);

struct ProbeSettings {
  RawProbeKind raw_kind = RawProbeKind::mlp;
  ProbeHyper linear;
};

// Everything a suite needs. `data.seed` is ignored by the runners: every run
// derives its data seed from its own entry in `seeds`.
// The defaults are calibrated so that a clean 2-layer MLP collapses within 200
// epochs: two input dimensions leave too little room to memorise flipped
// labels, and without weight decay NC1 stalls well above zero.
struct ExperimentConfig {
  GenConfig data = default_data();
  SplitFractions split{0.4, 0.2, 0.4};
  double bias_fraction = 0.25;
  int target_group = 1;
  Architecture architecture;  // input_dim is taken from data.dim
  TrainHyper train = default_train();
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::string output_dir = "results";
  ProbeSettings probes;
  // Final train NC1 must fall below this fraction of the epoch-1 value.
  double collapse_threshold = 0.05;

  void validate() const;
  Architecture resolved_architecture() const;

  static GenConfig default_data() {
    GenConfig g;
    g.n_per_cell = 500;
    g.dim = 32;
    g.class_mean_separation = 48.0;
    g.group_shift = 8.0;
    g.noise_sd = 4.0;
    return g;
  }
  static TrainHyper default_train() {
    TrainHyper t;
    t.learning_rate = 0.01;
    t.batch_size = 32;
    t.weight_decay = 0.02;
    return t;
  }
};

// Defaults above, overridden by whatever fields the document sets. Unknown
// keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

struct EpochRecord {
  Index epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_accuracy = 0.0;
  NCReport train_report;  // train features against the (possibly noisy) training labels
};

struct SplitResult {
  double feature_auc = 0.0;
  double raw_auc = 0.0;
  Stage stage = Stage::early;
  Arm arm = Arm::clean;
};

struct CheckpointRecord {
  Stage stage = Stage::early;
  Index epoch = 0;
  NCReport test_report;                         // test features, clean labels
  std::array<std::optional<double>, 2> f1;      // per group, clean test labels
  SplitResult split;
};

struct ExperimentRecord {
  Arm arm = Arm::clean;
  std::uint64_t seed = 0;
  Index flip_count = 0;
  std::vector<EpochRecord> epochs;
  std::vector<CheckpointRecord> checkpoints;  // early, final
  std::vector<Index> test_indices;
  std::vector<Index> flipped_indices;
  std::vector<std::string> warnings;
  std::optional<std::string> error;

  const CheckpointRecord* checkpoint(Stage stage) const;
  const EpochRecord* epoch(Index number) const;
};

// Seed-derived random streams of one run.
namespace streams {
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t flips = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t shuffle = 5;
inline constexpr std::uint64_t probe = 6;
inline constexpr std::uint64_t raw_probe = 7;
}  // namespace streams

// Data, split and bias of one seed; shared by both arms.
struct PreparedData {
  Dataset clean;
  Dataset biased;
  FlipRecord flips;
  SplitAssignment splits;
};
PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed);

// Group-attribute AUC on raw inputs for one seed.
double raw_auc_for_seed(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed);

struct RunOptions {
  bool track_epochs = true;              // per-epoch train NC reports
  std::optional<double> raw_auc;         // reuse a precomputed raw probe
  // Receives each checkpoint model (stage, state) for persistence.
  std::function<void(Stage, const ModelState&)> on_checkpoint;
};

ExperimentRecord run_arm(const ExperimentConfig& cfg, Arm arm, std::uint64_t seed,
                         const RunOptions& options = {});

struct SuiteOptions {
  unsigned threads = 1;
  bool track_epochs = true;
  // Called once per record in (seed, arm) order, as soon as the prefix is complete.
  std::function<void(const ExperimentRecord&)> on_record;
  std::function<void(const ExperimentRecord&, Stage, const ModelState&)> on_checkpoint;
};

// Both arms for every seed: records ordered seed by seed, clean before biased.
std::vector<ExperimentRecord> run_suite(const ExperimentConfig& cfg, const SuiteOptions& options = {});

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  Index count = 0;
};
Summary summarize(std::span<const double> values);

struct GroupComparison {
  Stage stage = Stage::early;
  int group = 0;
  Index n_seeds = 0;
  Summary delta_nc1;  // biased - clean, test NC1 of the group
  Summary delta_f1;   // biased - clean, test F1 of the group
  UTestResult u_test;  // biased F1 vs clean F1 across seeds
  bool significant = false;
};

struct StageAssociation {
  Stage stage = Stage::early;
  Index n_seeds = 0;
  std::optional<double> kendall_tau;  // biased arm feature_auc vs raw_auc
};

struct ComparisonReport {
  static constexpr double p_critical = 0.05;
  std::vector<GroupComparison> groups;
  std::vector<StageAssociation> associations;
  std::vector<std::string> warnings;

  const GroupComparison* find(Stage stage, int group) const;
  const StageAssociation* association(Stage stage) const;
};

ComparisonReport compare_arms(std::span<const ExperimentRecord> records);

// -- serialisation ------------------------------------------------------------

inline constexpr std::string_view kEpochsFile = "epochs.csv";
inline constexpr std::string_view kCheckpointsFile = "checkpoints.csv";
inline constexpr std::string_view kComparisonFile = "comparison.csv";
inline constexpr std::string_view kManifestFile = "manifest.json";

std::string epochs_csv_header();
std::string checkpoints_csv_header();
std::string comparison_csv_header();
std::string epochs_csv_rows(const ExperimentRecord& record);
std::string checkpoints_csv_rows(const ExperimentRecord& record);
std::string comparison_csv(const ComparisonReport& report);
nlohmann::json manifest(const ExperimentConfig& cfg);

// Appends records to epochs.csv and checkpoints.csv as they arrive.
class RecordWriter {
 public:
  explicit RecordWriter(const std::filesystem::path& dir);
  void append(const ExperimentRecord& record);

 private:
  std::filesystem::path epochs_;
  std::filesystem::path checkpoints_;
};

// Writes every file of a finished suite into `dir`.
void serialize(const ExperimentConfig& cfg, std::span<const ExperimentRecord> records,
               const ComparisonReport& report, const std::filesystem::path& dir);
void write_comparison(const ComparisonReport& report, const std::filesystem::path& path);
void write_manifest(const ExperimentConfig& cfg, const std::filesystem::path& path);

// Rebuilds records from epochs.csv and checkpoints.csv (either may be absent).
std::vector<ExperimentRecord> read_records(const std::filesystem::path& epochs_csv,
                                           const std::filesystem::path& checkpoints_csv);
ComparisonReport read_comparison(const std::filesystem::path& path);

}  // namespace nclab
