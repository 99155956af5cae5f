#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

#include "nclab/errors.hpp"
#include "nclab/experiment.hpp"
#include "nclab/plot.hpp"

#include <set>

using namespace nclab;
using testing_support::slurp;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.data.n_per_cell = 20;
  cfg.data.dim = 4;
  cfg.data.class_mean_separation = 4.0;
  cfg.data.group_shift = 2.0;
  cfg.data.noise_sd = 1.0;
  cfg.architecture.hidden_widths = {8, 8};
  cfg.train.max_epochs = 6;
  cfg.train.learning_rate = 0.05;
  cfg.seeds = {0, 1};
  return cfg;
}

ExperimentRecord record_with_f1(Arm arm, std::uint64_t seed, double f1_g1, double raw, double feature) {
  ExperimentRecord r;
  r.arm = arm;
  r.seed = seed;
  for (Stage stage : {Stage::early, Stage::final}) {
    CheckpointRecord c;
    c.stage = stage;
    c.epoch = stage == Stage::early ? 3 : 10;
    c.f1 = {0.9, f1_g1};
    c.test_report.nc1_global = 1.0;
    c.test_report.nc1_per_group = {{0, 1.0}, {1, arm == Arm::biased ? 2.0 : 1.0}};
    c.split = {feature, raw, stage, arm};
    r.checkpoints.push_back(c);
  }
  return r;
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  const ExperimentConfig def;
  CHECK(def.bias_fraction == 0.25);
  CHECK(def.seeds.size() == 10);
  CHECK(def.train.max_epochs == 200);
  CHECK(def.resolved_architecture().input_dim == def.data.dim);

  const ExperimentConfig back = config_from_json(to_json(small_config()));
  CHECK(to_json(back) == to_json(small_config()));

  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"bias_fractoin", 0.3}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"train", {{"lr", 0.3}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"bias_fraction", 1.5}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"seeds", {1, 1}}}), ConfigError);
  CHECK(config_from_json(nlohmann::json{{"seeds", 3}}).seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(config_from_json(nlohmann::json{{"seeds", {4, 9}}}).seeds == std::vector<std::uint64_t>{4, 9});
  CHECK(config_from_json(nlohmann::json::object()).data.dim == def.data.dim);
}

TEST_CASE("shipped default config matches the built-in defaults") {
  const ExperimentConfig shipped = load_config(std::filesystem::path(NCLAB_SOURCE_DIR) / "configs" / "default.json");
  CHECK(to_json(shipped) == to_json(ExperimentConfig{}));
}

TEST_CASE("prepared data biases train and validation only") {
  const ExperimentConfig cfg = small_config();
  const PreparedData d = prepare_data(cfg, 3);
  CHECK(d.clean.labels == d.clean.clean_labels);
  CHECK(d.biased.clean_labels == d.clean.labels);
  std::set<Index> test(d.splits.test.begin(), d.splits.test.end());
  for (Index i : d.flips.flipped_indices) {
    CHECK(test.count(i) == 0);
    CHECK(d.biased.groups[i] == 1);
  }
  for (Index i : d.splits.test) CHECK(d.biased.labels[i] == d.biased.clean_labels[i]);
  for (const auto* part : {&d.splits.train, &d.splits.val}) {
    Index positives = 0, flipped = 0;
    for (Index i : *part) {
      if (d.clean.groups[i] == 1 && d.clean.labels[i] == 1) ++positives;
      if (d.biased.labels[i] != d.clean.labels[i]) ++flipped;
    }
    CHECK(flipped == static_cast<Index>(std::floor(0.25 * static_cast<double>(positives) + 0.5)));
  }
  const PreparedData again = prepare_data(cfg, 3);
  CHECK(again.biased == d.biased);
}

TEST_CASE("single arm contract") {
  ExperimentConfig cfg = small_config();
  const ExperimentRecord clean = run_arm(cfg, Arm::clean, 0);
  CHECK_FALSE(clean.error.has_value());
  CHECK(clean.flip_count == 0);
  CHECK(clean.flipped_indices.empty());
  CHECK(clean.epochs.size() == 6);
  REQUIRE(clean.checkpoints.size() == 2);
  CHECK(clean.checkpoint(Stage::final)->epoch == 6);
  for (const auto& e : clean.epochs) CHECK(e.train_report.group_identity_residual <= 1e-12);

  const ExperimentRecord biased = run_arm(cfg, Arm::biased, 0);
  CHECK(biased.flip_count > 0);
  CHECK(biased.test_indices == clean.test_indices);

  cfg.train.max_epochs = 1;
  const ExperimentRecord one = run_arm(cfg, Arm::biased, 0);
  const auto* e = one.checkpoint(Stage::early);
  const auto* f = one.checkpoint(Stage::final);
  CHECK(e->epoch == f->epoch);
  CHECK(e->test_report.nc1_global == f->test_report.nc1_global);
  CHECK(e->f1 == f->f1);
  CHECK(e->split.feature_auc == f->split.feature_auc);
}

TEST_CASE("suite ordering, threading and determinism") {
  const ExperimentConfig cfg = small_config();
  std::vector<std::pair<std::uint64_t, Arm>> seen;
  SuiteOptions opt;
  opt.on_record = [&](const ExperimentRecord& r) { seen.emplace_back(r.seed, r.arm); };
  const auto records = run_suite(cfg, opt);
  REQUIRE(records.size() == 4);
  const std::vector<std::pair<std::uint64_t, Arm>> expected{
      {0, Arm::clean}, {0, Arm::biased}, {1, Arm::clean}, {1, Arm::biased}};
  CHECK(seen == expected);
  CHECK(records[0].test_indices == records[1].test_indices);
  CHECK(records[0].checkpoint(Stage::early)->split.raw_auc == records[1].checkpoint(Stage::early)->split.raw_auc);

  SuiteOptions threaded;
  threaded.threads = 3;
  const auto parallel = run_suite(cfg, threaded);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(epochs_csv_rows(parallel[i]) == epochs_csv_rows(records[i]));
    CHECK(checkpoints_csv_rows(parallel[i]) == checkpoints_csv_rows(records[i]));
  }

  const auto a = testing_support::scratch_dir("exp_a");
  const auto b = testing_support::scratch_dir("exp_b");
  serialize(cfg, records, compare_arms(records), a);
  serialize(cfg, parallel, compare_arms(parallel), b);
  for (auto name : {kEpochsFile, kCheckpointsFile, kComparisonFile, kManifestFile}) {
    CHECK(slurp(a / name) == slurp(b / name));
  }
}

TEST_CASE("ten seeds give twenty records") {
  ExperimentConfig cfg = small_config();
  cfg.train.max_epochs = 1;
  cfg.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  SuiteOptions opt;
  opt.track_epochs = false;
  CHECK(run_suite(cfg, opt).size() == 20);
}

TEST_CASE("comparison on hand-built records") {
  std::vector<ExperimentRecord> records;
  const double clean_f1[] = {0.4, 0.5, 0.6};
  const double biased_f1[] = {0.1, 0.2, 0.3};
  for (std::uint64_t s = 0; s < 3; ++s) {
    const double auc = 0.6 + 0.1 * static_cast<double>(s);
    records.push_back(record_with_f1(Arm::clean, s, clean_f1[s], auc, auc - 0.05));
    records.push_back(record_with_f1(Arm::biased, s, biased_f1[s], auc, auc - 0.05));
  }
  const ComparisonReport rep = compare_arms(records);
  const auto* g1 = rep.find(Stage::final, 1);
  REQUIRE(g1 != nullptr);
  CHECK(g1->u_test.u_statistic == 0.0);
  CHECK(g1->u_test.p_value == doctest::Approx(0.1));
  CHECK(g1->delta_f1.mean == doctest::Approx(-0.3));
  CHECK(g1->delta_nc1.mean == doctest::Approx(1.0));
  CHECK_FALSE(g1->significant);
  REQUIRE(rep.association(Stage::early)->kendall_tau.has_value());
  CHECK(*rep.association(Stage::early)->kendall_tau == doctest::Approx(1.0));

  const auto* g0 = rep.find(Stage::early, 0);
  CHECK(g0->delta_f1.mean == 0.0);
  CHECK(g0->u_test.p_value == 1.0);

  std::vector<ExperimentRecord> lonely(records.begin(), records.begin() + 2);
  const ComparisonReport thin = compare_arms(lonely);
  CHECK(thin.groups.empty());
  CHECK_FALSE(thin.warnings.empty());
}

TEST_CASE("identical arms compare as a null") {
  ExperimentConfig cfg = small_config();
  cfg.bias_fraction = 0.0;
  cfg.seeds = {0, 1, 2};
  SuiteOptions opt;
  opt.track_epochs = false;
  const auto records = run_suite(cfg, opt);
  const ComparisonReport rep = compare_arms(records);
  for (const auto& g : rep.groups) {
    CHECK(g.delta_f1.mean == 0.0);
    CHECK(g.delta_f1.std == 0.0);
    CHECK(g.u_test.p_value == doctest::Approx(1.0));
  }
}

TEST_CASE("serialisation round trip") {
  const ExperimentConfig cfg = small_config();
  const auto records = run_suite(cfg);
  const ComparisonReport rep = compare_arms(records);
  const auto dir = testing_support::scratch_dir("exp_rt");
  serialize(cfg, records, rep, dir);

  const auto back = read_records(dir / kEpochsFile, dir / kCheckpointsFile);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].arm == records[i].arm);
    CHECK(back[i].seed == records[i].seed);
    CHECK(back[i].flip_count == records[i].flip_count);
    REQUIRE(back[i].epochs.size() == records[i].epochs.size());
    for (std::size_t e = 0; e < records[i].epochs.size(); ++e) {
      CHECK(back[i].epochs[e].train_loss == doctest::Approx(records[i].epochs[e].train_loss).epsilon(1e-8));
      CHECK(back[i].epochs[e].train_report.nc1_global ==
            doctest::Approx(records[i].epochs[e].train_report.nc1_global).epsilon(1e-8));
    }
    for (Stage s : {Stage::early, Stage::final}) {
      const auto* a = records[i].checkpoint(s);
      const auto* b = back[i].checkpoint(s);
      CHECK(b->epoch == a->epoch);
      CHECK(b->test_report.nc1_group(1) == doctest::Approx(a->test_report.nc1_group(1)).epsilon(1e-8));
      CHECK(b->f1[1].has_value() == a->f1[1].has_value());
      CHECK(b->split.feature_auc == doctest::Approx(a->split.feature_auc).epsilon(1e-8));
    }
  }
  // Comparing the parsed records reproduces the written comparison.
  CHECK(comparison_csv(compare_arms(back)) == slurp(dir / kComparisonFile));
  const ComparisonReport parsed = read_comparison(dir / kComparisonFile);
  CHECK(parsed.groups.size() == rep.groups.size());

  const auto manifest_text = slurp(dir / kManifestFile);
  const auto m = nlohmann::json::parse(manifest_text);
  CHECK(m["config"]["bias_fraction"] == 0.25);
  CHECK(config_from_json(m["config"]).data.n_per_cell == 20);
}

TEST_CASE("empty record list writes headers only") {
  const auto dir = testing_support::scratch_dir("exp_empty");
  serialize(small_config(), {}, compare_arms({}), dir);
  CHECK(slurp(dir / kEpochsFile) == epochs_csv_header());
  CHECK(slurp(dir / kCheckpointsFile) == checkpoints_csv_header());
  CHECK(slurp(dir / kComparisonFile) == comparison_csv_header());
}

TEST_CASE("plots") {
  const ExperimentConfig cfg = small_config();
  const auto records = run_suite(cfg);
  PlotSpec spec;
  const std::string svg = nc1_per_epoch_svg(records, spec);
  CHECK(svg.find("stroke=\"#ff7f0e\"") != std::string::npos);
  CHECK(svg.find("stroke-dasharray=\"6 4\" points=") != std::string::npos);
  CHECK(svg.find("<polygon") != std::string::npos);
  CHECK(nc1_per_epoch_svg(records, spec) == svg);

  const std::vector<ExperimentRecord> one_seed(records.begin(), records.begin() + 2);
  const std::string single = nc1_per_epoch_svg(one_seed, spec);
  CHECK(single.find("<polygon") == std::string::npos);
  CHECK(single.find("<polyline") != std::string::npos);

  CHECK_THROWS_AS(nc1_per_epoch_svg({}, spec), ContractError);
  CHECK_THROWS_AS(split_scatter_svg({}, spec), ContractError);
  CHECK_THROWS_AS(delta_bars_svg(ComparisonReport{}, spec), ContractError);

  const std::string scatter = split_scatter_svg(records, spec);
  CHECK(scatter.find("stroke-dasharray=\"3 3\"") != std::string::npos);

  ComparisonReport rep;
  GroupComparison g;
  g.stage = Stage::final;
  g.group = 1;
  g.n_seeds = 10;
  g.delta_nc1 = {0.2, 0.1, 10};
  g.delta_f1 = {-0.1, 0.02, 10};
  g.significant = true;
  rep.groups.push_back(g);
  g.group = 0;
  g.significant = false;
  rep.groups.push_back(g);
  const std::string bars = delta_bars_svg(rep, spec);
  std::size_t stars = 0;
  for (std::size_t p = bars.find(">*</text>"); p != std::string::npos; p = bars.find(">*</text>", p + 1)) ++stars;
  CHECK(stars == 1);

  CHECK(plot_kind_from_string("delta-bars") == PlotKind::delta_bars);
  CHECK_THROWS_AS(plot_kind_from_string("pie"), ConfigError);
  CHECK(nice_ticks(0, 1) == std::vector<double>{0, 0.2, 0.4, 0.6000000000000001, 0.8, 1});
}
