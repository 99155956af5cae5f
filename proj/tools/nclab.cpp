#include "nclab/csv.hpp"
#include "nclab/errors.hpp"
#include "nclab/experiment.hpp"
#include "nclab/plot.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

namespace {

using namespace nclab;

// "5" means seeds 0..4; "3,7,11" lists them.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (text.find(',') == std::string::npos) {
    const long long count = csv::to_integer(text, 0);
    if (count < 1) throw ConfigError("--seeds count must be >= 1");
    for (long long i = 0; i < count; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
    return seeds;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const long long v = csv::to_integer(item, 0);
    if (v < 0) throw ConfigError("seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(v));
  }
  return seeds;
}

unsigned thread_count() {
  const char* env = std::getenv("NCLAB_THREADS");
  if (!env || !*env) return 1;
  const long long n = csv::to_integer(env, 0);
  if (n < 1) throw ConfigError("NCLAB_THREADS must be >= 1");
  return static_cast<unsigned>(n);
}

void print_report(const NCReport& r, std::ostream& os) {
  auto line = [&](const char* name, double v) { os << name << " = " << csv::format(v) << '\n'; };
  line("nc1", r.nc1_global);
  for (const auto& [a, v] : r.nc1_per_group) os << "nc1_g" << a << " = " << csv::format(v) << '\n';
  line("nc2_equinorm", r.nc2_equinorm);
  line("nc2_equiangular", r.nc2_equiangular);
  line("nc3_selfdual", r.nc3_selfdual);
  line("nc4_mismatch", r.nc4_mismatch);
  line("config_divergence", r.config_divergence);
  line("group_identity_residual", r.group_identity_residual);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
}

void print_comparison(const ComparisonReport& report, std::ostream& os) {
  for (const auto& g : report.groups) {
    os << to_string(g.stage) << " group " << g.group << ": dNC1 " << csv::format(g.delta_nc1.mean) << " +- "
       << csv::format(g.delta_nc1.std) << ", dF1 " << csv::format(g.delta_f1.mean) << " +- "
       << csv::format(g.delta_f1.std) << ", p " << csv::format(g.u_test.p_value) << (g.significant ? " *" : "")
       << '\n';
  }
  for (const auto& a : report.associations) {
    os << to_string(a.stage) << " kendall tau (raw vs feature AUC): "
       << (a.kendall_tau ? csv::format(*a.kendall_tau) : std::string("undefined")) << '\n';
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
}

Eigen::MatrixXd read_weights_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  if (t.rows.empty()) throw ParseError("weights file has no rows");
  Eigen::MatrixXd w(static_cast<Index>(t.rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      w(static_cast<Index>(r), static_cast<Index>(c)) = csv::to_double(t.rows[r][c], t.line_numbers[r]);
    }
  }
  return w;
}

// f0..f{p-1}, label, group; unlike a dataset CSV the labels may take any class index.
FeatureBatch read_features_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t label_col = t.column("label");
  const std::size_t group_col = t.column("group");
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0;; ++c) {
    const std::string name = "f" + std::to_string(c);
    if (!t.has_column(name)) break;
    feature_cols.push_back(t.column(name));
  }
  if (feature_cols.empty()) throw ParseError("features file has no f0 column");
  const auto n = static_cast<Index>(t.rows.size());
  FeatureBatch fb;
  fb.features.resize(n, static_cast<Index>(feature_cols.size()));
  fb.labels.resize(n);
  fb.groups.resize(n);
  for (Index r = 0; r < n; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    const std::size_t line = t.line_numbers[static_cast<std::size_t>(r)];
    for (std::size_t c = 0; c < feature_cols.size(); ++c) {
      fb.features(r, static_cast<Index>(c)) = csv::to_double(row[feature_cols[c]], line);
    }
    fb.labels(r) = static_cast<int>(csv::to_integer(row[label_col], line));
    fb.groups(r) = static_cast<int>(csv::to_integer(row[group_col], line));
  }
  return fb;
}

std::filesystem::path model_path(const std::filesystem::path& dir, const ExperimentRecord& r, Stage stage) {
  return dir / "models" /
         ("seed" + std::to_string(r.seed) + "_" + std::string(to_string(r.arm)) + "_" +
          std::string(to_string(stage)) + ".json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural collapse under label bias: data generation, training suites, metrics and plots"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Write a synthetic two-group Gaussian mixture as CSV");
  GenConfig gcfg;
  std::string gen_out = "data.csv";
  double gen_bias = 0.0;
  int gen_group = 1;
  gen->add_option("--out", gen_out, "Output CSV path")->capture_default_str();
  gen->add_option("--n-per-cell", gcfg.n_per_cell, "Samples per (class, group) cell")->capture_default_str();
  gen->add_option("--dim", gcfg.dim, "Input dimension")->capture_default_str();
  gen->add_option("--separation", gcfg.class_mean_separation, "Distance between class means")
      ->capture_default_str();
  gen->add_option("--group-shift", gcfg.group_shift, "Distance between group means")->capture_default_str();
  gen->add_option("--noise-sd", gcfg.noise_sd, "Isotropic noise standard deviation")->capture_default_str();
  gen->add_option("--seed", gcfg.seed, "Random seed")->capture_default_str();
  gen->add_option("--bias-fraction", gen_bias, "Fraction of target-group positives relabelled negative")
      ->capture_default_str();
  gen->add_option("--target-group", gen_group, "Group whose positives are flipped")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Train clean and biased arms over seeds and write results");
  const ExperimentConfig defaults;
  std::string config_path, run_out, seeds_text;
  double bias_fraction = defaults.bias_fraction;
  Index epochs = defaults.train.max_epochs;
  bool quiet = false;
  run->add_option("--config", config_path, "Experiment config JSON (defaults when omitted)");
  run->add_option("--out", run_out, "Output directory (overrides config output_dir)")
      ->default_str(defaults.output_dir);
  auto* seeds_opt =
      run->add_option("--seeds", seeds_text, "Seed count N (seeds 0..N-1) or comma-separated list")
          ->default_str(std::to_string(defaults.seeds.size()));
  auto* bias_opt = run->add_option("--bias-fraction", bias_fraction, "Under-diagnosis fraction")
                       ->capture_default_str();
  auto* epochs_opt = run->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
  run->add_flag("--quiet", quiet, "Suppress progress and summary output");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Neural collapse metrics of a features CSV");
  std::string features_path, weights_path, metrics_model;
  int num_classes = 2;
  metrics->add_option("--features", features_path, "CSV with f0..f{p-1}, label, group")->required();
  metrics->add_option("--weights", weights_path, "Classifier weights CSV, one row per class");
  metrics->add_option("--model", metrics_model, "Saved model JSON supplying classifier weights");
  metrics->add_option("--classes", num_classes, "Number of classes")->capture_default_str();

  // split-test
  auto* split = app.add_subcommand("split-test", "Probe a saved model's features for the group attribute");
  std::string split_model, split_data, split_config;
  std::uint64_t split_seed = 0;
  split->add_option("--model", split_model, "Saved model JSON")->required();
  split->add_option("--data", split_data, "Dataset CSV")->required();
  split->add_option("--config", split_config, "Experiment config supplying split fractions and probe settings");
  split->add_option("--seed", split_seed, "Seed the split is derived from")->capture_default_str();

  // compare
  auto* compare = app.add_subcommand("compare", "Compare arms from record CSVs");
  std::string compare_in, compare_out;
  compare->add_option("--in", compare_in, "Directory holding checkpoints.csv")->required();
  compare->add_option("--out", compare_out, "Output comparison CSV (default: <in>/comparison.csv)");

  // plot
  auto* plot = app.add_subcommand("plot", "Render an SVG figure from result CSVs");
  PlotSpec spec;
  std::string kind_text, plot_in, plot_out;
  plot->add_option("--kind", kind_text, "nc1-per-epoch | split-scatter | delta-bars")
      ->required()
      ->check(CLI::IsMember({"nc1-per-epoch", "split-scatter", "delta-bars"}));
  plot->add_option("--in", plot_in, "epochs.csv, checkpoints.csv or comparison.csv")->required();
  plot->add_option("--out", plot_out, "Output SVG")->required();
  plot->add_option("--title", spec.title, "Figure title");
  plot->add_option("--x-label", spec.x_label, "x axis label");
  plot->add_option("--y-label", spec.y_label, "y axis label");
  plot->add_option("--metric", spec.metric, "epochs.csv column for nc1-per-epoch")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      Dataset ds = generate_gaussian_mixture(gcfg);
      if (gen_bias > 0.0) ds = inject_label_bias(ds, gen_group, gen_bias, derive_seed(gcfg.seed, 3)).first;
      write_csv_dataset(ds, gen_out);
    } else if (run->parsed()) {
      ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
      if (!run_out.empty()) cfg.output_dir = run_out;
      if (seeds_opt->count() > 0) cfg.seeds = parse_seeds(seeds_text);
      if (bias_opt->count() > 0) cfg.bias_fraction = bias_fraction;
      if (epochs_opt->count() > 0) cfg.train.max_epochs = epochs;
      cfg.validate();
      const std::filesystem::path out = cfg.output_dir;

      RecordWriter writer(out);
      std::filesystem::create_directories(out / "models");
      SuiteOptions options;
      options.threads = thread_count();
      options.on_record = [&](const ExperimentRecord& r) {
        writer.append(r);
        if (!quiet) {
          std::cerr << "seed " << r.seed << ' ' << to_string(r.arm);
          if (r.error) {
            std::cerr << ": failed: " << *r.error << '\n';
          } else if (const auto* cp = r.checkpoint(Stage::early)) {
            std::cerr << ": early stop at epoch " << cp->epoch << '\n';
          }
        }
        for (const auto& e : r.epochs) {
          if (e.train_report.group_identity_residual > 1e-12) {
            std::cerr << "warning: seed " << r.seed << ' ' << to_string(r.arm) << " epoch " << e.epoch
                      << ": group NC1 identity residual " << csv::format(e.train_report.group_identity_residual)
                      << '\n';
          }
        }
      };
      options.on_checkpoint = [&](const ExperimentRecord& r, Stage stage, const ModelState& model) {
        save_model(model, model_path(out, r, stage));
      };
      const auto records = run_suite(cfg, options);
      const ComparisonReport report = compare_arms(records);
      write_comparison(report, out / kComparisonFile);
      write_manifest(cfg, out / kManifestFile);

      PlotSpec p;
      p.kind = PlotKind::nc1_per_epoch;
      p.input = out / kEpochsFile;
      p.output = out / "nc1_per_epoch.svg";
      p.title = "Train NC1 per epoch";
      emit_plot(p);
      p.kind = PlotKind::split_scatter;
      p.input = out / kCheckpointsFile;
      p.output = out / "split_scatter.svg";
      p.title = "Group information: features vs raw data";
      emit_plot(p);
      if (!report.groups.empty()) {
        p.kind = PlotKind::delta_bars;
        p.input = out / kComparisonFile;
        p.output = out / "delta_bars.svg";
        p.title = "Biased minus clean, per group";
        emit_plot(p);
      }
      if (!quiet) print_comparison(report, std::cout);
    } else if (metrics->parsed()) {
      const FeatureBatch fb = read_features_csv(features_path);
      Eigen::MatrixXd w;
      if (!weights_path.empty() && !metrics_model.empty()) throw ConfigError("give --weights or --model, not both");
      if (!weights_path.empty()) w = read_weights_csv(weights_path);
      if (!metrics_model.empty()) w = load_model(metrics_model).classifier_weights;
      print_report(nc_report(fb, w, num_classes), std::cout);
    } else if (split->parsed()) {
      const ExperimentConfig cfg = split_config.empty() ? ExperimentConfig{} : load_config(split_config);
      const ModelState model = load_model(split_model);
      const Dataset ds = load_csv_dataset(split_data);
      const SplitAssignment splits = split_dataset(ds, cfg.split, derive_seed(split_seed, streams::split));
      const double auc =
          split_test(model, ds, splits, cfg.probes.linear, derive_seed(split_seed, streams::probe));
      std::cout << "feature_auc = " << csv::format(auc) << '\n';
    } else if (compare->parsed()) {
      const std::filesystem::path in = compare_in;
      if (!std::filesystem::exists(in / kCheckpointsFile)) {
        throw IoError("'" + (in / kCheckpointsFile).string() + "' does not exist");
      }
      const auto records = read_records({}, in / kCheckpointsFile);
      const ComparisonReport report = compare_arms(records);
      write_comparison(report, compare_out.empty() ? in / kComparisonFile : std::filesystem::path(compare_out));
      print_comparison(report, std::cout);
    } else if (plot->parsed()) {
      spec.kind = plot_kind_from_string(kind_text);
      spec.input = plot_in;
      spec.output = plot_out;
      emit_plot(spec);
    }
  } catch (const nclab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
