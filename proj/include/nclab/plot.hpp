#pragma once

#include "nclab/experiment.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nclab {

enum class PlotKind { nc1_per_epoch, split_scatter, delta_bars };

std::string_view to_string(PlotKind kind);
PlotKind plot_kind_from_string(std::string_view name);

struct PlotSpec {
  PlotKind kind = PlotKind::nc1_per_epoch;
  std::filesystem::path input;   // epochs.csv, checkpoints.csv or comparison.csv
  std::filesystem::path output;  // SVG
  std::string title;
  std::string x_label;  // empty: chosen by kind
  std::string y_label;
  // nc1-per-epoch only: column of epochs.csv to average over seeds.
  std::string metric = "nc1";

  void validate() const;
};

// Tick positions covering [lo, hi] with a 1/2/5 step.
std::vector<double> nice_ticks(double lo, double hi, int target = 5);

// Mean line per arm with a +-1 std band across seeds (no band for one seed).
std::string nc1_per_epoch_svg(std::span<const ExperimentRecord> records, const PlotSpec& spec);
// feature_auc against raw_auc per arm and stage, std error bars, y = x reference.
std::string split_scatter_svg(std::span<const ExperimentRecord> records, const PlotSpec& spec);
// Per-group delta NC1 and delta F1 bars; '*' where the F1 test is significant.
std::string delta_bars_svg(const ComparisonReport& report, const PlotSpec& spec);

// Reads spec.input, renders by kind and writes spec.output.
void emit_plot(const PlotSpec& spec);

}  // namespace nclab
