#include "nclab/plot.hpp"

#include "nclab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace nclab {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr const char* kBiasedColor = "#ff7f0e";
constexpr const char* kCleanColor = "#1f77b4";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  if (std::abs(v) < 1e-12) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* arm_color(Arm arm) { return arm == Arm::biased ? kBiasedColor : kCleanColor; }

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool empty() const { return lo > hi; }
  // Widens a degenerate range so ticks and scales stay defined.
  Range padded() const {
    Range r = *this;
    if (r.empty()) return {0.0, 1.0};
    if (r.hi - r.lo < 1e-12) {
      const double pad = std::max(std::abs(r.lo) * 0.1, 0.5);
      r.lo -= pad;
      r.hi += pad;
    }
    return r;
  }
};

// One plotting area with linear axes.
class Panel {
 public:
  Panel(double left, double top, double width, double height, Range x, Range y)
      : left_(left), top_(top), width_(width), height_(height) {
    x = x.padded();
    y = y.padded();
    xticks_ = nice_ticks(x.lo, x.hi);
    yticks_ = nice_ticks(y.lo, y.hi);
    x_ = {std::min(x.lo, xticks_.front()), std::max(x.hi, xticks_.back())};
    y_ = {std::min(y.lo, yticks_.front()), std::max(y.hi, yticks_.back())};
  }

  double px(double x) const { return left_ + (x - x_.lo) / (x_.hi - x_.lo) * width_; }
  double py(double y) const { return top_ + height_ - (y - y_.lo) / (y_.hi - y_.lo) * height_; }
  const Range& xrange() const { return x_; }
  const Range& yrange() const { return y_; }

  void axes(std::ostream& os, std::string_view xlabel, std::string_view ylabel, bool x_ticks = true) const {
    os << "<rect x=\"" << num(left_) << "\" y=\"" << num(top_) << "\" width=\"" << num(width_) << "\" height=\""
       << num(height_) << "\" fill=\"none\" stroke=\"#333333\"/>\n";
    if (x_ticks) {
      for (double t : xticks_) {
        os << "<line x1=\"" << num(px(t)) << "\" y1=\"" << num(top_ + height_) << "\" x2=\"" << num(px(t))
           << "\" y2=\"" << num(top_ + height_ + 4) << "\" stroke=\"#333333\"/>\n";
        os << "<text x=\"" << num(px(t)) << "\" y=\"" << num(top_ + height_ + 16)
           << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
      }
    }
    for (double t : yticks_) {
      os << "<line x1=\"" << num(left_ - 4) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(left_) << "\" y2=\""
         << num(py(t)) << "\" stroke=\"#333333\"/>\n";
      os << "<text x=\"" << num(left_ - 6) << "\" y=\"" << num(py(t) + 4) << "\" text-anchor=\"end\">"
         << tick_label(t) << "</text>\n";
    }
    os << "<text x=\"" << num(left_ + width_ / 2) << "\" y=\"" << num(top_ + height_ + 34)
       << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
    os << "<text x=\"" << num(left_ - 46) << "\" y=\"" << num(top_ + height_ / 2)
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << num(left_ - 46) << ' ' << num(top_ + height_ / 2)
       << ")\">" << escape(ylabel) << "</text>\n";
  }

 private:
  double left_, top_, width_, height_;
  Range x_, y_;
  std::vector<double> xticks_, yticks_;
};

void open_svg(std::ostream& os, std::string_view title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" width=\""
     << kWidth << "\" height=\"" << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    os << "<text x=\"" << num(kWidth / 2) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(title)
       << "</text>\n";
  }
}

void legend_entry(std::ostream& os, double x, double y, const char* color, bool dashed, std::string_view text) {
  os << "<line x1=\"" << num(x) << "\" y1=\"" << num(y) << "\" x2=\"" << num(x + 20) << "\" y2=\"" << num(y)
     << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
  os << "<text x=\"" << num(x + 26) << "\" y=\"" << num(y + 4) << "\">" << escape(text) << "</text>\n";
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

MeanStd mean_std(const std::vector<double>& values) {
  std::vector<double> finite;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  const Summary s = summarize(finite);
  return {s.mean, s.std, finite.size()};
}

double epoch_metric(const EpochRecord& e, std::string_view metric) {
  const NCReport& r = e.train_report;
  if (metric == "nc1") return r.nc1_global;
  if (metric == "nc1_g0") return r.nc1_group(0);
  if (metric == "nc1_g1") return r.nc1_group(1);
  if (metric == "nc2_equinorm") return r.nc2_equinorm;
  if (metric == "nc2_equiangular") return r.nc2_equiangular;
  if (metric == "nc3_selfdual") return r.nc3_selfdual;
  if (metric == "nc4_mismatch") return r.nc4_mismatch;
  if (metric == "config_divergence") return r.config_divergence;
  if (metric == "group_identity_residual") return r.group_identity_residual;
  if (metric == "train_loss") return e.train_loss;
  if (metric == "val_loss") return e.val_loss;
  if (metric == "train_accuracy") return e.train_accuracy;
  throw ConfigError("unknown epoch metric '" + std::string(metric) + "'");
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::nc1_per_epoch: return "nc1-per-epoch";
    case PlotKind::split_scatter: return "split-scatter";
    case PlotKind::delta_bars: return "delta-bars";
  }
  return "?";
}

PlotKind plot_kind_from_string(std::string_view name) {
  if (name == "nc1-per-epoch") return PlotKind::nc1_per_epoch;
  if (name == "split-scatter") return PlotKind::split_scatter;
  if (name == "delta-bars") return PlotKind::delta_bars;
  throw ConfigError("unknown plot kind '" + std::string(name) + "'");
}

void PlotSpec::validate() const {
  if (!std::filesystem::exists(input)) throw IoError("plot input '" + input.string() + "' does not exist");
  if (output.empty()) throw ConfigError("plot output path is empty");
}

std::vector<double> nice_ticks(double lo, double hi, int target) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) return {lo};
  const double raw = (hi - lo) / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  const auto first = static_cast<long long>(std::floor(lo / step + 1e-9));
  const auto last = static_cast<long long>(std::ceil(hi / step - 1e-9));
  for (long long i = first; i <= last; ++i) ticks.push_back(static_cast<double>(i) * step);
  return ticks;
}

std::string nc1_per_epoch_svg(std::span<const ExperimentRecord> records, const PlotSpec& spec) {
  // arm -> epoch -> values across seeds
  std::map<Arm, std::map<Index, std::vector<double>>> values;
  for (const auto& r : records) {
    for (const auto& e : r.epochs) values[r.arm][e.epoch].push_back(epoch_metric(e, spec.metric));
  }
  if (values.empty()) throw ContractError("nc1-per-epoch plot: no epoch rows");

  std::map<Arm, std::vector<std::pair<Index, MeanStd>>> series;
  Range xr, yr;
  for (const auto& [arm, by_epoch] : values) {
    for (const auto& [epoch, vals] : by_epoch) {
      const MeanStd ms = mean_std(vals);
      if (ms.count == 0) continue;
      series[arm].emplace_back(epoch, ms);
      xr.add(static_cast<double>(epoch));
      yr.add(ms.mean - ms.std);
      yr.add(ms.mean + ms.std);
    }
  }
  if (xr.empty()) throw ContractError("nc1-per-epoch plot: metric '" + spec.metric + "' has no finite values");

  std::ostringstream os;
  open_svg(os, spec.title);
  const Panel panel(70, 30, 540, 320, xr, yr);
  for (Arm arm : {Arm::clean, Arm::biased}) {
    const auto it = series.find(arm);
    if (it == series.end()) continue;
    const auto& pts = it->second;
    const bool band = std::any_of(pts.begin(), pts.end(), [](const auto& p) { return p.second.count > 1; });
    if (band) {
      os << "<polygon fill=\"" << arm_color(arm) << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (const auto& [epoch, ms] : pts) {
        os << num(panel.px(static_cast<double>(epoch))) << ',' << num(panel.py(ms.mean + ms.std)) << ' ';
      }
      for (auto p = pts.rbegin(); p != pts.rend(); ++p) {
        os << num(panel.px(static_cast<double>(p->first))) << ',' << num(panel.py(p->second.mean - p->second.std))
           << ' ';
      }
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << arm_color(arm) << "\" stroke-width=\"2\""
       << (arm == Arm::clean ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
    for (const auto& [epoch, ms] : pts) {
      os << num(panel.px(static_cast<double>(epoch))) << ',' << num(panel.py(ms.mean)) << ' ';
    }
    os << "\"/>\n";
  }
  panel.axes(os, spec.x_label.empty() ? "epoch" : spec.x_label,
             spec.y_label.empty() ? "train " + spec.metric : spec.y_label);
  legend_entry(os, 480, 46, kBiasedColor, false, "biased");
  legend_entry(os, 480, 62, kCleanColor, true, "clean");
  os << "</svg>\n";
  return os.str();
}

std::string split_scatter_svg(std::span<const ExperimentRecord> records, const PlotSpec& spec) {
  struct Cell {
    std::vector<double> raw, feature;
  };
  std::map<std::pair<Arm, Stage>, Cell> cells;
  for (const auto& r : records) {
    for (const auto& c : r.checkpoints) {
      auto& cell = cells[{r.arm, c.stage}];
      cell.raw.push_back(c.split.raw_auc);
      cell.feature.push_back(c.split.feature_auc);
    }
  }
  if (cells.empty()) throw ContractError("split-scatter plot: no checkpoint rows");

  Range range;
  std::map<std::pair<Arm, Stage>, std::pair<MeanStd, MeanStd>> points;
  for (const auto& [key, cell] : cells) {
    const MeanStd x = mean_std(cell.raw), y = mean_std(cell.feature);
    if (x.count == 0 || y.count == 0) continue;
    points[key] = {x, y};
    range.add(x.mean - x.std);
    range.add(x.mean + x.std);
    range.add(y.mean - y.std);
    range.add(y.mean + y.std);
  }
  if (points.empty()) throw ContractError("split-scatter plot: no finite AUC values");
  range.add(std::max(0.0, range.lo - 0.05));
  range.add(std::min(1.0, range.hi + 0.05));

  std::ostringstream os;
  open_svg(os, spec.title);
  const Panel panel(70, 30, 320, 320, range, range);
  const double lo = std::max(panel.xrange().lo, panel.yrange().lo);
  const double hi = std::min(panel.xrange().hi, panel.yrange().hi);
  os << "<line x1=\"" << num(panel.px(lo)) << "\" y1=\"" << num(panel.py(lo)) << "\" x2=\"" << num(panel.px(hi))
     << "\" y2=\"" << num(panel.py(hi)) << "\" stroke=\"#999999\" stroke-dasharray=\"3 3\"/>\n";
  for (const auto& [key, xy] : points) {
    const auto& [x, y] = xy;
    const char* color = arm_color(key.first);
    const double cx = panel.px(x.mean), cy = panel.py(y.mean);
    os << "<line x1=\"" << num(panel.px(x.mean - x.std)) << "\" y1=\"" << num(cy) << "\" x2=\""
       << num(panel.px(x.mean + x.std)) << "\" y2=\"" << num(cy) << "\" stroke=\"" << color << "\"/>\n";
    os << "<line x1=\"" << num(cx) << "\" y1=\"" << num(panel.py(y.mean - y.std)) << "\" x2=\"" << num(cx)
       << "\" y2=\"" << num(panel.py(y.mean + y.std)) << "\" stroke=\"" << color << "\"/>\n";
    if (key.second == Stage::early) {
      os << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"5\" fill=\"" << color << "\"/>\n";
    } else {
      os << "<rect x=\"" << num(cx - 5) << "\" y=\"" << num(cy - 5) << "\" width=\"10\" height=\"10\" fill=\""
         << color << "\"/>\n";
    }
  }
  panel.axes(os, spec.x_label.empty() ? "raw data AUC" : spec.x_label,
             spec.y_label.empty() ? "feature AUC" : spec.y_label);
  legend_entry(os, 420, 46, kBiasedColor, false, "biased");
  legend_entry(os, 420, 62, kCleanColor, false, "clean");
  os << "<circle cx=\"430\" cy=\"82\" r=\"5\" fill=\"#555555\"/>\n<text x=\"446\" y=\"86\">early stop</text>\n";
  os << "<rect x=\"425\" y=\"95\" width=\"10\" height=\"10\" fill=\"#555555\"/>\n<text x=\"446\" y=\"104\">final</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string delta_bars_svg(const ComparisonReport& report, const PlotSpec& spec) {
  if (report.groups.empty()) throw ContractError("delta-bars plot: no comparison rows");

  std::ostringstream os;
  open_svg(os, spec.title);
  const std::size_t n = report.groups.size();
  for (int panel_index : {0, 1}) {
    const bool f1 = panel_index == 1;
    Range yr;
    yr.add(0.0);
    for (const auto& g : report.groups) {
      const Summary& s = f1 ? g.delta_f1 : g.delta_nc1;
      yr.add(s.mean - s.std);
      yr.add(s.mean + s.std);
    }
    yr.hi += (yr.hi - yr.lo) * 0.1;
    const double left = f1 ? 390.0 : 70.0;
    const Panel panel(left, 30, 230, 300, Range{0.0, static_cast<double>(n)}, yr);
    os << "<line x1=\"" << num(panel.px(0)) << "\" y1=\"" << num(panel.py(0)) << "\" x2=\""
       << num(panel.px(static_cast<double>(n))) << "\" y2=\"" << num(panel.py(0)) << "\" stroke=\"#333333\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
      const auto& g = report.groups[i];
      const Summary& s = f1 ? g.delta_f1 : g.delta_nc1;
      const double x0 = panel.px(static_cast<double>(i) + 0.2), x1 = panel.px(static_cast<double>(i) + 0.8);
      const double cx = (x0 + x1) / 2;
      const char* fill = g.group == 1 ? kBiasedColor : kCleanColor;
      if (std::isfinite(s.mean)) {
        const double ya = panel.py(std::max(s.mean, 0.0)), yb = panel.py(std::min(s.mean, 0.0));
        os << "<rect x=\"" << num(x0) << "\" y=\"" << num(ya) << "\" width=\"" << num(x1 - x0) << "\" height=\""
           << num(yb - ya) << "\" fill=\"" << fill << "\"" << (g.stage == Stage::early ? " fill-opacity=\"0.5\"" : "")
           << "/>\n";
        os << "<line x1=\"" << num(cx) << "\" y1=\"" << num(panel.py(s.mean - s.std)) << "\" x2=\"" << num(cx)
           << "\" y2=\"" << num(panel.py(s.mean + s.std)) << "\" stroke=\"#333333\"/>\n";
        if (f1 && g.significant) {
          os << "<text x=\"" << num(cx) << "\" y=\"" << num(panel.py(s.mean + s.std) - 4)
             << "\" text-anchor=\"middle\" font-size=\"16\">*</text>\n";
        }
      }
      os << "<text x=\"" << num(cx) << "\" y=\"" << num(346) << "\" text-anchor=\"middle\">" << to_string(g.stage)
         << "</text>\n";
      os << "<text x=\"" << num(cx) << "\" y=\"" << num(360) << "\" text-anchor=\"middle\">group " << g.group
         << "</text>\n";
    }
    panel.axes(os, "", f1 ? "delta F1 (biased - clean)" : "delta test NC1 (biased - clean)", false);
  }
  if (!spec.y_label.empty()) {
    os << "<text x=\"" << num(kWidth / 2) << "\" y=\"390\" text-anchor=\"middle\">" << escape(spec.y_label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_plot(const PlotSpec& spec) {
  spec.validate();
  std::string svg;
  switch (spec.kind) {
    case PlotKind::nc1_per_epoch: {
      const auto records = read_records(spec.input, {});
      svg = nc1_per_epoch_svg(records, spec);
      break;
    }
    case PlotKind::split_scatter: {
      const auto records = read_records({}, spec.input);
      svg = split_scatter_svg(records, spec);
      break;
    }
    case PlotKind::delta_bars:
      svg = delta_bars_svg(read_comparison(spec.input), spec);
      break;
  }
  write_file(spec.output, svg);
}

}  // namespace nclab
