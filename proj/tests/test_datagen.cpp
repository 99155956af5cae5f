#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"

#include "nclab/datagen.hpp"
#include "nclab/errors.hpp"

#include <fstream>
#include <random>
#include <set>

using namespace nclab;

namespace {

Index count_if(const Dataset& ds, int label, int group, bool clean = false) {
  const Eigen::VectorXi& y = clean ? ds.clean_labels : ds.labels;
  return ((y.array() == label) && (ds.groups.array() == group)).count();
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("generator layout and counts") {
  GenConfig cfg;
  cfg.n_per_cell = 1;
  const Dataset ds = generate_gaussian_mixture(cfg);
  CHECK(ds.size() == 4);
  CHECK(ds.dim() == 2);
  CHECK(ds.labels == Eigen::Vector4i(0, 0, 1, 1));
  CHECK(ds.groups == Eigen::Vector4i(0, 1, 0, 1));
  CHECK(ds.labels == ds.clean_labels);
  ds.validate();
}

TEST_CASE("generator is a pure function of its config") {
  GenConfig cfg;
  cfg.seed = 99;
  CHECK(generate_gaussian_mixture(cfg) == generate_gaussian_mixture(cfg));
  GenConfig other = cfg;
  other.seed = 100;
  CHECK_FALSE(generate_gaussian_mixture(cfg) == generate_gaussian_mixture(other));
}

TEST_CASE("empirical class means sit near the configured cell means") {
  GenConfig cfg;
  cfg.n_per_cell = 500;
  cfg.seed = 7;
  const Dataset ds = generate_gaussian_mixture(cfg);
  for (int k : {0, 1}) {
    Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
    for (Index i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == k) mean += ds.samples.row(i);
    mean /= 1000.0;
    const Eigen::RowVector2d target = (0.5 * (cfg.cell_mean(k, 0) + cfg.cell_mean(k, 1))).transpose();
    CHECK((mean - target).norm() < 0.15);
  }
  CHECK(cfg.cell_mean(1, 1) == Eigen::Vector2d(2, 1));
  CHECK(cfg.cell_mean(0, 0) == Eigen::Vector2d(-2, -1));
}

TEST_CASE("zero group shift gives groups the same distribution") {
  GenConfig cfg;
  cfg.n_per_cell = 20000;
  cfg.group_shift = 0.0;
  const Dataset ds = generate_gaussian_mixture(cfg);
  for (int k : {0, 1}) {
    Eigen::RowVector2d m[2] = {Eigen::RowVector2d::Zero(), Eigen::RowVector2d::Zero()};
    for (Index i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == k) m[ds.groups[i]] += ds.samples.row(i) / 20000.0;
    // 5 standard errors of a difference of two means.
    CHECK((m[0] - m[1]).norm() < 5 * std::sqrt(2.0 / 20000.0) * std::sqrt(2.0));
  }
}

TEST_CASE("config validation") {
  GenConfig bad;
  bad.noise_sd = 0;
  CHECK_THROWS_AS(generate_gaussian_mixture(bad), ConfigError);
  bad = GenConfig{};
  bad.dim = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.group_shift = 0;
  CHECK_NOTHROW(bad.validate());
  CHECK_THROWS_AS((SplitFractions{0.5, 0.2, 0.2}.validate()), ConfigError);
}

TEST_CASE("bias injection hand examples") {
  GenConfig cfg;
  cfg.n_per_cell = 8;
  const Dataset ds = generate_gaussian_mixture(cfg);
  const auto [biased, rec] = inject_label_bias(ds, 1, 0.25, 5);
  CHECK(rec.flipped_indices.size() == 2);
  for (Index i : rec.flipped_indices) {
    CHECK(ds.groups[i] == 1);
    CHECK(biased.clean_labels[i] == 1);
    CHECK(biased.labels[i] == 0);
  }
  biased.validate();

  const auto [same, none] = inject_label_bias(ds, 1, 0.0, 5);
  CHECK(same == ds);
  CHECK(none.flipped_indices.empty());

  const auto [all, every] = inject_label_bias(ds, 1, 1.0, 5);
  CHECK(count_if(all, 1, 1) == 0);
  CHECK(every.flipped_indices.size() == 8);
  CHECK(count_if(all, 1, 0) == 8);
}

TEST_CASE("bias injection flips round-half-up of the eligible positives") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> n(1, 30);
  std::uniform_real_distribution<double> f(0.0, 1.0);
  for (int it = 0; it < 200; ++it) {
    GenConfig cfg;
    cfg.n_per_cell = n(rng);
    cfg.seed = rng();
    const Dataset ds = generate_gaussian_mixture(cfg);
    const double fraction = f(rng);
    const int group = it % 2;
    const auto [out, rec] = inject_label_bias(ds, group, fraction, rng());
    const auto p = static_cast<double>(cfg.n_per_cell);
    CHECK(static_cast<double>(rec.flipped_indices.size()) == std::floor(fraction * p + 0.5));
    CHECK(count_if(out, 1, 1 - group) == count_if(ds, 1, 1 - group));
    CHECK(count_if(out, 1, group) == cfg.n_per_cell - static_cast<Index>(rec.flipped_indices.size()));
    CHECK(out.clean_labels == ds.labels);
    CHECK(std::is_sorted(rec.flipped_indices.begin(), rec.flipped_indices.end()));
  }
}

TEST_CASE("bias injection restricted to eligible rows") {
  GenConfig cfg;
  cfg.n_per_cell = 10;
  const Dataset ds = generate_gaussian_mixture(cfg);
  // Rows 30..39 are the (1,1) cell.
  const std::vector<Index> eligible{0, 31, 33, 35, 37};
  const auto [out, rec] = inject_label_bias(ds, 1, 0.5, 3, eligible);
  CHECK(rec.flipped_indices.size() == 2);
  for (Index i : rec.flipped_indices) CHECK(std::find(eligible.begin(), eligible.end(), i) != eligible.end());
  CHECK_THROWS_AS(inject_label_bias(ds, 1, 0.5, 3, std::vector<Index>{0, 1}), EmptyPopulationError);
  CHECK_THROWS_AS(inject_label_bias(ds, 1, 1.5, 3), ConfigError);
}

TEST_CASE("stratified split sizes") {
  GenConfig cfg;
  cfg.n_per_cell = 25;
  const Dataset ds = generate_gaussian_mixture(cfg);
  const auto s = split_dataset(ds, {0.8, 0.1, 0.1}, 1);
  CHECK(s.train.size() == 80);
  // Each cell of 25 splits 20 / 2.5 / 2.5; the tied half goes to validation.
  CHECK(s.val.size() == 12);
  CHECK(s.test.size() == 8);

  const auto all = split_dataset(ds, {1.0, 0.0, 0.0}, 1);
  CHECK(all.train.size() == 100);
  CHECK(all.val.empty());
  CHECK(all.test.empty());

  cfg.n_per_cell = 10;
  const Dataset small = generate_gaussian_mixture(cfg);
  const auto cells = split_dataset(small, {0.6, 0.1, 0.3}, 4);
  for (int k : {0, 1})
    for (int a : {0, 1}) {
      auto in_cell = [&](const std::vector<Index>& idx) {
        return std::count_if(idx.begin(), idx.end(),
                             [&](Index i) { return small.labels[i] == k && small.groups[i] == a; });
      };
      CHECK(in_cell(cells.train) == 6);
      CHECK(in_cell(cells.val) == 1);
      CHECK(in_cell(cells.test) == 3);
    }
}

TEST_CASE("split is a sorted partition and deterministic") {
  GenConfig cfg;
  cfg.n_per_cell = 37;
  const Dataset ds = generate_gaussian_mixture(cfg);
  const auto s = split_dataset(ds, {0.4, 0.2, 0.4}, 9);
  std::set<Index> seen;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    CHECK(std::is_sorted(part->begin(), part->end()));
    seen.insert(part->begin(), part->end());
  }
  CHECK(seen.size() == static_cast<std::size_t>(ds.size()));
  CHECK(s.train.size() + s.val.size() + s.test.size() == static_cast<std::size_t>(ds.size()));
  const auto again = split_dataset(ds, {0.4, 0.2, 0.4}, 9);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);

  cfg.n_per_cell = 1;
  const auto tiny = split_dataset(generate_gaussian_mixture(cfg), {0.6, 0.2, 0.2}, 0);
  CHECK(tiny.warnings.size() == 4);
}

TEST_CASE("csv round trip and parse errors") {
  const auto dir = testing_support::scratch_dir("datagen_csv");
  GenConfig cfg;
  cfg.n_per_cell = 3;
  cfg.dim = 3;
  const Dataset ds = inject_label_bias(generate_gaussian_mixture(cfg), 1, 0.5, 2).first;
  write_csv_dataset(ds, dir / "d.csv");
  const Dataset back = load_csv_dataset(dir / "d.csv");
  CHECK(back.labels == ds.labels);
  CHECK(back.clean_labels == ds.clean_labels);
  CHECK(back.groups == ds.groups);
  CHECK((back.samples - ds.samples).cwiseAbs().maxCoeff() < 1e-8);

  write(dir / "three.csv", "f0,f1,label,group\n0,1,0,0\n1,2,1,1\n2,3,1,0\n");
  const Dataset three = load_csv_dataset(dir / "three.csv");
  CHECK(three.size() == 3);
  CHECK(three.clean_labels == three.labels);

  write(dir / "nogroup.csv", "f0,f1,label\n0,1,0\n");
  CHECK_THROWS_AS(load_csv_dataset(dir / "nogroup.csv"), ParseError);

  write(dir / "badlabel.csv", "f0,label,group\n0,0,0\n1,2,1\n");
  try {
    load_csv_dataset(dir / "badlabel.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    REQUIRE(e.line().has_value());
    CHECK(*e.line() == 3);
  }
  CHECK_THROWS_AS(load_csv_dataset(dir / "missing.csv"), IoError);
}

TEST_CASE("derived seeds are distinct across streams and stable") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 10; ++s)
    for (std::uint64_t stream = 0; stream < 8; ++stream) seen.insert(derive_seed(s, stream));
  CHECK(seen.size() == 80);
  CHECK(derive_seed(3, 4) == derive_seed(3, 4));
}
