#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "oracle_checks.hpp"

#include "nclab/errors.hpp"
#include "nclab/stats.hpp"

#include <random>

using namespace nclab;
using testing_support::to_dvec;
using testing_support::to_ivec;

TEST_CASE("roc_auc hand examples") {
  CHECK(roc_auc(to_dvec({0.9, 0.8, 0.2, 0.1}), to_ivec({1, 1, 0, 0})) == 1.0);
  CHECK(roc_auc(to_dvec({0.5, 0.5, 0.5, 0.5}), to_ivec({1, 0, 1, 0})) == 0.5);
  CHECK(roc_auc(to_dvec({0.9, 0.6, 0.4, 0.1}), to_ivec({1, 0, 1, 0})) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(roc_auc(to_dvec({0.1, 0.2}), to_ivec({1, 1})), DegenerateError);
}

TEST_CASE("f1 hand examples") {
  CHECK(*f1_score(to_ivec({1, 0, 1}), to_ivec({1, 0, 1})) == 1.0);
  // TP=2, FP=1, FN=1
  CHECK(*f1_score(to_ivec({1, 1, 1, 0, 0}), to_ivec({1, 1, 0, 1, 0})) == doctest::Approx(2.0 / 3.0));
  CHECK(*f1_score(to_ivec({0, 0, 0}), to_ivec({1, 0, 1})) == 0.0);
  CHECK_FALSE(f1_score(to_ivec({0, 0}), to_ivec({0, 0})).has_value());
}

TEST_CASE("kendall tau hand examples") {
  CHECK(*kendall_tau(to_dvec({1, 2, 3, 4}), to_dvec({1, 2, 3, 4})) == doctest::Approx(1.0));
  CHECK(*kendall_tau(to_dvec({1, 2, 3}), to_dvec({1, 3, 2})) == doctest::Approx(1.0 / 3.0));
  CHECK(*kendall_tau(to_dvec({1, 2, 3, 4}), to_dvec({-1, -2, -3, -4})) == doctest::Approx(-1.0));
  CHECK_FALSE(kendall_tau(to_dvec({1, 1, 1}), to_dvec({1, 2, 3})).has_value());
}

TEST_CASE("mann-whitney hand examples") {
  const auto r = mann_whitney_u(to_dvec({1, 2, 3}), to_dvec({4, 5, 6}));
  CHECK(r.u_statistic == 0.0);
  CHECK(r.u_other == 9.0);
  CHECK(r.method == UTestMethod::exact);
  CHECK(r.p_value == doctest::Approx(0.1).epsilon(1e-14));

  const auto same = mann_whitney_u(to_dvec({1, 2, 3}), to_dvec({1, 2, 3}));
  CHECK(same.u_statistic == 4.5);
  CHECK(same.u_other == 4.5);
  CHECK(same.p_value == 1.0);

  const auto constant = mann_whitney_u(to_dvec({2, 2}), to_dvec({2, 2, 2}));
  CHECK(constant.p_value == 1.0);
}

TEST_CASE("mann-whitney switches to the normal approximation for large or tied samples") {
  std::vector<double> a, b;
  for (int i = 0; i < 13; ++i) {
    a.push_back(i);
    b.push_back(i + 20);
  }
  const auto big = mann_whitney_u(to_dvec(a), to_dvec(b));
  CHECK(big.method == UTestMethod::normal_approx);
  CHECK(big.p_value < 1e-4);
  const auto tied = mann_whitney_u(to_dvec({1, 1, 2}), to_dvec({3, 4, 4}));
  CHECK(tied.method == UTestMethod::normal_approx);
}

TEST_CASE("U_A + U_B = n m on random samples") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> size(1, 20);
  for (int it = 0; it < 200; ++it) {
    const int n = size(rng), m = size(rng);
    Eigen::VectorXd a(n), b(m);
    for (auto& v : a) v = std::round(z(rng) * 3);
    for (auto& v : b) v = std::round(z(rng) * 3);
    const auto r = mann_whitney_u(a, b);
    CHECK(r.u_statistic + r.u_other == doctest::Approx(n * m));
    CHECK(r.p_value >= 0.0);
    CHECK(r.p_value <= 1.0);
  }
}

TEST_CASE("midranks average tied positions") {
  const Eigen::VectorXd r = midranks(to_dvec({10, 20, 10, 30}));
  CHECK(r[0] == 1.5);
  CHECK(r[1] == 3.0);
  CHECK(r[2] == 1.5);
  CHECK(r[3] == 4.0);
}

TEST_CASE("rank statistics agree with brute force") {
  for (const auto& r : oracle::metric_checks(2024, 150)) {
    if (r.name.find("NC") != std::string::npos) continue;
    INFO(r.name << " max error " << r.max_error);
    CHECK(r.instances >= 100);
    CHECK(r.pass());
  }
}

TEST_CASE("kendall tau on longer tied sequences matches the double loop") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> v(0, 5);
  for (int it = 0; it < 100; ++it) {
    std::vector<double> x(60), y(60);
    for (int i = 0; i < 60; ++i) {
      x[i] = v(rng);
      y[i] = v(rng) + 0.5 * x[i];
    }
    const auto lib = kendall_tau(to_dvec(x), to_dvec(y));
    const auto ref = oracle::kendall_tau_b(x, y);
    REQUIRE(lib.has_value() == ref.has_value());
    if (lib) CHECK(std::abs(*lib - *ref) < 1e-12);
  }
}
