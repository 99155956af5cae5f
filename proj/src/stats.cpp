#include "nclab/stats.hpp"

#include "nclab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace nclab {

namespace {

using Index = Eigen::Index;

// Number of pairs sharing a value, summed over runs of equal values in a
// sorted range: sum t(t-1)/2.
template <typename It, typename Eq>
long long tied_pairs(It first, It last, Eq eq) {
  long long total = 0;
  while (first != last) {
    It run_end = std::next(first);
    while (run_end != last && eq(*run_end, *first)) ++run_end;
    const long long t = std::distance(first, run_end);
    total += t * (t - 1) / 2;
    first = run_end;
  }
  return total;
}

// Inversion count by merge sort; `a` ends up sorted.
long long count_inversions(std::vector<double>& a, std::vector<double>& scratch, std::size_t lo,
                           std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long long inv = count_inversions(a, scratch, lo, mid) + count_inversions(a, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (a[j] < a[i]) {
      inv += static_cast<long long>(mid - i);
      scratch[k++] = a[j++];
    } else {
      scratch[k++] = a[i++];
    }
  }
  while (i < mid) scratch[k++] = a[i++];
  while (j < hi) scratch[k++] = a[j++];
  std::copy(scratch.begin() + static_cast<long>(lo), scratch.begin() + static_cast<long>(hi),
            a.begin() + static_cast<long>(lo));
  return inv;
}

// Counts of arrangements of the null distribution of U for sizes (n, m),
// indexed by u in [0, n*m].
std::vector<double> exact_u_distribution(Index n, Index m) {
  // table[i][j][u]: arrangements of i first-sample and j second-sample values
  // with U = u, built by the recursion f(i,j,u) = f(i-1,j,u-j) + f(i,j-1,u).
  const auto max_u = static_cast<std::size_t>(n * m);
  std::vector<std::vector<std::vector<double>>> table(
      static_cast<std::size_t>(n + 1),
      std::vector<std::vector<double>>(static_cast<std::size_t>(m + 1)));
  for (Index i = 0; i <= n; ++i) {
    for (Index j = 0; j <= m; ++j) {
      auto& cell = table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      cell.assign(static_cast<std::size_t>(i * j) + 1, 0.0);
      if (i == 0 || j == 0) {
        cell[0] = 1.0;
        continue;
      }
      const auto& without_a = table[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
      const auto& without_b = table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)];
      for (std::size_t u = 0; u < cell.size(); ++u) {
        // Largest value belongs to the first sample: it beats all j others.
        if (u >= static_cast<std::size_t>(j) && u - static_cast<std::size_t>(j) < without_a.size()) {
          cell[u] += without_a[u - static_cast<std::size_t>(j)];
        }
        if (u < without_b.size()) cell[u] += without_b[u];
      }
    }
  }
  auto dist = table[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)];
  dist.resize(max_u + 1, 0.0);
  return dist;
}

}  // namespace

Eigen::VectorXd midranks(const Eigen::Ref<const Eigen::VectorXd>& values) {
  const Index n = values.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] < values[b]; });
  Eigen::VectorXd ranks(n);
  for (Index start = 0; start < n;) {
    Index stop = start + 1;
    while (stop < n && values[order[static_cast<std::size_t>(stop)]] == values[order[static_cast<std::size_t>(start)]]) ++stop;
    const double rank = 0.5 * static_cast<double>(start + 1 + stop);
    for (Index k = start; k < stop; ++k) ranks[order[static_cast<std::size_t>(k)]] = rank;
    start = stop;
  }
  return ranks;
}

double roc_auc(const Eigen::Ref<const Eigen::VectorXd>& scores,
               const Eigen::Ref<const Eigen::VectorXi>& labels) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  if (!scores.allFinite()) throw NumericError("non-finite score");
  const auto n_pos = static_cast<double>((labels.array() == 1).count());
  const auto n_neg = static_cast<double>((labels.array() == 0).count());
  if (n_pos + n_neg != static_cast<double>(labels.size())) throw ContractError("labels must be binary");
  if (n_pos == 0 || n_neg == 0) throw DegenerateError("ROC-AUC needs both classes");
  const Eigen::VectorXd ranks = midranks(scores);
  double rank_sum = 0.0;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

std::optional<double> f1_score(const Eigen::Ref<const Eigen::VectorXi>& predicted,
                               const Eigen::Ref<const Eigen::VectorXi>& actual) {
  if (predicted.size() != actual.size()) throw ContractError("prediction and truth differ in length");
  long long tp = 0, fp = 0, fn = 0;
  for (Index i = 0; i < actual.size(); ++i) {
    const bool p = predicted[i] == 1;
    const bool a = actual[i] == 1;
    tp += p && a;
    fp += p && !a;
    fn += !p && a;
  }
  if (tp + fp + fn == 0) return std::nullopt;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

std::optional<double> kendall_tau(const Eigen::Ref<const Eigen::VectorXd>& xs,
                                  const Eigen::Ref<const Eigen::VectorXd>& ys) {
  if (xs.size() != ys.size()) throw ContractError("kendall_tau inputs differ in length");
  if (xs.size() < 2) throw ContractError("kendall_tau needs at least two observations");
  // Knight's O(n log n) algorithm.
  const auto n = static_cast<std::size_t>(xs.size());
  std::vector<std::pair<double, double>> pairs(n);
  for (std::size_t i = 0; i < n; ++i) pairs[i] = {xs[static_cast<Index>(i)], ys[static_cast<Index>(i)]};
  std::sort(pairs.begin(), pairs.end());

  const long long n0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
  const long long tie_x = tied_pairs(pairs.begin(), pairs.end(),
                                     [](const auto& a, const auto& b) { return a.first == b.first; });
  const long long tie_xy = tied_pairs(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a == b; });

  std::vector<double> y_sorted(n);
  for (std::size_t i = 0; i < n; ++i) y_sorted[i] = pairs[i].second;
  std::vector<double> scratch(n);
  const long long swaps = count_inversions(y_sorted, scratch, 0, n);
  const long long tie_y = tied_pairs(y_sorted.begin(), y_sorted.end(), std::equal_to<>());

  if (tie_x == n0 || tie_y == n0) return std::nullopt;
  // concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
  const double numerator = static_cast<double>(n0 - tie_x - tie_y + tie_xy - 2 * swaps);
  const double denominator = std::sqrt(static_cast<double>(n0 - tie_x)) * std::sqrt(static_cast<double>(n0 - tie_y));
  return numerator / denominator;
}

std::string_view to_string(UTestMethod method) {
  return method == UTestMethod::exact ? "exact" : "normal-approx";
}

UTestResult mann_whitney_u(const Eigen::Ref<const Eigen::VectorXd>& sample_a,
                           const Eigen::Ref<const Eigen::VectorXd>& sample_b) {
  const Index n = sample_a.size();
  const Index m = sample_b.size();
  if (n == 0 || m == 0) throw ContractError("Mann-Whitney U needs two nonempty samples");
  if (!sample_a.allFinite() || !sample_b.allFinite()) throw NumericError("non-finite sample value");

  Eigen::VectorXd pooled(n + m);
  pooled << sample_a, sample_b;
  const Eigen::VectorXd ranks = midranks(pooled);
  const double rank_sum_a = ranks.head(n).sum();
  const auto nd = static_cast<double>(n);
  const auto md = static_cast<double>(m);

  UTestResult result;
  result.u_statistic = rank_sum_a - nd * (nd + 1.0) / 2.0;
  result.u_other = nd * md - result.u_statistic;

  std::vector<double> sorted(pooled.data(), pooled.data() + pooled.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<long long> tie_sizes;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    if (j - i > 1) tie_sizes.push_back(static_cast<long long>(j - i));
    i = j;
  }

  if (tie_sizes.empty() && std::max(n, m) <= kExactLimit) {
    result.method = UTestMethod::exact;
    const std::vector<double> dist = exact_u_distribution(n, m);
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    const auto u = static_cast<std::size_t>(std::llround(result.u_statistic));
    const double lower = std::accumulate(dist.begin(), dist.begin() + static_cast<long>(u) + 1, 0.0);
    const double upper = std::accumulate(dist.begin() + static_cast<long>(u), dist.end(), 0.0);
    result.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / total);
    return result;
  }

  result.method = UTestMethod::normal_approx;
  const double big_n = nd + md;
  double tie_term = 0.0;
  for (long long t : tie_sizes) tie_term += static_cast<double>(t * t * t - t);
  const double variance = nd * md / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
  if (!(variance > 0.0)) {
    result.p_value = 1.0;
    return result;
  }
  const double mean = nd * md / 2.0;
  const double z = std::max(0.0, std::abs(result.u_statistic - mean) - 0.5) / std::sqrt(variance);
  result.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return result;
}

}  // namespace nclab
