#include "har/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "har/csv.hpp"
#include "har/error.hpp"

namespace har {

namespace {

constexpr std::size_t kAutoExactLimit = 16;
constexpr std::size_t kExactLimit = 60;  // keeps C(n1+n2, n1) inside uint64

struct Ranked {
  double r1 = 0.0;       // rank sum of group 1
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  bool ties = false;
};

Ranked rank(std::span<const double> a, std::span<const double> b) {
  std::vector<std::pair<double, int>> all;
  all.reserve(a.size() + b.size());
  for (double v : a) all.emplace_back(v, 0);
  for (double v : b) all.emplace_back(v, 1);
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  Ranked out;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j + 1 < all.size() && all[j + 1].first == all[i].first) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    const double t = static_cast<double>(j - i + 1);
    if (j > i) {
      out.ties = true;
      out.tie_term += t * t * t - t;
    }
    for (std::size_t k = i; k <= j; ++k) {
      if (all[k].second == 0) out.r1 += mid;
    }
    i = j + 1;
  }
  return out;
}

// counts[u] = number of rank assignments with U = u.
std::vector<std::uint64_t> u_distribution(std::size_t n1, std::size_t n2) {
  // f[i][j] over u, built by f(i,j,u) = f(i-1,j,u-j) + f(i,j-1,u).
  std::vector<std::vector<std::vector<std::uint64_t>>> f(n1 + 1, std::vector<std::vector<std::uint64_t>>(n2 + 1));
  for (std::size_t i = 0; i <= n1; ++i) {
    for (std::size_t j = 0; j <= n2; ++j) {
      auto& cur = f[i][j];
      cur.assign(i * j + 1, 0);
      if (i == 0 || j == 0) {
        cur[0] = 1;
        continue;
      }
      const auto& a = f[i - 1][j];
      const auto& b = f[i][j - 1];
      for (std::size_t u = 0; u < a.size(); ++u) cur[u + j] += a[u];
      for (std::size_t u = 0; u < b.size(); ++u) cur[u] += b[u];
    }
  }
  return f[n1][n2];
}

}  // namespace

std::string_view to_string(UTestMethod m) noexcept {
  switch (m) {
    case UTestMethod::Auto: return "auto";
    case UTestMethod::Exact: return "exact";
    case UTestMethod::NormalApprox: return "normal";
  }
  return "unknown";
}

std::optional<UTestMethod> parse_utest_method(std::string_view text) noexcept {
  if (text == "auto") return UTestMethod::Auto;
  if (text == "exact") return UTestMethod::Exact;
  if (text == "normal" || text == "normal-approx") return UTestMethod::NormalApprox;
  return std::nullopt;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

UTestResult mann_whitney_u(std::span<const double> group1, std::span<const double> group2,
                           UTestMethod method) {
  if (group1.empty() || group2.empty()) {
    throw Error(ErrorCode::EmptyGroup, "U test needs at least one observation per group");
  }
  for (double v : group1) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidSpec, "U test input is not finite");
  }
  for (double v : group2) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidSpec, "U test input is not finite");
  }
  const std::size_t n1 = group1.size(), n2 = group2.size(), N = n1 + n2;
  const Ranked rk = rank(group1, group2);

  UTestResult res;
  res.n1 = n1;
  res.n2 = n2;
  const double n1d = static_cast<double>(n1), n2d = static_cast<double>(n2);
  res.u_statistic = rk.r1 - n1d * (n1d + 1.0) / 2.0;

  if (method == UTestMethod::Auto) {
    method = (N <= kAutoExactLimit && !rk.ties) ? UTestMethod::Exact : UTestMethod::NormalApprox;
  }
  res.method = method;

  if (method == UTestMethod::Exact) {
    if (rk.ties) throw Error(ErrorCode::TiesNotSupported, "exact U test does not handle tied values");
    if (N > kExactLimit) {
      throw Error(ErrorCode::InvalidSpec, "exact U test limited to n1+n2 <= " + std::to_string(kExactLimit));
    }
    // Without ties U is an integer.
    const auto u1 = static_cast<std::size_t>(std::llround(res.u_statistic));
    const std::size_t u2 = n1 * n2 - u1;
    const std::size_t lo = std::min(u1, u2), hi = std::max(u1, u2);
    const auto dist = u_distribution(n1, n2);
    std::uint64_t total = 0, tail = 0;
    for (std::size_t u = 0; u < dist.size(); ++u) {
      total += dist[u];
      if (u <= lo) tail += dist[u];
      if (u >= hi) tail += dist[u];
    }
    res.p_denominator = total;
    res.p_numerator = std::min(tail, total);
    res.p_two_sided = static_cast<double>(res.p_numerator) / static_cast<double>(total);
    return res;
  }

  const double Nd = static_cast<double>(N);
  const double mu = n1d * n2d / 2.0;
  const double var = n1d * n2d / 12.0 * ((Nd + 1.0) - rk.tie_term / (Nd * (Nd - 1.0)));
  if (!(var > 0.0)) {
    res.p_two_sided = 1.0;
    return res;
  }
  const double z = std::max(0.0, std::abs(res.u_statistic - mu) - 0.5) / std::sqrt(var);
  res.p_two_sided = std::min(1.0, 2.0 * normal_cdf(-z));
  return res;
}

std::vector<GroupComparison> compare_bout_groups(
    const std::map<std::string, double>& per_subject_means,
    const std::map<std::string, std::string>& groups,
    std::span<const std::pair<std::string, std::string>> pairings, UTestMethod method) {
  auto collect = [&](const std::string& tag) {
    std::vector<double> out;
    if (tag.empty()) throw Error(ErrorCode::UnknownTag, "empty group tag in pairing");
    for (const auto& [subject, t] : groups) {
      if (t != tag) continue;
      auto it = per_subject_means.find(subject);
      if (it != per_subject_means.end()) out.push_back(it->second);
    }
    if (out.empty()) throw Error(ErrorCode::UnknownTag, "no subject with a bout mean carries tag '" + tag + "'");
    return out;
  };
  std::vector<GroupComparison> rows;
  for (const auto& [a, b] : pairings) {
    const auto va = collect(a);
    const auto vb = collect(b);
    GroupComparison row;
    row.tag_a = a;
    row.tag_b = b;
    row.result = mann_whitney_u(va, vb, method);
    row.significant = row.result.p_two_sided < kSignificanceLevel;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string comparisons_csv(std::span<const GroupComparison> rows) {
  std::string out = "pair,n1,n2,U,p,method,significant\n";
  for (const auto& r : rows) {
    out += r.tag_a + "_vs_" + r.tag_b + ',' + std::to_string(r.result.n1) + ',' +
           std::to_string(r.result.n2) + ',' + csv::format(r.result.u_statistic) + ',' +
           csv::format(r.result.p_two_sided) + ',' + std::string(to_string(r.result.method)) + ',' +
           (r.significant ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace har
