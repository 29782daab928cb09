#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "har/rng.hpp"
#include "har/stats.hpp"
#include "test_util.hpp"

using namespace har;
using har::testing::code_of;

namespace {

// U of group 1 by pair counting.
double pair_u(const std::vector<double>& a, const std::vector<double>& b) {
  double u = 0.0;
  for (double x : a) {
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  }
  return u;
}

// Enumerates every assignment of the pooled values to group 1.
std::pair<std::uint64_t, std::uint64_t> brute_force_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::size_t n = pooled.size(), n1 = a.size();
  const double u_obs = pair_u(a, b);
  const double lo = std::min(u_obs, n1 * b.size() - u_obs), hi = n1 * b.size() - lo;
  std::uint64_t total = 0, tail = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != n1) continue;
    std::vector<double> g1, g2;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1u ? g1 : g2).push_back(pooled[i]);
    const double u = pair_u(g1, g2);
    ++total;
    if (u <= lo) ++tail;
    if (u >= hi) ++tail;
  }
  return {std::min(tail, total), total};
}

std::vector<double> distinct_values(Rng& rng, std::size_t n) {
  std::vector<double> v;
  while (v.size() < n) {
    const double x = std::round(rng.uniform(0.0, 1000.0)) / 10.0;
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  }
  return v;
}

}  // namespace

TEST_CASE("exact hand cases") {
  const std::vector<double> a{1, 2}, b{3, 4};
  const auto r = mann_whitney_u(a, b, UTestMethod::Exact);
  CHECK(r.u_statistic == 0.0);
  CHECK(r.p_numerator == 2);
  CHECK(r.p_denominator == 6);
  CHECK(r.p_two_sided == doctest::Approx(2.0 / 6.0).epsilon(1e-15));

  const std::vector<double> c{1, 2, 3}, d{10, 11, 12};
  const auto r2 = mann_whitney_u(c, d, UTestMethod::Exact);
  CHECK(r2.u_statistic == 0.0);
  CHECK(r2.p_two_sided == doctest::Approx(0.1).epsilon(1e-15));
  const auto swapped = mann_whitney_u(d, c, UTestMethod::Exact);
  CHECK(swapped.u_statistic == 9.0);
  CHECK(swapped.p_two_sided == r2.p_two_sided);
  CHECK(mann_whitney_u(c, d).method == UTestMethod::Exact);
}

TEST_CASE("exact matches brute-force enumeration") {
  Rng rng(2024);
  for (std::size_t n = 2; n <= 10; ++n) {
    for (std::size_t n1 = 1; n1 < n; ++n1) {
      for (int trial = 0; trial < 6; ++trial) {
        const auto vals = distinct_values(rng, n);
        const std::vector<double> a(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(n1));
        const std::vector<double> b(vals.begin() + static_cast<std::ptrdiff_t>(n1), vals.end());
        const auto [num, den] = brute_force_p(a, b);
        const auto r = mann_whitney_u(a, b, UTestMethod::Exact);
        CHECK(r.u_statistic == pair_u(a, b));
        CHECK(r.p_numerator == num);
        CHECK(r.p_denominator == den);
      }
    }
  }
}

TEST_CASE("rank invariance") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto v = distinct_values(rng, 9);
    const std::vector<double> a(v.begin(), v.begin() + 4), b(v.begin() + 4, v.end());
    const auto base = mann_whitney_u(a, b, UTestMethod::Exact);
    std::vector<double> as, bs, ae, be;
    for (double x : a) {
      as.push_back(x + 17.5);
      ae.push_back(std::exp(x / 50.0));
    }
    for (double x : b) {
      bs.push_back(x + 17.5);
      be.push_back(std::exp(x / 50.0));
    }
    CHECK(mann_whitney_u(as, bs, UTestMethod::Exact).p_numerator == base.p_numerator);
    CHECK(mann_whitney_u(ae, be, UTestMethod::Exact).u_statistic == base.u_statistic);
    CHECK(mann_whitney_u(b, a, UTestMethod::Exact).p_numerator == base.p_numerator);
  }
}

TEST_CASE("normal approximation tracks exact at n = 8 per group") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = distinct_values(rng, 16);
    const std::vector<double> a(v.begin(), v.begin() + 8), b(v.begin() + 8, v.end());
    const double exact = mann_whitney_u(a, b, UTestMethod::Exact).p_two_sided;
    const double approx = mann_whitney_u(a, b, UTestMethod::NormalApprox).p_two_sided;
    CHECK(std::abs(exact - approx) <= 0.02);
  }
}

TEST_CASE("ties and errors") {
  const std::vector<double> a{1, 2, 2}, b{2, 3};
  CHECK(code_of([&] { mann_whitney_u(a, b, UTestMethod::Exact); }) == ErrorCode::TiesNotSupported);
  const auto r = mann_whitney_u(a, b);
  CHECK(r.method == UTestMethod::NormalApprox);
  CHECK(r.u_statistic == pair_u(a, b));
  const std::vector<double> same{5, 5}, same2{5, 5, 5};
  CHECK(mann_whitney_u(same, same2).p_two_sided == 1.0);
  const std::vector<double> none;
  CHECK(code_of([&] { mann_whitney_u(none, b); }) == ErrorCode::EmptyGroup);
  const std::vector<double> nan{std::nan("")};
  CHECK(code_of([&] { mann_whitney_u(nan, b); }) == ErrorCode::InvalidSpec);
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(parse_utest_method("normal") == UTestMethod::NormalApprox);
  CHECK_FALSE(parse_utest_method("t").has_value());
}

TEST_CASE("bout group comparisons") {
  std::map<std::string, double> means;
  std::map<std::string, std::string> groups;
  for (int i = 0; i < 5; ++i) {
    means["a" + std::to_string(i)] = 10.0 + 0.1 * i;
    groups["a" + std::to_string(i)] = "A";
    means["b" + std::to_string(i)] = 2.0 + 0.1 * i;
    groups["b" + std::to_string(i)] = "B";
  }
  groups["c0"] = "C";  // no mean
  const std::vector<std::pair<std::string, std::string>> pairs{{"A", "B"}};
  const auto rows = compare_bout_groups(means, groups, pairs);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].result.n1 == 5);
  CHECK(rows[0].result.u_statistic == 25.0);
  CHECK(rows[0].result.p_numerator == 2);
  CHECK(rows[0].result.p_denominator == 252);
  CHECK(rows[0].significant);
  CHECK(comparisons_csv(rows).rfind("pair,n1,n2,U,p,method,significant\nA_vs_B,5,5,25,", 0) == 0);

  std::map<std::string, double> flat;
  std::map<std::string, std::string> g2;
  for (int i = 0; i < 8; ++i) {
    flat["s" + std::to_string(i)] = 4.0;
    g2["s" + std::to_string(i)] = i % 2 ? "A" : "B";
  }
  const auto same = compare_bout_groups(flat, g2, pairs);
  CHECK(same[0].result.p_two_sided >= 0.9);
  CHECK_FALSE(same[0].significant);

  const std::vector<std::pair<std::string, std::string>> bad{{"A", "C"}};
  CHECK(code_of([&] { compare_bout_groups(means, groups, bad); }) == ErrorCode::UnknownTag);
}
