#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace har {

enum class UTestMethod : std::uint8_t { Auto, Exact, NormalApprox };

std::string_view to_string(UTestMethod m) noexcept;
std::optional<UTestMethod> parse_utest_method(std::string_view text) noexcept;

struct UTestResult {
  double u_statistic = 0.0;  // U of group 1
  double p_two_sided = 1.0;
  UTestMethod method = UTestMethod::Exact;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  // Exact mode only: p = p_numerator / p_denominator with the denominator
  // C(n1+n2, n1).
  std::uint64_t p_numerator = 0;
  std::uint64_t p_denominator = 0;
};

// Two-sided Mann-Whitney U test with midranks. Exact sums both tails of the
// null U distribution and rejects ties (TiesNotSupported); Auto uses Exact for
// n1+n2 <= 16 without ties. Throws EmptyGroup.
UTestResult mann_whitney_u(std::span<const double> group1, std::span<const double> group2,
                           UTestMethod method = UTestMethod::Auto);

// Standard normal CDF.
double normal_cdf(double z);

struct GroupComparison {
  std::string tag_a;
  std::string tag_b;
  UTestResult result;
  bool significant = false;  // p < 0.05
};

inline constexpr double kSignificanceLevel = 0.05;

// One U test per pair on the per-subject means. Subjects without a mean are
// skipped. Throws UnknownTag when a paired tag has no subject with a mean.
std::vector<GroupComparison> compare_bout_groups(
    const std::map<std::string, double>& per_subject_means,
    const std::map<std::string, std::string>& groups,
    std::span<const std::pair<std::string, std::string>> pairings,
    UTestMethod method = UTestMethod::Auto);

// `pair,n1,n2,U,p,method,significant`
std::string comparisons_csv(std::span<const GroupComparison> rows);

}  // namespace har
