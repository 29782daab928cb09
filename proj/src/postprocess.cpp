#include "har/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "har/csv.hpp"
#include "har/error.hpp"

namespace har {

double SegmentPrediction::confidence() const { return *std::max_element(probs.begin(), probs.end()); }

SegmentPrediction make_segment(double t_start, double t_end,
                               const std::array<double, kNumActivities>& probs) {
  SegmentPrediction s{t_start, t_end, probs, ActivityLabel::Walking};
  s.label = kAllActivities[static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) -
                                                    probs.begin())];
  return s;
}

std::string_view to_string(FilterVariant v) noexcept {
  switch (v) {
    case FilterVariant::Majority: return "majority";
    case FilterVariant::MaxConfidence: return "max-confidence";
    case FilterVariant::None: return "none";
  }
  return "unknown";
}

std::optional<FilterVariant> parse_filter_variant(std::string_view text) noexcept {
  if (text == "majority") return FilterVariant::Majority;
  if (text == "max-confidence" || text == "max_confidence") return FilterVariant::MaxConfidence;
  if (text == "none") return FilterVariant::None;
  return std::nullopt;
}

std::vector<SegmentPrediction> majority_filter(std::span<const SegmentPrediction> segments,
                                               const FilterOptions& options) {
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (std::abs(segments[i].t_start - segments[i - 1].t_end) > kSegmentGapTolerance) {
      throw Error(ErrorCode::NonContiguousSegments,
                  "segment " + std::to_string(i) + " starts at " + csv::format(segments[i].t_start) +
                      " but the previous one ends at " + csv::format(segments[i - 1].t_end));
    }
  }
  std::vector<SegmentPrediction> out(segments.begin(), segments.end());
  if (options.variant == FilterVariant::None || segments.empty()) return out;
  if (!(options.stride_seconds > 0.0) || options.window_seconds < options.stride_seconds) {
    throw Error(ErrorCode::InvalidConfig, "filter needs window_seconds >= stride_seconds > 0");
  }

  // Window j covers segment k iff |j - k| * stride <= (window - stride) / 2.
  const double margin = (options.window_seconds - options.stride_seconds) / 2.0;
  const auto reach = static_cast<std::size_t>(std::floor(margin / options.stride_seconds + 1e-9));
  const std::size_t n = segments.size();

  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t lo = k >= reach ? k - reach : 0;
    const std::size_t hi = std::min(n - 1, k + reach);
    // Candidates are ranked by (votes, best confidence, -distance, -index).
    std::size_t best_window = k;
    if (options.variant == FilterVariant::MaxConfidence) {
      for (std::size_t j = lo; j <= hi; ++j) {
        const double cj = segments[j].confidence();
        const double cb = segments[best_window].confidence();
        const std::size_t dj = j > k ? j - k : k - j;
        const std::size_t db = best_window > k ? best_window - k : k - best_window;
        if (cj > cb || (cj == cb && (dj < db || (dj == db && j < best_window)))) best_window = j;
      }
      out[k].label = segments[best_window].label;
      continue;
    }

    std::array<std::size_t, kNumActivities> votes{};
    for (std::size_t j = lo; j <= hi; ++j) ++votes[index_of(segments[j].label)];
    const std::size_t top = *std::max_element(votes.begin(), votes.end());
    bool have = false;
    for (std::size_t j = lo; j <= hi; ++j) {
      if (votes[index_of(segments[j].label)] != top) continue;
      if (!have) {
        best_window = j;
        have = true;
        continue;
      }
      const double cj = segments[j].confidence();
      const double cb = segments[best_window].confidence();
      const std::size_t dj = j > k ? j - k : k - j;
      const std::size_t db = best_window > k ? best_window - k : k - best_window;
      if (cj > cb || (cj == cb && (dj < db || (dj == db && j < best_window)))) best_window = j;
    }
    out[k].label = segments[best_window].label;
  }
  return out;
}

std::string_view to_string(GaitClass g) noexcept { return g == GaitClass::Gait ? "gait" : "non_gait"; }

std::optional<GaitClass> parse_gait_class(std::string_view text) noexcept {
  if (text == "gait") return GaitClass::Gait;
  if (text == "non_gait" || text == "nongait" || text == "non-gait") return GaitClass::NonGait;
  return std::nullopt;
}

std::vector<Bout> extract_bouts(std::span<const SegmentPrediction> segments,
                                const BoutOptions& options) {
  std::vector<Bout> bouts;
  auto close = [&](Bout b) {
    b.duration = b.t_end - b.t_start;
    if (b.duration >= options.min_duration_seconds) bouts.push_back(b);
  };
  std::optional<Bout> open;
  for (const auto& s : segments) {
    const GaitClass g = map_gait(s.label);
    const bool contiguous = open && std::abs(s.t_start - open->t_end) <= kSegmentGapTolerance;
    if (open && contiguous && open->group == g) {
      open->t_end = s.t_end;
      continue;
    }
    if (open) close(*open);
    open = Bout{g, s.t_start, s.t_end, 0.0};
  }
  if (open) close(*open);
  return bouts;
}

std::optional<double> mean_bout_duration(std::span<const Bout> bouts, GaitClass group) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& b : bouts) {
    if (b.group != group) continue;
    total += b.duration;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return total / static_cast<double>(count);
}

}  // namespace har
