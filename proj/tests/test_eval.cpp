#include "doctest.h"

#include <algorithm>
#include <numeric>

#include "har/eval.hpp"
#include "har/rng.hpp"
#include "test_util.hpp"

using namespace har;
using har::testing::code_of;

namespace {

ConfusionMatrix from_counts(std::vector<std::vector<std::uint64_t>> counts) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < counts.size(); ++i) names.push_back("c" + std::to_string(i));
  ConfusionMatrix cm(names);
  cm.counts = std::move(counts);
  return cm;
}

ConfusionMatrix random_matrix(Rng& rng, std::size_t n) {
  std::vector<std::vector<std::uint64_t>> c(n, std::vector<std::uint64_t>(n));
  for (auto& row : c) {
    for (auto& v : row) v = rng.below(20);
  }
  c[0][0] += 1;
  return from_counts(c);
}

ScoredSegment scored(std::string subject, std::string location, ActivityLabel truth, ActivityLabel pred) {
  ScoredSegment s;
  s.recording_id = subject + "_" + location;
  s.subject_id = std::move(subject);
  s.device_location = std::move(location);
  s.group_tag = "A";
  s.truth = truth;
  s.pred = pred;
  return s;
}

}  // namespace

TEST_CASE("confusion matrix counts") {
  const std::vector<ActivityLabel> t{ActivityLabel::Walking, ActivityLabel::Running, ActivityLabel::Standing};
  const auto cm = activity_confusion(t, t);
  CHECK(cm.total() == 3);
  CHECK(cm.trace() == 3);

  using A = ActivityLabel;
  const std::vector<A> truth{A::Walking, A::Walking, A::Standing};
  const std::vector<A> pred{A::Walking, A::Standing, A::Standing};
  const auto g = gait_confusion(truth, pred);
  REQUIRE(g.size() == 2);
  CHECK(g.classes[0] == "gait");
  CHECK(g.counts == std::vector<std::vector<std::uint64_t>>{{1, 1}, {0, 1}});

  const auto empty = activity_confusion({}, {});
  CHECK(empty.size() == 6);
  CHECK(empty.total() == 0);
  CHECK(code_of([&] { compute_metrics(empty); }) == ErrorCode::EmptyMatrix);

  const std::vector<std::size_t> a{0, 1}, b{0};
  CHECK(code_of([&] { confusion_matrix(a, b, {"x", "y"}); }) == ErrorCode::LengthMismatch);
  const std::vector<std::size_t> bad{0, 2};
  CHECK(code_of([&] { confusion_matrix(a, bad, {"x", "y"}); }) == ErrorCode::UnknownLabel);
}

TEST_CASE("binary metrics hand example") {
  const auto r = compute_metrics(from_counts({{9, 1}, {2, 8}}), 0);
  REQUIRE(r.binary.has_value());
  CHECK(r.binary->precision == doctest::Approx(9.0 / 11.0).epsilon(1e-12));
  CHECK(r.binary->recall == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(r.binary->f1 == doctest::Approx(0.857142857142857).epsilon(1e-12));
  CHECK(r.accuracy == doctest::Approx(0.85).epsilon(1e-12));
  CHECK(r.binary->fpr == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(r.binary->specificity == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r.per_class[1].precision == doctest::Approx(8.0 / 9.0).epsilon(1e-12));
  CHECK(code_of([] { compute_metrics(from_counts({{1, 0}, {0, 1}}), 2); }) == ErrorCode::UnknownLabel);
}

TEST_CASE("zero denominators are flagged") {
  // class 1 is never true and never predicted
  const auto r = compute_metrics(from_counts({{5, 0}, {0, 0}}), 1);
  CHECK(r.per_class[1].precision == 0.0);
  CHECK(r.per_class[1].precision_undefined);
  CHECK(r.per_class[1].recall_undefined);
  CHECK(r.per_class[1].f1_undefined);
  CHECK_FALSE(r.per_class[0].precision_undefined);
  CHECK(r.binary->fpr == 0.0);
  CHECK_FALSE(r.binary->fpr_undefined);
  const auto all_pos = compute_metrics(from_counts({{5, 0}, {0, 0}}), 0);
  CHECK(all_pos.binary->fpr_undefined);
  const auto csv = metrics_csv(r);
  CHECK(csv.rfind("metric,class,value,undefined\n", 0) == 0);
  CHECK(csv.find("precision,c1,0,1") != std::string::npos);
}

TEST_CASE("metric properties on random matrices") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    const auto cm = random_matrix(rng, n);
    const auto r = compute_metrics(cm, 0);
    CHECK(r.micro_precision == r.accuracy);
    CHECK(r.micro_recall == r.accuracy);
    CHECK(r.micro_f1 == r.accuracy);
    CHECK(r.binary->fpr + r.binary->specificity == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.total == cm.total());

    // relabelling classes permutes per-class values and keeps the aggregates
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    auto pc = cm;
    for (std::size_t i = 0; i < n; ++i) {
      pc.classes[perm[i]] = cm.classes[i];
      for (std::size_t j = 0; j < n; ++j) pc.counts[perm[i]][perm[j]] = cm.counts[i][j];
    }
    const auto rp = compute_metrics(pc);
    CHECK(rp.accuracy == r.accuracy);
    CHECK(rp.macro_f1 == doctest::Approx(r.macro_f1).epsilon(1e-12));
    CHECK(rp.macro_precision == doctest::Approx(r.macro_precision).epsilon(1e-12));
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(rp.per_class[perm[i]].f1 == r.per_class[i].f1);
      CHECK(rp.per_class[perm[i]].name == r.per_class[i].name);
    }
  }
}

TEST_CASE("merge_to_gait equals direct gait counting") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ActivityLabel> truth, pred;
    for (int i = 0; i < 200; ++i) {
      truth.push_back(kAllActivities[rng.below(kNumActivities)]);
      pred.push_back(kAllActivities[rng.below(kNumActivities)]);
    }
    CHECK(merge_to_gait(activity_confusion(truth, pred)) == gait_confusion(truth, pred));
  }
  CHECK(code_of([] { merge_to_gait(from_counts({{1, 0}, {0, 1}})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("breakdowns") {
  using A = ActivityLabel;
  std::vector<ScoredSegment> segs;
  for (const char* loc : {"wrist", "ankle"}) {
    segs.push_back(scored("s1", loc, A::Walking, A::Walking));
    segs.push_back(scored("s1", loc, A::Standing, A::Walking));
    segs.push_back(scored("s2", loc, A::Running, A::Running));
    segs.push_back(scored("s2", loc, A::Running, A::Running));
  }
  const auto by_loc = breakdown(segs, GroupKey::DeviceLocation, true);
  REQUIRE(by_loc.size() == 2);
  CHECK(by_loc[0].key == "wrist");
  CHECK(by_loc[0].pooled_accuracy == by_loc[1].pooled_accuracy);
  CHECK(by_loc[0].pooled_accuracy == 0.75);
  CHECK(by_loc[0].subject_mean_accuracy == 0.75);
  CHECK(by_loc[0].subjects == 2);
  REQUIRE(by_loc[0].subject_sd.has_value());
  CHECK(*by_loc[0].subject_sd == doctest::Approx(std::sqrt(0.125)).epsilon(1e-12));

  // one group reproduces the overall numbers
  for (auto& s : segs) s.group_tag = "only";
  const auto one = breakdown(segs, GroupKey::GroupTag, true);
  REQUIRE(one.size() == 1);
  std::vector<A> t, p;
  for (const auto& s : segs) {
    t.push_back(s.truth);
    p.push_back(s.pred);
  }
  const auto overall = compute_metrics(activity_confusion(t, p));
  CHECK(one[0].pooled_accuracy == overall.accuracy);
  CHECK(one[0].metrics->macro_f1 == overall.macro_f1);
  CHECK(one[0].segments == segs.size());

  const auto gait = breakdown(segs, GroupKey::Subject, false, true);
  CHECK(gait[0].pooled_accuracy == 0.5);
  const auto by_act = breakdown(segs, GroupKey::Activity);
  CHECK(by_act.size() == 3);
  CHECK(by_act[0].key == "walking");

  const auto single = breakdown(std::span(segs).first(2), GroupKey::Subject);
  CHECK_FALSE(single[0].subject_sd.has_value());

  segs[3].device_location.clear();
  CHECK(code_of([&] { breakdown(segs, GroupKey::DeviceLocation); }) == ErrorCode::MissingMetadata);
  CHECK(parse_group_key("location") == GroupKey::DeviceLocation);
  CHECK(parse_group_key("subject") == GroupKey::Subject);
  CHECK_FALSE(parse_group_key("colour").has_value());
  CHECK(breakdown_csv(one, GroupKey::GroupTag).rfind("group_tag,segments,subjects,", 0) == 0);
}

TEST_CASE("confusion csv layout") {
  const auto csv = confusion_csv(from_counts({{1, 2}, {3, 4}}));
  CHECK(csv == "truth,c0,c1\nc0,1,2\nc1,3,4\n");
}
