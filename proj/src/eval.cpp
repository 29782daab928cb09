#include "har/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "har/csv.hpp"
#include "har/error.hpp"

namespace har {

namespace {

std::vector<std::string> activity_names() {
  std::vector<std::string> out;
  for (auto a : kAllActivities) out.emplace_back(to_string(a));
  return out;
}

std::vector<std::string> gait_names() {
  return {std::string(to_string(GaitClass::Gait)), std::string(to_string(GaitClass::NonGait))};
}

double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  undefined = den == 0;
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

const std::string& key_of(const ScoredSegment& s, GroupKey key, std::string& scratch) {
  switch (key) {
    case GroupKey::DeviceLocation: return s.device_location;
    case GroupKey::GroupTag: return s.group_tag;
    case GroupKey::Subject: return s.subject_id;
    case GroupKey::Activity:
      scratch = std::string(to_string(s.truth));
      return scratch;
  }
  return s.subject_id;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : classes(std::move(class_names)),
      counts(classes.size(), std::vector<std::uint64_t>(classes.size(), 0)) {}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t pred, std::uint64_t n) {
  if (truth >= size() || pred >= size()) {
    throw Error(ErrorCode::UnknownLabel, "class index outside the confusion matrix");
  }
  counts[truth][pred] += n;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> pred,
                                 std::vector<std::string> classes) {
  if (truth.size() != pred.size()) {
    throw Error(ErrorCode::LengthMismatch, "truth has " + std::to_string(truth.size()) +
                                               " labels, prediction has " + std::to_string(pred.size()));
  }
  ConfusionMatrix cm(std::move(classes));
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], pred[i]);
  return cm;
}

ConfusionMatrix activity_confusion(std::span<const ActivityLabel> truth,
                                   std::span<const ActivityLabel> pred) {
  std::vector<std::size_t> t, p;
  for (auto a : truth) t.push_back(index_of(a));
  for (auto a : pred) p.push_back(index_of(a));
  return confusion_matrix(t, p, activity_names());
}

ConfusionMatrix gait_confusion(std::span<const ActivityLabel> truth,
                               std::span<const ActivityLabel> pred) {
  std::vector<std::size_t> t, p;
  for (auto a : truth) t.push_back(static_cast<std::size_t>(map_gait(a)));
  for (auto a : pred) p.push_back(static_cast<std::size_t>(map_gait(a)));
  return confusion_matrix(t, p, gait_names());
}

ConfusionMatrix merge_to_gait(const ConfusionMatrix& cm) {
  if (cm.size() != kNumActivities) {
    throw Error(ErrorCode::ShapeMismatch, "gait merge needs the six-activity matrix");
  }
  ConfusionMatrix out(gait_names());
  for (std::size_t i = 0; i < kNumActivities; ++i) {
    for (std::size_t j = 0; j < kNumActivities; ++j) {
      out.add(static_cast<std::size_t>(map_gait(kAllActivities[i])),
              static_cast<std::size_t>(map_gait(kAllActivities[j])), cm.counts[i][j]);
    }
  }
  return out;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm, std::optional<std::size_t> positive) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix has no scored samples");
  const std::size_t C = cm.size();
  if (positive && *positive >= C) throw Error(ErrorCode::UnknownLabel, "positive class index out of range");

  MetricsReport r;
  r.total = total;
  const std::uint64_t trace = cm.trace();
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);

  std::uint64_t sum_tp = 0, sum_fp = 0, sum_fn = 0;
  for (std::size_t i = 0; i < C; ++i) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < C; ++j) {
      row += cm.counts[i][j];
      col += cm.counts[j][i];
    }
    const std::uint64_t tp = cm.counts[i][i];
    const std::uint64_t fp = col - tp, fn = row - tp;
    ClassMetrics m;
    m.name = cm.classes[i];
    m.support = row;
    m.precision = ratio(tp, col, m.precision_undefined);
    m.recall = ratio(tp, row, m.recall_undefined);
    m.f1 = ratio(2 * tp, 2 * tp + fp + fn, m.f1_undefined);
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
    sum_tp += tp;
    sum_fp += fp;
    sum_fn += fn;
    r.per_class.push_back(std::move(m));

    if (positive && *positive == i) {
      BinaryMetrics b;
      b.positive = cm.classes[i];
      b.precision = r.per_class.back().precision;
      b.recall = r.per_class.back().recall;
      b.f1 = r.per_class.back().f1;
      const std::uint64_t tn = total - tp - fp - fn;
      b.fpr = ratio(fp, fp + tn, b.fpr_undefined);
      b.specificity = 1.0 - b.fpr;
      r.binary = b;
    }
  }
  r.macro_precision /= static_cast<double>(C);
  r.macro_recall /= static_cast<double>(C);
  r.macro_f1 /= static_cast<double>(C);
  bool unused = false;
  r.micro_precision = ratio(sum_tp, sum_tp + sum_fp, unused);
  r.micro_recall = ratio(sum_tp, sum_tp + sum_fn, unused);
  r.micro_f1 = ratio(2 * sum_tp, 2 * sum_tp + sum_fp + sum_fn, unused);
  return r;
}

std::string metrics_csv(const MetricsReport& r) {
  std::string out = "metric,class,value,undefined\n";
  auto row = [&](std::string_view metric, std::string_view cls, double v, bool undefined = false) {
    out += std::string(metric) + ',' + std::string(cls) + ',' + csv::format(v) + ',' +
           (undefined ? "1" : "0") + '\n';
  };
  row("accuracy", "", r.accuracy);
  for (const auto& m : r.per_class) {
    row("precision", m.name, m.precision, m.precision_undefined);
    row("recall", m.name, m.recall, m.recall_undefined);
    row("f1", m.name, m.f1, m.f1_undefined);
    row("support", m.name, static_cast<double>(m.support));
  }
  row("macro_precision", "", r.macro_precision);
  row("macro_recall", "", r.macro_recall);
  row("macro_f1", "", r.macro_f1);
  row("micro_precision", "", r.micro_precision);
  row("micro_recall", "", r.micro_recall);
  row("micro_f1", "", r.micro_f1);
  if (r.binary) {
    row("binary_precision", r.binary->positive, r.binary->precision);
    row("binary_recall", r.binary->positive, r.binary->recall);
    row("binary_f1", r.binary->positive, r.binary->f1);
    row("fpr", r.binary->positive, r.binary->fpr, r.binary->fpr_undefined);
    row("specificity", r.binary->positive, r.binary->specificity, r.binary->fpr_undefined);
  }
  return out;
}

std::string render_confusion(const ConfusionMatrix& cm) {
  std::size_t width = 5;
  for (const auto& c : cm.classes) width = std::max(width, c.size());
  for (const auto& row : cm.counts) {
    for (auto v : row) width = std::max(width, std::to_string(v).size());
  }
  auto pad = [&](const std::string& s) { return std::string(width + 2 - s.size(), ' ') + s; };
  std::string out = pad("truth\\pred");
  if (width + 2 < 10) out = "truth\\pred";
  for (const auto& c : cm.classes) out += pad(c);
  out += '\n';
  for (std::size_t i = 0; i < cm.size(); ++i) {
    out += pad(cm.classes[i]);
    for (auto v : cm.counts[i]) out += pad(std::to_string(v));
    out += '\n';
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "truth";
  for (const auto& c : cm.classes) out += ',' + c;
  out += '\n';
  for (std::size_t i = 0; i < cm.size(); ++i) {
    out += cm.classes[i];
    for (auto v : cm.counts[i]) out += ',' + std::to_string(v);
    out += '\n';
  }
  return out;
}

std::string_view to_string(GroupKey key) noexcept {
  switch (key) {
    case GroupKey::DeviceLocation: return "device_location";
    case GroupKey::Activity: return "activity";
    case GroupKey::GroupTag: return "group_tag";
    case GroupKey::Subject: return "subject";
  }
  return "unknown";
}

std::optional<GroupKey> parse_group_key(std::string_view text) noexcept {
  if (text == "device_location" || text == "location") return GroupKey::DeviceLocation;
  if (text == "activity") return GroupKey::Activity;
  if (text == "group_tag" || text == "group") return GroupKey::GroupTag;
  if (text == "subject" || text == "subject_id") return GroupKey::Subject;
  return std::nullopt;
}

std::vector<BreakdownRow> breakdown(std::span<const ScoredSegment> segments, GroupKey key,
                                    bool with_metrics, bool gait) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ScoredSegment*>> groups;
  std::string scratch;
  for (const auto& s : segments) {
    const std::string& k = key_of(s, key, scratch);
    if (k.empty()) {
      throw Error(ErrorCode::MissingMetadata, "segment from " + s.recording_id + " has no " +
                                                  std::string(to_string(key)));
    }
    if (s.subject_id.empty()) {
      throw Error(ErrorCode::MissingMetadata, "segment from " + s.recording_id + " has no subject");
    }
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(&s);
  }

  auto correct = [gait](const ScoredSegment& s) {
    return gait ? map_gait(s.truth) == map_gait(s.pred) : s.truth == s.pred;
  };

  std::vector<BreakdownRow> rows;
  for (const auto& k : order) {
    const auto& members = groups[k];
    BreakdownRow row;
    row.key = k;
    row.segments = members.size();
    std::size_t hits = 0;
    std::vector<std::string> subject_order;
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_subject;  // hits, count
    std::vector<ActivityLabel> truth, pred;
    for (const ScoredSegment* s : members) {
      const bool ok = correct(*s);
      hits += ok ? 1 : 0;
      auto [it, inserted] = per_subject.try_emplace(s->subject_id, 0, 0);
      if (inserted) subject_order.push_back(s->subject_id);
      it->second.first += ok ? 1 : 0;
      it->second.second += 1;
      truth.push_back(s->truth);
      pred.push_back(s->pred);
    }
    row.pooled_accuracy = static_cast<double>(hits) / static_cast<double>(members.size());
    row.subjects = subject_order.size();
    std::vector<double> accs;
    for (const auto& sid : subject_order) {
      const auto [h, c] = per_subject[sid];
      accs.push_back(static_cast<double>(h) / static_cast<double>(c));
    }
    const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
    row.subject_mean_accuracy = mean;
    if (accs.size() >= 2) {
      double ss = 0.0;
      for (double a : accs) ss += (a - mean) * (a - mean);
      row.subject_sd = std::sqrt(ss / static_cast<double>(accs.size() - 1));
    }
    if (with_metrics) {
      row.metrics = gait ? compute_metrics(gait_confusion(truth, pred), 0)
                         : compute_metrics(activity_confusion(truth, pred));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string breakdown_csv(const std::vector<BreakdownRow>& rows, GroupKey key) {
  std::string out = std::string(to_string(key)) +
                    ",segments,subjects,pooled_accuracy,subject_mean_accuracy,subject_sd\n";
  for (const auto& r : rows) {
    out += r.key + ',' + std::to_string(r.segments) + ',' + std::to_string(r.subjects) + ',' +
           csv::format(r.pooled_accuracy) + ',' + csv::format(r.subject_mean_accuracy) + ',' +
           (r.subject_sd ? csv::format(*r.subject_sd) : std::string()) + '\n';
  }
  return out;
}

}  // namespace har
