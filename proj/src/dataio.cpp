#include "har/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "har/csv.hpp"
#include "har/error.hpp"
#include "har/rng.hpp"

namespace har {

namespace {

constexpr std::string_view kHeaderUnlabeled = "t,ax,ay,az";
constexpr std::string_view kHeaderLabeled = "t,ax,ay,az,label";
constexpr double kRateTolerance = 0.10;

std::string row_context(std::size_t line_no) { return " (line " + std::to_string(line_no) + ")"; }

std::optional<bool> parse_walking_aid(std::string_view text, std::size_t line_no) {
  std::string key;
  for (char c : csv::trim(text)) key.push_back(static_cast<char>(std::tolower(c)));
  if (key.empty()) return std::nullopt;
  if (key == "yes" || key == "true" || key == "1") return true;
  if (key == "no" || key == "false" || key == "0") return false;
  throw Error(ErrorCode::InvalidManifest,
              "walking_aid must be yes/no/true/false/1/0 or empty" + row_context(line_no));
}

void require_unique(const std::vector<std::string>& subjects) {
  std::set<std::string> seen;
  for (const auto& s : subjects) {
    if (!seen.insert(s).second) throw Error(ErrorCode::InvalidSpec, "duplicate subject id " + s);
  }
}

// Largest-remainder apportionment of n items to the given weights.
std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& weights) {
  std::vector<std::size_t> sizes(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += sizes[i];
    remainders.emplace_back(exact - static_cast<double>(sizes[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++sizes[remainders[r % remainders.size()].second];
  return sizes;
}

// Assigns `rest` to Train/Validation, holding out round(fraction * |rest|)
// (at least one, leaving at least one) for validation when fraction > 0.
void split_rest(std::vector<std::string> rest, double fraction, Rng& rng, SplitAssignment& out) {
  rng.shuffle(std::span<std::string>(rest));
  std::size_t n_val = 0;
  if (fraction > 0.0 && rest.size() >= 2) {
    n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(rest.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, rest.size() - 1);
  }
  for (std::size_t i = 0; i < rest.size(); ++i) {
    out.sets[rest[i]] = i < n_val ? SplitSet::Validation : SplitSet::Train;
  }
}

}  // namespace

double measured_rate_hz(const std::vector<Sample>& samples) {
  if (samples.size() < 2) throw Error(ErrorCode::TooFewSamples, "rate needs at least two samples");
  std::vector<double> dt(samples.size() - 1);
  for (std::size_t i = 1; i < samples.size(); ++i) dt[i - 1] = samples[i].t - samples[i - 1].t;
  const std::size_t mid = dt.size() / 2;
  std::nth_element(dt.begin(), dt.begin() + static_cast<std::ptrdiff_t>(mid), dt.end());
  double median = dt[mid];
  if (dt.size() % 2 == 0) {
    const double lower = *std::max_element(dt.begin(), dt.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return 1.0 / median;
}

void validate(const Recording& rec) {
  for (std::size_t i = 1; i < rec.samples.size(); ++i) {
    if (!(rec.samples[i].t > rec.samples[i - 1].t)) {
      throw Error(ErrorCode::NonMonotoneTime,
                  rec.recording_id + ": timestamp at sample " + std::to_string(i) +
                      " does not increase");
    }
  }
  if (rec.labels && rec.labels->size() != rec.samples.size()) {
    throw Error(ErrorCode::UnknownLabel, rec.recording_id + ": label count differs from sample count");
  }
  if (!(rec.sample_rate_hz > 0.0)) {
    throw Error(ErrorCode::RateMismatch, rec.recording_id + ": sample rate must be positive");
  }
  if (rec.samples.size() >= 2) {
    const double measured = measured_rate_hz(rec.samples);
    if (std::abs(measured - rec.sample_rate_hz) > kRateTolerance * measured) {
      throw Error(ErrorCode::RateMismatch, rec.recording_id + ": declared rate " +
                                               csv::format(rec.sample_rate_hz) +
                                               " Hz vs measured " + csv::format(measured) + " Hz");
    }
  }
}

Recording parse_recording_text(std::string_view text, std::optional<double> expected_hz,
                               RecordingInfo info) {
  const auto rows = csv::lines(text);
  if (rows.empty()) throw Error(ErrorCode::MissingColumn, info.recording_id + ": empty file");
  const std::string_view header = rows.front();
  bool has_labels = false;
  if (header == kHeaderLabeled) {
    has_labels = true;
  } else if (header != kHeaderUnlabeled) {
    throw Error(ErrorCode::MissingColumn, info.recording_id + ": header must be 't,ax,ay,az' or "
                                                              "'t,ax,ay,az,label', got '" +
                                              std::string(header) + "'");
  }
  const std::size_t width = has_labels ? 5 : 4;

  Recording rec;
  rec.recording_id = std::move(info.recording_id);
  rec.subject_id = std::move(info.subject_id);
  rec.device_location = std::move(info.device_location);
  rec.samples.reserve(rows.size() - 1);
  std::vector<ActivityLabel> labels;

  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].empty()) continue;
    const auto fields = csv::split(rows[r]);
    if (fields.size() != width) {
      throw Error(ErrorCode::MissingColumn, rec.recording_id + ": expected " +
                                                std::to_string(width) + " fields" + row_context(r + 1));
    }
    double values[4];
    for (std::size_t c = 0; c < 4; ++c) {
      const auto v = csv::parse_double(fields[c]);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MissingColumn,
                    rec.recording_id + ": non-numeric field '" + std::string(fields[c]) + "'" +
                        row_context(r + 1));
      }
      values[c] = *v;
    }
    if (!rec.samples.empty() && !(values[0] > rec.samples.back().t)) {
      throw Error(ErrorCode::NonMonotoneTime,
                  rec.recording_id + ": timestamps not strictly increasing" + row_context(r + 1));
    }
    rec.samples.push_back({values[0], values[1], values[2], values[3]});
    if (has_labels) {
      const auto label = parse_activity(csv::trim(fields[4]));
      if (!label) {
        throw Error(ErrorCode::UnknownLabel, rec.recording_id + ": unknown label '" +
                                                 std::string(fields[4]) + "'" + row_context(r + 1));
      }
      labels.push_back(*label);
    }
  }
  if (has_labels) rec.labels = std::move(labels);

  if (rec.samples.size() >= 2) {
    const double measured = measured_rate_hz(rec.samples);
    if (expected_hz) {
      if (std::abs(measured - *expected_hz) > kRateTolerance * *expected_hz) {
        throw Error(ErrorCode::RateMismatch, rec.recording_id + ": measured " +
                                                 csv::format(measured) + " Hz, expected " +
                                                 csv::format(*expected_hz) + " Hz");
      }
      rec.sample_rate_hz = *expected_hz;
    } else {
      rec.sample_rate_hz = measured;
    }
  } else if (expected_hz) {
    rec.sample_rate_hz = *expected_hz;
  } else {
    throw Error(ErrorCode::TooFewSamples,
                rec.recording_id + ": need two samples to infer the sample rate");
  }
  return rec;
}

Recording parse_recording(const std::filesystem::path& path, std::optional<double> expected_hz,
                          std::optional<RecordingInfo> info) {
  if (!info) info = RecordingInfo{path.stem().string(), {}, {}};
  return parse_recording_text(csv::read_file(path), expected_hz, std::move(*info));
}

std::string serialize_recording(const Recording& rec) {
  std::string out(rec.labels ? kHeaderLabeled : kHeaderUnlabeled);
  out += '\n';
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    const Sample& s = rec.samples[i];
    out += csv::format(s.t);
    out += ',';
    out += csv::format(s.ax);
    out += ',';
    out += csv::format(s.ay);
    out += ',';
    out += csv::format(s.az);
    if (rec.labels) {
      out += ',';
      out += to_string((*rec.labels)[i]);
    }
    out += '\n';
  }
  return out;
}

void write_recording(const std::filesystem::path& path, const Recording& rec) {
  csv::write_file(path, serialize_recording(rec));
}

std::filesystem::path Manifest::resolve(const ManifestEntry& entry) const {
  const std::filesystem::path p(entry.path);
  return p.is_absolute() ? p : base_dir / p;
}

const SubjectMetadata* Manifest::find_subject(std::string_view subject_id) const {
  for (const auto& s : subjects) {
    if (s.subject_id == subject_id) return &s;
  }
  return nullptr;
}

std::vector<std::string> Manifest::subject_ids() const {
  std::vector<std::string> ids;
  ids.reserve(subjects.size());
  for (const auto& s : subjects) ids.push_back(s.subject_id);
  return ids;
}

Manifest parse_manifest_text(std::string_view text, std::filesystem::path base_dir) {
  const auto rows = csv::lines(text);
  if (rows.empty() || rows.front() != kManifestHeader) {
    throw Error(ErrorCode::MissingColumn,
                "manifest header must be '" + std::string(kManifestHeader) + "'");
  }
  Manifest m;
  m.base_dir = std::move(base_dir);
  std::set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].empty()) continue;
    const auto f = csv::split(rows[r]);
    if (f.size() != 6) {
      throw Error(ErrorCode::MissingColumn, "manifest row needs 6 fields" + row_context(r + 1));
    }
    ManifestEntry e{std::string(csv::trim(f[0])), std::string(csv::trim(f[1])),
                    std::string(csv::trim(f[2])), std::string(csv::trim(f[3])),
                    std::string(csv::trim(f[4])), parse_walking_aid(f[5], r + 1)};
    if (e.recording_id.empty() || e.subject_id.empty() || e.path.empty()) {
      throw Error(ErrorCode::InvalidManifest,
                  "recording_id, subject_id and path are required" + row_context(r + 1));
    }
    if (!ids.insert(e.recording_id).second) {
      throw Error(ErrorCode::InvalidManifest,
                  "duplicate recording_id " + e.recording_id + row_context(r + 1));
    }
    if (const SubjectMetadata* s = m.find_subject(e.subject_id)) {
      if (s->group_tag != e.group_tag || s->walking_aid != e.walking_aid) {
        throw Error(ErrorCode::InvalidManifest,
                    "conflicting metadata for subject " + e.subject_id + row_context(r + 1));
      }
    } else {
      m.subjects.push_back({e.subject_id, e.group_tag, e.walking_aid});
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest_text(csv::read_file(path), path.parent_path());
}

std::string serialize_manifest(const Manifest& manifest) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& e : manifest.entries) {
    out += e.recording_id + ',' + e.subject_id + ',' + e.device_location + ',' + e.path + ',' +
           e.group_tag + ',';
    if (e.walking_aid) out += *e.walking_aid ? "yes" : "no";
    out += '\n';
  }
  return out;
}

std::vector<Recording> load_recordings(const Manifest& manifest, std::optional<double> expected_hz) {
  std::vector<Recording> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    out.push_back(parse_recording(manifest.resolve(e), expected_hz,
                                  RecordingInfo{e.recording_id, e.subject_id, e.device_location}));
  }
  return out;
}

std::string_view to_string(SplitSet set) noexcept {
  switch (set) {
    case SplitSet::Train: return "train";
    case SplitSet::Validation: return "validation";
    case SplitSet::Evaluation: return "evaluation";
  }
  return "unknown";
}

std::optional<SplitSet> parse_split_set(std::string_view text) noexcept {
  text = csv::trim(text);
  if (text == "train") return SplitSet::Train;
  if (text == "validation" || text == "val") return SplitSet::Validation;
  if (text == "evaluation" || text == "eval") return SplitSet::Evaluation;
  return std::nullopt;
}

std::vector<std::string> SplitAssignment::subjects_in(SplitSet set) const {
  std::vector<std::string> out;
  for (const auto& [subject, s] : sets) {
    if (s == set) out.push_back(subject);
  }
  return out;
}

std::size_t SplitAssignment::count(SplitSet set) const {
  return static_cast<std::size_t>(
      std::count_if(sets.begin(), sets.end(), [set](const auto& kv) { return kv.second == set; }));
}

SplitAssignment subject_split(const std::vector<std::string>& subjects, SplitRatios ratios,
                              std::uint64_t seed) {
  if (subjects.size() < 3) {
    throw Error(ErrorCode::TooFewSubjects,
                "subject split needs at least 3 subjects, got " + std::to_string(subjects.size()));
  }
  require_unique(subjects);
  const double sum = ratios.train + ratios.validation + ratios.evaluation;
  if (ratios.train < 0 || ratios.validation < 0 || ratios.evaluation < 0 ||
      std::abs(sum - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidSpec, "split ratios must be non-negative and sum to 1");
  }
  const auto sizes =
      apportion(subjects.size(), {ratios.train, ratios.validation, ratios.evaluation});
  std::vector<std::string> order = subjects;
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(order));
  SplitAssignment out;
  std::size_t i = 0;
  for (std::size_t set = 0; set < 3; ++set) {
    for (std::size_t j = 0; j < sizes[set]; ++j, ++i) out.sets[order[i]] = static_cast<SplitSet>(set);
  }
  return out;
}

FoldPlan make_folds(const std::vector<std::string>& subjects, FoldPolicy policy,
                    std::uint64_t seed) {
  const std::size_t n = subjects.size();
  const std::size_t minimum = policy.kind == FoldPolicy::Kind::LeaveOneOutTrainPair ? 4 : 3;
  if (n < minimum) {
    throw Error(ErrorCode::TooFewSubjects, "fold policy needs at least " + std::to_string(minimum) +
                                               " subjects, got " + std::to_string(n));
  }
  require_unique(subjects);
  if (policy.validation_fraction < 0.0 || policy.validation_fraction >= 1.0) {
    throw Error(ErrorCode::InvalidSpec, "validation_fraction must be in [0, 1)");
  }

  FoldPlan plan;
  plan.policy = policy;
  switch (policy.kind) {
    case FoldPolicy::Kind::LeaveOneOut:
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng(mix_seed(seed, i));
        SplitAssignment fold;
        fold.sets[subjects[i]] = SplitSet::Evaluation;
        std::vector<std::string> rest;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) rest.push_back(subjects[j]);
        }
        split_rest(std::move(rest), policy.validation_fraction, rng, fold);
        plan.folds.push_back(std::move(fold));
      }
      break;
    case FoldPolicy::Kind::LeaveOneOutTrainPair:
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng(mix_seed(seed, i));
        SplitAssignment fold;
        fold.sets[subjects[i]] = SplitSet::Evaluation;
        std::vector<std::string> rest;
        for (std::size_t j = 0; j < n; ++j) {
          if (j != i) rest.push_back(subjects[j]);
        }
        rng.shuffle(std::span<std::string>(rest));
        for (std::size_t j = 0; j < rest.size(); ++j) {
          fold.sets[rest[j]] = j < 2 ? SplitSet::Train : SplitSet::Validation;
        }
        plan.folds.push_back(std::move(fold));
      }
      break;
    case FoldPolicy::Kind::KFold: {
      if (policy.k < 2 || static_cast<std::size_t>(policy.k) > n) {
        throw Error(ErrorCode::InvalidSpec, "k must be in [2, number of subjects]");
      }
      std::vector<std::string> order = subjects;
      Rng rng(seed);
      rng.shuffle(std::span<std::string>(order));
      const auto k = static_cast<std::size_t>(policy.k);
      for (std::size_t f = 0; f < k; ++f) {
        Rng fold_rng(mix_seed(seed, f + 1));
        SplitAssignment fold;
        std::vector<std::string> rest;
        for (std::size_t j = 0; j < n; ++j) {
          if (j % k == f) {
            fold.sets[order[j]] = SplitSet::Evaluation;
          } else {
            rest.push_back(order[j]);
          }
        }
        split_rest(std::move(rest), policy.validation_fraction, fold_rng, fold);
        plan.folds.push_back(std::move(fold));
      }
      break;
    }
  }
  return plan;
}

std::string serialize_folds(const FoldPlan& plan) {
  std::string out = "fold,subject_id,set\n";
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    for (const auto& [subject, set] : plan.folds[f].sets) {
      out += std::to_string(f) + ',' + subject + ',' + std::string(to_string(set)) + '\n';
    }
  }
  return out;
}

FoldPlan parse_folds_text(std::string_view text) {
  const auto rows = csv::lines(text);
  if (rows.empty() || rows.front() != "fold,subject_id,set") {
    throw Error(ErrorCode::MissingColumn, "split file header must be 'fold,subject_id,set'");
  }
  FoldPlan plan;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].empty()) continue;
    const auto f = csv::split(rows[r]);
    const auto fold = f.size() == 3 ? csv::parse_int(f[0]) : std::nullopt;
    const auto set = f.size() == 3 ? parse_split_set(f[2]) : std::nullopt;
    if (!fold || *fold < 0 || !set) {
      throw Error(ErrorCode::MissingColumn, "malformed split row" + row_context(r + 1));
    }
    const auto idx = static_cast<std::size_t>(*fold);
    if (plan.folds.size() <= idx) plan.folds.resize(idx + 1);
    const std::string subject(csv::trim(f[1]));
    if (!plan.folds[idx].sets.emplace(subject, *set).second) {
      throw Error(ErrorCode::InvalidSpec, "subject " + subject + " listed twice in fold " +
                                              std::to_string(idx));
    }
  }
  return plan;
}

}  // namespace har
