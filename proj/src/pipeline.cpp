#include "har/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "har/csv.hpp"
#include "har/error.hpp"
#include "har/rng.hpp"

namespace har {

namespace {

[[noreturn]] void bad_config(const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); }

double as_double(std::string_view key, std::string_view v) {
  auto d = csv::parse_double(v);
  if (!d || !std::isfinite(*d)) bad_config(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  return *d;
}

long long as_int(std::string_view key, std::string_view v) {
  auto i = csv::parse_int(v);
  if (!i) bad_config(std::string(key) + ": expected an integer, got '" + std::string(v) + "'");
  return *i;
}

std::uint64_t as_seed(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    bad_config(std::string(key) + ": expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool as_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  bad_config(std::string(key) + ": expected a boolean, got '" + std::string(v) + "'");
}

std::vector<int> as_int_list(std::string_view key, std::string_view v) {
  std::vector<int> out;
  for (auto part : csv::split(v, ',')) out.push_back(static_cast<int>(as_int(key, csv::trim(part))));
  return out;
}

std::string join(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

std::string_view to_string(MetricMode m) { return m == MetricMode::Pooled ? "pooled" : "per-subject"; }

std::string_view to_string(FoldKind k) {
  switch (k) {
    case FoldKind::Holdout: return "holdout";
    case FoldKind::LeaveOneOut: return "loso";
    case FoldKind::LeaveOneOutTrainPair: return "loso-train-pair";
    case FoldKind::KFold: return "kfold";
  }
  return "holdout";
}

std::string fold_dir_name(std::size_t fold) {
  std::string n = std::to_string(fold);
  return "fold_" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

}  // namespace

void PipelineConfig::set(std::string_view key, std::string_view value) {
  const std::string v(csv::trim(value));
  if (key == "manifest") manifest = v;
  else if (key == "output_dir") output_dir = v;
  else if (key == "checkpoint") checkpoint = v;
  else if (key == "input_rate_hz") {
    if (v.empty()) input_rate_hz.reset();
    else input_rate_hz = as_double(key, v);
  } else if (key == "seed") seed = as_seed(key, v);
  else if (key == "window_seconds") window_seconds = as_double(key, v);
  else if (key == "stride_seconds") stride_seconds = as_double(key, v);
  else if (key == "target_hz") model.target_hz = as_double(key, v);
  else if (key == "filter") {
    auto f = parse_filter_variant(v);
    if (!f) bad_config("filter: expected majority, max-confidence or none, got '" + v + "'");
    filter = *f;
  } else if (key == "metric_mode") {
    if (v == "pooled") metric_mode = MetricMode::Pooled;
    else if (v == "per-subject" || v == "subject") metric_mode = MetricMode::PerSubject;
    else bad_config("metric_mode: expected pooled or per-subject, got '" + v + "'");
  } else if (key == "score") {
    if (v == "filtered") score_filtered = true;
    else if (v == "raw") score_filtered = false;
    else bad_config("score: expected filtered or raw, got '" + v + "'");
  } else if (key == "folds") {
    if (v == "holdout") folds = FoldKind::Holdout;
    else if (v == "loso") folds = FoldKind::LeaveOneOut;
    else if (v == "loso-train-pair") folds = FoldKind::LeaveOneOutTrainPair;
    else if (v == "kfold") folds = FoldKind::KFold;
    else bad_config("folds: expected holdout, loso, loso-train-pair or kfold, got '" + v + "'");
  } else if (key == "kfold_k") kfold_k = static_cast<int>(as_int(key, v));
  else if (key == "validation_fraction") validation_fraction = as_double(key, v);
  else if (key == "split_train") split.train = as_double(key, v);
  else if (key == "split_validation") split.validation = as_double(key, v);
  else if (key == "split_evaluation") split.evaluation = as_double(key, v);
  else if (key == "epochs") train.epochs = static_cast<int>(as_int(key, v));
  else if (key == "batch_size") train.batch_size = static_cast<int>(as_int(key, v));
  else if (key == "max_lr") train.max_lr = as_double(key, v);
  else if (key == "warmup_fraction") train.warmup_fraction = as_double(key, v);
  else if (key == "div_factor") train.div_factor = as_double(key, v);
  else if (key == "final_div_factor") train.final_div_factor = as_double(key, v);
  else if (key == "momentum") train.momentum = as_double(key, v);
  else if (key == "weight_decay") train.weight_decay = as_double(key, v);
  else if (key == "augment") train.augment = as_bool(key, v);
  else if (key == "kernel") model.kernel = static_cast<int>(as_int(key, v));
  else if (key == "block_widths") model.block_widths = as_int_list(key, v);
  else if (key == "block_dilations") model.block_dilations = as_int_list(key, v);
  else if (key == "min_bout_seconds") min_bout_seconds = as_double(key, v);
  else if (key == "utest") {
    auto m = parse_utest_method(v);
    if (!m) bad_config("utest: expected auto, exact or normal, got '" + v + "'");
    utest = *m;
  } else {
    bad_config("unknown config key '" + std::string(key) + "'");
  }
}

std::filesystem::path PipelineConfig::checkpoint_path() const {
  return checkpoint.empty() ? output_dir / "model.ckpt" : checkpoint;
}

void PipelineConfig::sync() {
  model.window_seconds = window_seconds;
  model.seed = seed;
  train.seed = seed;
}

void PipelineConfig::validate() const {
  window_options(*this, false).validate();
  model.validate();
  model.require_activity_head();
  train.validate();
  if (kfold_k < 2) bad_config("kfold_k must be >= 2");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) bad_config("validation_fraction must be in [0, 1)");
  if (min_bout_seconds < 0.0) bad_config("min_bout_seconds must be non-negative");
  if (input_rate_hz && !(*input_rate_hz > 0.0)) bad_config("input_rate_hz must be positive");
}

PipelineConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  int line_no = 0;
  for (auto raw : csv::lines(text)) {
    ++line_no;
    auto line = raw.substr(0, raw.find('#'));
    line = csv::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      bad_config("config line " + std::to_string(line_no) + " is not key = value");
    }
    cfg.set(csv::trim(line.substr(0, eq)), csv::trim(line.substr(eq + 1)));
  }
  auto rebase = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative() && !base_dir.empty()) p = base_dir / p;
  };
  rebase(cfg.manifest);
  rebase(cfg.output_dir);
  rebase(cfg.checkpoint);
  cfg.sync();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config_text(csv::read_file(path), path.parent_path());
}

std::string serialize_config(const PipelineConfig& c) {
  std::string out;
  auto kv = [&](std::string_view k, const std::string& v) { out += std::string(k) + " = " + v + '\n'; };
  kv("manifest", c.manifest.string());
  kv("output_dir", c.output_dir.string());
  kv("checkpoint", c.checkpoint.string());
  kv("input_rate_hz", c.input_rate_hz ? csv::format(*c.input_rate_hz) : "");
  kv("seed", std::to_string(c.seed));
  kv("window_seconds", csv::format(c.window_seconds));
  kv("stride_seconds", csv::format(c.stride_seconds));
  kv("target_hz", csv::format(c.model.target_hz));
  kv("filter", std::string(to_string(c.filter)));
  kv("metric_mode", std::string(to_string(c.metric_mode)));
  kv("score", c.score_filtered ? "filtered" : "raw");
  kv("folds", std::string(to_string(c.folds)));
  kv("kfold_k", std::to_string(c.kfold_k));
  kv("validation_fraction", csv::format(c.validation_fraction));
  kv("split_train", csv::format(c.split.train));
  kv("split_validation", csv::format(c.split.validation));
  kv("split_evaluation", csv::format(c.split.evaluation));
  kv("epochs", std::to_string(c.train.epochs));
  kv("batch_size", std::to_string(c.train.batch_size));
  kv("max_lr", csv::format(c.train.max_lr));
  kv("warmup_fraction", csv::format(c.train.warmup_fraction));
  kv("div_factor", csv::format(c.train.div_factor));
  kv("final_div_factor", csv::format(c.train.final_div_factor));
  kv("momentum", csv::format(c.train.momentum));
  kv("weight_decay", csv::format(c.train.weight_decay));
  kv("augment", c.train.augment ? "true" : "false");
  kv("kernel", std::to_string(c.model.kernel));
  kv("block_widths", join(c.model.block_widths));
  kv("block_dilations", join(c.model.block_dilations));
  kv("min_bout_seconds", csv::format(c.min_bout_seconds));
  kv("utest", std::string(to_string(c.utest)));
  return out;
}

WindowOptions window_options(const PipelineConfig& cfg, bool keep_unlabeled) {
  WindowOptions o;
  o.window_seconds = cfg.window_seconds;
  o.stride_seconds = cfg.stride_seconds;
  o.target_hz = cfg.model.target_hz;
  o.keep_unlabeled = keep_unlabeled;
  return o;
}

std::vector<Window> prepare_windows(std::span<const Recording> recordings, const WindowOptions& options) {
  std::vector<Window> out;
  for (const auto& rec : recordings) {
    auto ws = window_stream(resample_recording(rec, options.target_hz), options);
    out.insert(out.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
  }
  return out;
}

std::vector<RecordingPrediction> predict_recordings(ModelParams& params, std::span<const Recording> recordings,
                                                    const PipelineConfig& cfg) {
  const WindowOptions wopt = window_options(cfg, true);
  FilterOptions fopt{cfg.window_seconds, cfg.stride_seconds, cfg.filter};
  std::vector<RecordingPrediction> out;
  for (const auto& rec : recordings) {
    const auto windows = window_stream(resample_recording(rec, wopt.target_hz), wopt);
    RecordingPrediction p;
    p.recording_id = rec.recording_id;
    p.subject_id = rec.subject_id;
    p.device_location = rec.device_location;
    if (!windows.empty()) {
      const auto probs = predict_windows(params, windows);
      for (std::size_t i = 0; i < windows.size(); ++i) {
        p.raw.push_back(make_segment(windows[i].central_start, windows[i].central_end, probs[i]));
        p.truth.push_back(windows[i].label);
      }
      p.filtered = majority_filter(p.raw, fopt);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string predictions_csv(std::span<const RecordingPrediction> preds) {
  std::string out = std::string(kPredictionsHeader) + '\n';
  for (const auto& p : preds) {
    for (std::size_t i = 0; i < p.raw.size(); ++i) {
      const auto& s = p.raw[i];
      out += p.recording_id + ',' + csv::format(s.t_start) + ',' + csv::format(s.t_end);
      for (double v : s.probs) out += ',' + csv::format(v);
      out += ',' + std::string(to_string(s.label)) + ',' + std::string(to_string(p.filtered[i].label)) + '\n';
    }
  }
  return out;
}

std::vector<RecordingPrediction> parse_predictions_csv(std::string_view text) {
  const auto ls = csv::lines(text);
  auto bad = [](const std::string& why) -> void { throw Error(ErrorCode::MissingColumn, why); };
  if (ls.empty() || ls[0] != kPredictionsHeader) {
    bad("predictions file lacks the expected header");
  }
  std::vector<RecordingPrediction> out;
  for (std::size_t li = 1; li < ls.size(); ++li) {
    if (csv::trim(ls[li]).empty()) continue;
    const auto f = csv::split(ls[li]);
    if (f.size() != 11) bad("predictions line " + std::to_string(li + 1) + " has " + std::to_string(f.size()) + " fields");
    std::array<double, kNumActivities> probs{};
    std::array<double, 2> t{};
    for (std::size_t k = 0; k < 2; ++k) {
      auto d = csv::parse_double(f[1 + k]);
      if (!d) bad("predictions line " + std::to_string(li + 1) + ": bad time");
      t[k] = *d;
    }
    for (std::size_t k = 0; k < kNumActivities; ++k) {
      auto d = csv::parse_double(f[3 + k]);
      if (!d) bad("predictions line " + std::to_string(li + 1) + ": bad probability");
      probs[k] = *d;
    }
    auto raw = parse_activity(f[9]);
    auto filtered = parse_activity(f[10]);
    if (!raw || !filtered) {
      throw Error(ErrorCode::UnknownLabel, "predictions line " + std::to_string(li + 1) + ": unknown label");
    }
    if (out.empty() || out.back().recording_id != f[0]) {
      RecordingPrediction p;
      p.recording_id = std::string(f[0]);
      out.push_back(std::move(p));
    }
    SegmentPrediction s{t[0], t[1], probs, *raw};
    out.back().raw.push_back(s);
    s.label = *filtered;
    out.back().filtered.push_back(s);
  }
  return out;
}

void attach_truth(std::vector<RecordingPrediction>& preds, std::span<const Recording> recordings,
                  const PipelineConfig& cfg) {
  const WindowOptions wopt = window_options(cfg, true);
  for (auto& p : preds) {
    auto it = std::find_if(recordings.begin(), recordings.end(),
                           [&](const Recording& r) { return r.recording_id == p.recording_id; });
    if (it == recordings.end()) {
      throw Error(ErrorCode::InvalidManifest, "predictions mention unknown recording '" + p.recording_id + "'");
    }
    p.subject_id = it->subject_id;
    p.device_location = it->device_location;
    const auto windows = window_stream(resample_recording(*it, wopt.target_hz), wopt);
    if (windows.size() != p.raw.size()) {
      throw Error(ErrorCode::InvalidManifest, "recording '" + p.recording_id + "' yields " +
                                                  std::to_string(windows.size()) + " windows but predictions list " +
                                                  std::to_string(p.raw.size()));
    }
    p.truth.clear();
    for (const auto& w : windows) p.truth.push_back(w.label);
  }
}

std::vector<ScoredSegment> scored_segments(std::span<const RecordingPrediction> preds, const Manifest* manifest,
                                           bool use_filtered) {
  std::vector<ScoredSegment> out;
  for (const auto& p : preds) {
    std::string tag;
    if (manifest) {
      if (const auto* s = manifest->find_subject(p.subject_id)) tag = s->group_tag;
    }
    const auto& segs = use_filtered ? p.filtered : p.raw;
    for (std::size_t i = 0; i < p.truth.size() && i < segs.size(); ++i) {
      if (!p.truth[i]) continue;
      out.push_back({p.recording_id, p.subject_id, p.device_location, tag, *p.truth[i], segs[i].label});
    }
  }
  return out;
}

EvaluationOutputs evaluate_segments(std::span<const ScoredSegment> segments) {
  std::vector<ActivityLabel> truth, pred;
  for (const auto& s : segments) {
    truth.push_back(s.truth);
    pred.push_back(s.pred);
  }
  EvaluationOutputs ev;
  ev.activity_cm = activity_confusion(truth, pred);
  ev.gait_cm = merge_to_gait(ev.activity_cm);
  ev.activity = compute_metrics(ev.activity_cm);
  ev.gait = compute_metrics(ev.gait_cm, static_cast<std::size_t>(GaitClass::Gait));
  ev.by_subject = breakdown(segments, GroupKey::Subject);
  ev.by_subject_gait = breakdown(segments, GroupKey::Subject, false, true);
  ev.by_location = breakdown(segments, GroupKey::DeviceLocation);
  ev.by_activity = breakdown(segments, GroupKey::Activity);
  return ev;
}

void write_evaluation(const EvaluationOutputs& ev, const std::filesystem::path& dir, MetricMode mode) {
  csv::write_file(dir / "metrics_activity.csv", metrics_csv(ev.activity));
  csv::write_file(dir / "metrics_gait.csv", metrics_csv(ev.gait));
  csv::write_file(dir / "confusion_activity.csv", confusion_csv(ev.activity_cm));
  csv::write_file(dir / "confusion_gait.csv", confusion_csv(ev.gait_cm));
  csv::write_file(dir / "breakdown_subject.csv", breakdown_csv(ev.by_subject, GroupKey::Subject));
  csv::write_file(dir / "breakdown_location.csv", breakdown_csv(ev.by_location, GroupKey::DeviceLocation));
  csv::write_file(dir / "breakdown_activity.csv", breakdown_csv(ev.by_activity, GroupKey::Activity));

  // Headline accuracy in the requested mode, for both label views.
  std::string summary = "view,mode,accuracy,sd\n";
  auto line = [&](std::string_view view, double pooled, const std::vector<double>& per_subject) {
    if (mode == MetricMode::Pooled) {
      summary += std::string(view) + ",pooled," + csv::format(pooled) + ",\n";
      return;
    }
    const double n = static_cast<double>(per_subject.size());
    const double mean = std::accumulate(per_subject.begin(), per_subject.end(), 0.0) / n;
    std::string sd;
    if (per_subject.size() >= 2) {
      double ss = 0.0;
      for (double a : per_subject) ss += (a - mean) * (a - mean);
      sd = csv::format(std::sqrt(ss / (n - 1.0)));
    }
    summary += std::string(view) + ",per-subject," + csv::format(mean) + ',' + sd + '\n';
  };
  std::vector<double> act, gait;
  for (const auto& r : ev.by_subject) act.push_back(r.pooled_accuracy);
  for (const auto& r : ev.by_subject_gait) gait.push_back(r.pooled_accuracy);
  line("activity", ev.activity.accuracy, act);
  line("gait", ev.gait.accuracy, gait);
  csv::write_file(dir / "summary.csv", summary);
}

std::vector<RecordingBouts> bouts_from_predictions(std::span<const RecordingPrediction> preds,
                                                   double min_bout_seconds) {
  std::vector<RecordingBouts> out;
  for (const auto& p : preds) {
    out.push_back({p.recording_id, extract_bouts(p.filtered, BoutOptions{min_bout_seconds})});
  }
  return out;
}

std::string bouts_csv(std::span<const RecordingBouts> bouts) {
  std::string out = "recording_id,group,t_start,t_end,duration\n";
  for (const auto& rb : bouts) {
    for (const auto& b : rb.bouts) {
      out += rb.recording_id + ',' + std::string(to_string(b.group)) + ',' + csv::format(b.t_start) + ',' +
             csv::format(b.t_end) + ',' + csv::format(b.duration) + '\n';
    }
  }
  return out;
}

std::vector<SubjectBoutSummary> summarize_bouts(std::span<const RecordingBouts> bouts, const Manifest& manifest) {
  std::map<std::string, std::vector<Bout>> by_subject;
  for (const auto& rb : bouts) {
    auto it = std::find_if(manifest.entries.begin(), manifest.entries.end(),
                           [&](const ManifestEntry& e) { return e.recording_id == rb.recording_id; });
    if (it == manifest.entries.end()) {
      throw Error(ErrorCode::InvalidManifest, "bouts mention unknown recording '" + rb.recording_id + "'");
    }
    auto& dst = by_subject[it->subject_id];
    dst.insert(dst.end(), rb.bouts.begin(), rb.bouts.end());
  }
  std::vector<SubjectBoutSummary> out;
  for (const auto& sid : manifest.subject_ids()) {
    auto it = by_subject.find(sid);
    if (it == by_subject.end()) continue;
    SubjectBoutSummary s;
    s.subject_id = sid;
    if (const auto* meta = manifest.find_subject(sid)) s.group_tag = meta->group_tag;
    s.gait_bouts = static_cast<std::size_t>(std::count_if(
        it->second.begin(), it->second.end(), [](const Bout& b) { return b.group == GaitClass::Gait; }));
    s.mean_gait_duration = mean_bout_duration(it->second, GaitClass::Gait);
    out.push_back(std::move(s));
  }
  return out;
}

std::string subject_summary_csv(std::span<const SubjectBoutSummary> rows) {
  std::string out = "subject_id,group_tag,gait_bouts,mean_duration\n";
  for (const auto& r : rows) {
    out += r.subject_id + ',' + r.group_tag + ',' + std::to_string(r.gait_bouts) + ',' +
           (r.mean_gait_duration ? csv::format(*r.mean_gait_duration) : std::string()) + '\n';
  }
  return out;
}

std::vector<SubjectBoutSummary> parse_subject_summary_csv(std::string_view text) {
  const auto ls = csv::lines(text);
  if (ls.empty() || ls[0] != "subject_id,group_tag,gait_bouts,mean_duration") {
    throw Error(ErrorCode::MissingColumn, "subject summary lacks the expected header");
  }
  std::vector<SubjectBoutSummary> out;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    if (csv::trim(ls[i]).empty()) continue;
    const auto f = csv::split(ls[i]);
    if (f.size() != 4) throw Error(ErrorCode::MissingColumn, "subject summary line " + std::to_string(i + 1) + " malformed");
    SubjectBoutSummary s;
    s.subject_id = std::string(f[0]);
    s.group_tag = std::string(f[1]);
    auto n = csv::parse_int(f[2]);
    if (!n || *n < 0) throw Error(ErrorCode::MissingColumn, "subject summary line " + std::to_string(i + 1) + ": bad count");
    s.gait_bouts = static_cast<std::size_t>(*n);
    if (!f[3].empty()) {
      auto d = csv::parse_double(f[3]);
      if (!d) throw Error(ErrorCode::MissingColumn, "subject summary line " + std::to_string(i + 1) + ": bad mean");
      s.mean_gait_duration = *d;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Window> windows_for(std::span<const Window> all, const std::vector<std::string>& subjects) {
  const std::set<std::string> keep(subjects.begin(), subjects.end());
  std::vector<Window> out;
  for (const auto& w : all) {
    if (w.label && keep.count(w.subject_id)) out.push_back(w);
  }
  return out;
}

FoldPlan plan_folds(const PipelineConfig& cfg, const std::vector<std::string>& subjects) {
  switch (cfg.folds) {
    case FoldKind::Holdout: {
      FoldPlan plan;
      plan.folds.push_back(subject_split(subjects, cfg.split, cfg.seed));
      return plan;
    }
    case FoldKind::LeaveOneOut: {
      FoldPolicy p = FoldPolicy::leave_one_out();
      p.validation_fraction = cfg.validation_fraction;
      return make_folds(subjects, p, cfg.seed);
    }
    case FoldKind::LeaveOneOutTrainPair:
      return make_folds(subjects, FoldPolicy::leave_one_out_train_pair(), cfg.seed);
    case FoldKind::KFold: {
      FoldPolicy p = FoldPolicy::kfold(cfg.kfold_k);
      p.validation_fraction = cfg.validation_fraction;
      return make_folds(subjects, p, cfg.seed);
    }
  }
  return {};
}

std::vector<FoldOutcome> run_training(const PipelineConfig& cfg_in, int jobs, const std::optional<FoldPlan>& plan_in) {
  PipelineConfig cfg = cfg_in;
  cfg.validate();
  const Manifest manifest = load_manifest(cfg.manifest);
  const auto recordings = load_recordings(manifest, cfg.input_rate_hz);
  std::vector<Recording> labeled;
  for (const auto& r : recordings) {
    if (r.labeled()) labeled.push_back(r);
  }
  if (labeled.empty()) throw Error(ErrorCode::EmptyDataset, "manifest has no labeled recordings to train on");
  std::vector<std::string> subjects;
  for (const auto& sid : manifest.subject_ids()) {
    if (std::any_of(labeled.begin(), labeled.end(), [&](const Recording& r) { return r.subject_id == sid; })) {
      subjects.push_back(sid);
    }
  }
  const FoldPlan plan = plan_in ? *plan_in : plan_folds(cfg, subjects);
  const auto windows = prepare_windows(labeled, window_options(cfg, false));
  const bool single = plan.folds.size() == 1;

  std::vector<FoldOutcome> outcomes(plan.folds.size());
  std::vector<std::exception_ptr> errors(plan.folds.size());
  std::atomic<std::size_t> next{0};

  auto work = [&]() {
    for (std::size_t f = next++; f < plan.folds.size(); f = next++) {
      try {
        const auto& split = plan.folds[f];
        FoldOutcome out;
        out.fold = f;
        out.dir = single ? cfg.checkpoint_path().parent_path() : cfg.output_dir / fold_dir_name(f);
        const std::filesystem::path ckpt = single ? cfg.checkpoint_path() : out.dir / "model.ckpt";
        HarModelConfig mcfg = cfg.model;
        TrainConfig tcfg = cfg.train;
        mcfg.seed = single ? cfg.seed : mix_seed(cfg.seed, 2 * f);
        tcfg.seed = single ? mix_seed(cfg.seed, 1) : mix_seed(cfg.seed, 2 * f + 1);
        const auto tr = windows_for(windows, split.subjects_in(SplitSet::Train));
        auto va = windows_for(windows, split.subjects_in(SplitSet::Validation));
        if (va.empty()) va = tr;
        TrainResult result = train(mcfg, tcfg, tr, va);
        save_checkpoint(result.params, mcfg, ckpt);
        csv::write_file(ckpt.parent_path() / "report.csv", result.report.to_csv());

        out.evaluation_subjects = split.subjects_in(SplitSet::Evaluation);
        if (!out.evaluation_subjects.empty()) {
          std::vector<Recording> eval_recs;
          for (const auto& r : labeled) {
            if (std::find(out.evaluation_subjects.begin(), out.evaluation_subjects.end(), r.subject_id) !=
                out.evaluation_subjects.end()) {
              eval_recs.push_back(r);
            }
          }
          const auto preds = predict_recordings(result.params, eval_recs, cfg);
          csv::write_file(out.dir / "predictions.csv", predictions_csv(preds));
          const auto segs = scored_segments(preds, &manifest, cfg.score_filtered);
          if (!segs.empty()) {
            const auto ev = evaluate_segments(segs);
            write_evaluation(ev, out.dir, cfg.metric_mode);
            out.segments = segs.size();
            out.accuracy = ev.activity.accuracy;
          }
        }
        outcomes[f] = std::move(out);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };

  const std::size_t n_threads = std::min<std::size_t>(std::max(1, jobs), plan.folds.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::string summary = "fold,evaluation_subjects,segments,accuracy\n";
  for (const auto& o : outcomes) {
    std::string subj;
    for (std::size_t i = 0; i < o.evaluation_subjects.size(); ++i) subj += (i ? ";" : "") + o.evaluation_subjects[i];
    summary += std::to_string(o.fold) + ',' + subj + ',' + std::to_string(o.segments) + ',' +
               csv::format(o.accuracy) + '\n';
  }
  csv::write_file(cfg.output_dir / "folds_summary.csv", summary);
  csv::write_file(cfg.output_dir / "folds.csv", serialize_folds(plan));
  return outcomes;
}

}  // namespace har
