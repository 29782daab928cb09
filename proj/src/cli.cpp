#include "har/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <set>

#include "har/csv.hpp"
#include "har/error.hpp"
#include "har/pipeline.hpp"
#include "har/synth.hpp"

namespace har::cli {

namespace {

// Flags shared by every subcommand that touches the pipeline config.
struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> window_seconds;
  std::optional<double> stride_seconds;
  std::string filter;
  std::string manifest;
  int jobs = 1;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "Flat key = value config file");
    app.add_option("--set", sets, "Config override key=value (repeatable)");
    app.add_option("--seed", seed, "Seed for every random choice");
    app.add_option("--window-seconds", window_seconds, "Window length in seconds");
    app.add_option("--stride-seconds", stride_seconds, "Window stride in seconds");
    app.add_option("--filter", filter, "Post-filter: majority, max-confidence or none");
    app.add_option("--manifest", manifest, "Recording manifest CSV");
    app.add_option("--jobs", jobs, "Parallel folds")->check(CLI::PositiveNumber);
  }

  PipelineConfig resolve() const {
    PipelineConfig cfg = config.empty() ? PipelineConfig{} : load_config(config);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "--set expects key=value, got '" + s + "'");
      cfg.set(csv::trim(std::string_view(s).substr(0, eq)), std::string_view(s).substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (window_seconds) cfg.window_seconds = *window_seconds;
    if (stride_seconds) cfg.stride_seconds = *stride_seconds;
    if (!filter.empty()) cfg.set("filter", filter);
    if (!manifest.empty()) cfg.manifest = manifest;
    cfg.sync();
    cfg.validate();
    return cfg;
  }
};

void require_file(const std::filesystem::path& p, std::string_view what) {
  if (p.empty()) throw Error(ErrorCode::Io, std::string(what) + " path not given");
  if (!std::filesystem::exists(p)) throw Error(ErrorCode::Io, std::string(what) + " not found: " + p.string());
}

int run_synth(const std::string& out_dir, int subjects, int per_class, double duration, double rate, double noise,
              std::uint64_t seed, const std::string& groups, const std::string& location, std::ostream& out) {
  SynthSpec spec;
  spec.per_class_counts.fill(per_class);
  spec.subjects = subjects;
  spec.duration_seconds = duration;
  spec.sample_rate_hz = rate;
  spec.noise_sd = noise;
  spec.seed = seed;
  spec.device_location = location;
  const auto recs = synth_generate(spec);

  std::vector<std::string> tags;
  for (auto t : csv::split(groups, ',')) {
    if (!csv::trim(t).empty()) tags.emplace_back(csv::trim(t));
  }
  const std::filesystem::path root(out_dir);
  Manifest m;
  m.base_dir = root;
  std::map<std::string, std::size_t> subject_index;
  for (const auto& r : recs) {
    const auto rel = std::filesystem::path("recordings") / (r.recording_id + ".csv");
    write_recording(root / rel, r);
    auto [it, inserted] = subject_index.try_emplace(r.subject_id, subject_index.size());
    const std::string tag = tags.empty() ? std::string() : tags[it->second % tags.size()];
    if (inserted) m.subjects.push_back({r.subject_id, tag, std::nullopt});
    m.entries.push_back({r.recording_id, r.subject_id, r.device_location, rel.generic_string(), tag, std::nullopt});
  }
  csv::write_file(root / "manifest.csv", serialize_manifest(m));
  out << "wrote " << recs.size() << " recordings and " << (root / "manifest.csv").string() << '\n';
  return kExitOk;
}

std::vector<RecordingPrediction> predictions_for(const PipelineConfig& cfg, const std::string& predictions,
                                                 const std::string& checkpoint,
                                                 const std::vector<Recording>& recordings) {
  if (!predictions.empty()) {
    require_file(predictions, "predictions file");
    auto preds = parse_predictions_csv(csv::read_file(predictions));
    attach_truth(preds, recordings, cfg);
    return preds;
  }
  const std::filesystem::path ckpt = checkpoint.empty() ? cfg.checkpoint_path() : std::filesystem::path(checkpoint);
  auto loaded = load_checkpoint(ckpt);
  return predict_recordings(loaded.params, recordings, cfg);
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Accelerometer activity recognition, gait bouts and group statistics", "har"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic recording set");
  std::string synth_out;
  int synth_subjects = 12, synth_per_class = 1;
  double synth_duration = 60.0, synth_rate = 50.0, synth_noise = 0.1;
  std::uint64_t synth_seed = 0;
  std::string synth_groups, synth_location = "belt";
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--subjects", synth_subjects, "Number of subjects");
  synth->add_option("--per-class", synth_per_class, "Recordings per class per subject");
  synth->add_option("--duration", synth_duration, "Seconds per recording");
  synth->add_option("--rate", synth_rate, "Sample rate in Hz");
  synth->add_option("--noise", synth_noise, "Noise SD in m/s^2");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--groups", synth_groups, "Comma-separated group tags assigned round-robin");
  synth->add_option("--location", synth_location, "Device location");

  // split
  auto* split = app.add_subcommand("split", "Write subject-level fold assignments");
  CommonFlags split_flags;
  split_flags.attach(*split);
  std::string split_out;
  split->add_option("--out", split_out, "Folds CSV to write")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train every fold, writing checkpoints and reports");
  CommonFlags train_flags;
  train_flags.attach(*train_cmd);
  std::string train_folds, train_out;
  train_cmd->add_option("--folds-file", train_folds, "Use fold assignments from this CSV");
  train_cmd->add_option("--out", train_out, "Output directory");

  // predict
  auto* predict = app.add_subcommand("predict", "Checkpoint to segment predictions CSV");
  CommonFlags predict_flags;
  predict_flags.attach(*predict);
  std::string predict_ckpt, predict_out;
  predict->add_option("--checkpoint", predict_ckpt, "Model checkpoint");
  predict->add_option("--out", predict_out, "Predictions CSV")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Metrics, confusion matrices and breakdowns");
  CommonFlags eval_flags;
  eval_flags.attach(*evaluate);
  std::string eval_ckpt, eval_preds, eval_out;
  bool eval_gait = false, eval_raw = false;
  std::string eval_mode;
  evaluate->add_option("--checkpoint", eval_ckpt, "Model checkpoint (predicts in-process)");
  evaluate->add_option("--predictions", eval_preds, "Predictions CSV from `predict`");
  evaluate->add_option("--out", eval_out, "Directory for metric CSVs")->required();
  evaluate->add_flag("--gait", eval_gait, "Print the merged gait / non-gait view");
  evaluate->add_flag("--raw", eval_raw, "Score unfiltered labels");
  evaluate->add_option("--metric-mode", eval_mode, "pooled or per-subject");

  // bouts
  auto* bouts = app.add_subcommand("bouts", "Filtered predictions to bouts and per-subject means");
  CommonFlags bout_flags;
  bout_flags.attach(*bouts);
  std::string bout_preds, bout_ckpt, bout_out;
  std::optional<double> bout_min;
  bouts->add_option("--predictions", bout_preds, "Predictions CSV from `predict`");
  bouts->add_option("--checkpoint", bout_ckpt, "Model checkpoint (predicts in-process)");
  bouts->add_option("--out", bout_out, "Output directory")->required();
  bouts->add_option("--min-bout-seconds", bout_min, "Drop bouts shorter than this");

  // stats
  auto* stats = app.add_subcommand("stats", "Mann-Whitney U comparisons of per-subject bout means");
  std::string stats_summary, stats_out, stats_method = "auto";
  std::vector<std::string> stats_pairs;
  stats->add_option("--summary", stats_summary, "Subject summary CSV from `bouts`")->required();
  stats->add_option("--pair", stats_pairs, "Group pair TAG_A:TAG_B (repeatable)")->required();
  stats->add_option("--out", stats_out, "Results CSV");
  stats->add_option("--method", stats_method, "auto, exact or normal");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      return run_synth(synth_out, synth_subjects, synth_per_class, synth_duration, synth_rate, synth_noise,
                       synth_seed, synth_groups, synth_location, out);
    }

    if (split->parsed()) {
      const auto cfg = split_flags.resolve();
      require_file(cfg.manifest, "manifest");
      const auto manifest = load_manifest(cfg.manifest);
      const auto plan = plan_folds(cfg, manifest.subject_ids());
      csv::write_file(split_out, serialize_folds(plan));
      out << "wrote " << plan.folds.size() << " fold(s) to " << split_out << '\n';
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      auto cfg = train_flags.resolve();
      if (!train_out.empty()) cfg.output_dir = train_out;
      require_file(cfg.manifest, "manifest");
      std::optional<FoldPlan> plan;
      if (!train_folds.empty()) {
        require_file(train_folds, "folds file");
        plan = parse_folds_text(csv::read_file(train_folds));
      }
      csv::write_file(cfg.output_dir / "run.cfg", serialize_config(cfg));
      const auto outcomes = run_training(cfg, train_flags.jobs, plan);
      for (const auto& o : outcomes) {
        out << "fold " << o.fold << ": " << o.segments << " evaluation segments, accuracy "
            << csv::format(o.accuracy) << " -> " << o.dir.string() << '\n';
      }
      return kExitOk;
    }

    if (predict->parsed()) {
      const auto cfg = predict_flags.resolve();
      require_file(cfg.manifest, "manifest");
      const auto manifest = load_manifest(cfg.manifest);
      const auto recs = load_recordings(manifest, cfg.input_rate_hz);
      const auto preds = predictions_for(cfg, "", predict_ckpt, recs);
      csv::write_file(predict_out, predictions_csv(preds));
      out << "wrote predictions for " << preds.size() << " recording(s) to " << predict_out << '\n';
      return kExitOk;
    }

    if (evaluate->parsed()) {
      auto cfg = eval_flags.resolve();
      if (!eval_mode.empty()) cfg.set("metric_mode", eval_mode);
      if (eval_raw) cfg.score_filtered = false;
      if (eval_preds.empty()) {
        const std::filesystem::path ckpt = eval_ckpt.empty() ? cfg.checkpoint_path() : std::filesystem::path(eval_ckpt);
        require_file(ckpt, "checkpoint");
      }
      require_file(cfg.manifest, "manifest");
      const auto manifest = load_manifest(cfg.manifest);
      const auto recs = load_recordings(manifest, cfg.input_rate_hz);
      const auto preds = predictions_for(cfg, eval_preds, eval_ckpt, recs);
      const auto segs = scored_segments(preds, &manifest, cfg.score_filtered);
      const auto ev = evaluate_segments(segs);
      write_evaluation(ev, eval_out, cfg.metric_mode);
      out << "activity accuracy " << csv::format(ev.activity.accuracy) << " over " << segs.size() << " segments\n";
      out << render_confusion(ev.activity_cm);
      if (eval_gait) {
        out << "gait accuracy " << csv::format(ev.gait.accuracy) << '\n' << render_confusion(ev.gait_cm);
      }
      return kExitOk;
    }

    if (bouts->parsed()) {
      auto cfg = bout_flags.resolve();
      if (bout_min) cfg.min_bout_seconds = *bout_min;
      require_file(cfg.manifest, "manifest");
      const auto manifest = load_manifest(cfg.manifest);
      std::vector<RecordingPrediction> preds;
      if (!bout_preds.empty()) {
        require_file(bout_preds, "predictions file");
        preds = parse_predictions_csv(csv::read_file(bout_preds));
      } else {
        const auto recs = load_recordings(manifest, cfg.input_rate_hz);
        preds = predictions_for(cfg, "", bout_ckpt, recs);
      }
      const auto rb = bouts_from_predictions(preds, cfg.min_bout_seconds);
      const auto summary = summarize_bouts(rb, manifest);
      const std::filesystem::path dir(bout_out);
      csv::write_file(dir / "bouts.csv", bouts_csv(rb));
      csv::write_file(dir / "subject_means.csv", subject_summary_csv(summary));
      out << "wrote bouts for " << rb.size() << " recording(s) and " << summary.size() << " subject(s)\n";
      return kExitOk;
    }

    if (stats->parsed()) {
      const auto method = parse_utest_method(stats_method);
      if (!method) {
        err << "unknown --method '" << stats_method << "'\n";
        return kExitUsage;
      }
      require_file(stats_summary, "subject summary");
      const auto rows = parse_subject_summary_csv(csv::read_file(stats_summary));
      std::map<std::string, double> means;
      std::map<std::string, std::string> tags;
      for (const auto& r : rows) {
        tags[r.subject_id] = r.group_tag;
        if (r.mean_gait_duration) means[r.subject_id] = *r.mean_gait_duration;
      }
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto& p : stats_pairs) {
        const auto colon = p.find(':');
        if (colon == std::string::npos) {
          err << "--pair expects TAG_A:TAG_B, got '" << p << "'\n";
          return kExitUsage;
        }
        pairs.emplace_back(p.substr(0, colon), p.substr(colon + 1));
      }
      const auto results = compare_bout_groups(means, tags, pairs, *method);
      const std::string text = comparisons_csv(results);
      if (stats_out.empty()) out << text;
      else csv::write_file(stats_out, text);
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "har: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "har: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int dispatch(int argc, const char* const* argv) { return dispatch(argc, argv, std::cout, std::cerr); }

}  // namespace har::cli
