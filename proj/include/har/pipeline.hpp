#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "har/dataio.hpp"
#include "har/eval.hpp"
#include "har/model.hpp"
#include "har/postprocess.hpp"
#include "har/signal.hpp"
#include "har/stats.hpp"
#include "har/train.hpp"

// Glue between the file formats and the numerical modules. Everything the
// command line does goes through here so tests can call it in-process.
namespace har {

enum class MetricMode : std::uint8_t { Pooled, PerSubject };

enum class FoldKind : std::uint8_t { Holdout, LeaveOneOut, LeaveOneOutTrainPair, KFold };

struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "out";
  std::filesystem::path checkpoint;  // empty: <output_dir>/model.ckpt
  std::optional<double> input_rate_hz;
  HarModelConfig model;
  TrainConfig train;
  double window_seconds = 6.0;
  double stride_seconds = 2.0;
  FilterVariant filter = FilterVariant::Majority;
  MetricMode metric_mode = MetricMode::Pooled;
  bool score_filtered = true;
  FoldKind folds = FoldKind::Holdout;
  int kfold_k = 5;
  double validation_fraction = 0.2;
  SplitRatios split;
  std::uint64_t seed = 0;
  double min_bout_seconds = 0.0;
  UTestMethod utest = UTestMethod::Auto;

  // Sets one `key=value` entry. Throws InvalidConfig for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  // The resolved checkpoint path.
  std::filesystem::path checkpoint_path() const;
  // Copies the shared seed and window lengths into the model and training configs.
  void sync();
  // Throws InvalidConfig.
  void validate() const;
};

// Flat `key = value` lines; '#' starts a comment. Relative paths resolve
// against `base_dir`.
PipelineConfig parse_config_text(std::string_view text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const PipelineConfig& cfg);

WindowOptions window_options(const PipelineConfig& cfg, bool keep_unlabeled);

// Resamples to the model rate and cuts windows.
std::vector<Window> prepare_windows(std::span<const Recording> recordings, const WindowOptions& options);

struct RecordingPrediction {
  std::string recording_id;
  std::string subject_id;
  std::string device_location;
  std::vector<SegmentPrediction> raw;
  std::vector<SegmentPrediction> filtered;
  std::vector<std::optional<ActivityLabel>> truth;  // window labels, may be empty
};

std::vector<RecordingPrediction> predict_recordings(ModelParams& params,
                                                    std::span<const Recording> recordings,
                                                    const PipelineConfig& cfg);

inline constexpr std::string_view kPredictionsHeader =
    "recording_id,t_start,t_end,p_walking,p_running,p_stairs,p_standing,p_sitlying,p_sit2stand,label,"
    "label_filtered";

std::string predictions_csv(std::span<const RecordingPrediction> preds);
// Restores recording id, raw and filtered segments. Truth, subject and
// location stay empty.
std::vector<RecordingPrediction> parse_predictions_csv(std::string_view text);

// Fills subject, location and truth from the recordings by recording id and
// segment position. Throws InvalidManifest for unknown recordings or a
// segment count mismatch.
void attach_truth(std::vector<RecordingPrediction>& preds, std::span<const Recording> recordings,
                  const PipelineConfig& cfg);

// Segments with a truth label, scored on the filtered or raw label.
std::vector<ScoredSegment> scored_segments(std::span<const RecordingPrediction> preds,
                                           const Manifest* manifest, bool use_filtered);

struct EvaluationOutputs {
  MetricsReport activity;
  MetricsReport gait;
  ConfusionMatrix activity_cm;
  ConfusionMatrix gait_cm;
  std::vector<BreakdownRow> by_subject;
  std::vector<BreakdownRow> by_subject_gait;
  std::vector<BreakdownRow> by_location;
  std::vector<BreakdownRow> by_activity;
};

EvaluationOutputs evaluate_segments(std::span<const ScoredSegment> segments);
// Writes metrics, confusion and breakdown CSVs into `dir`.
void write_evaluation(const EvaluationOutputs& ev, const std::filesystem::path& dir, MetricMode mode);

struct RecordingBouts {
  std::string recording_id;
  std::vector<Bout> bouts;
};

std::vector<RecordingBouts> bouts_from_predictions(std::span<const RecordingPrediction> preds,
                                                   double min_bout_seconds);
// `recording_id,group,t_start,t_end,duration`
std::string bouts_csv(std::span<const RecordingBouts> bouts);

struct SubjectBoutSummary {
  std::string subject_id;
  std::string group_tag;
  std::size_t gait_bouts = 0;
  std::optional<double> mean_gait_duration;
};

// Per-subject mean gait bout duration over all of a subject's recordings.
std::vector<SubjectBoutSummary> summarize_bouts(std::span<const RecordingBouts> bouts,
                                                const Manifest& manifest);
// `subject_id,group_tag,gait_bouts,mean_duration`, empty mean when undefined.
std::string subject_summary_csv(std::span<const SubjectBoutSummary> rows);
std::vector<SubjectBoutSummary> parse_subject_summary_csv(std::string_view text);

// Windows for the given subjects, labeled recordings only.
std::vector<Window> windows_for(std::span<const Window> all, const std::vector<std::string>& subjects);

struct FoldOutcome {
  std::size_t fold = 0;
  std::vector<std::string> evaluation_subjects;
  std::size_t segments = 0;
  double accuracy = 0.0;
  std::filesystem::path dir;
};

// Trains every fold of the configured plan, writing checkpoint, training
// report, predictions and metrics per fold directory. Folds run on up to
// `jobs` threads; results do not depend on `jobs`.
std::vector<FoldOutcome> run_training(const PipelineConfig& cfg, int jobs,
                                      const std::optional<FoldPlan>& plan = std::nullopt);

FoldPlan plan_folds(const PipelineConfig& cfg, const std::vector<std::string>& subjects);

}  // namespace har
