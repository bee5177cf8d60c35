#pragma once
// Experiment protocols shared by the command-line tool and the acceptance
// runner: training on a camera subset, score export, intra and cross-camera
// evaluation, and the ablation grid.
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "caminv/inference.hpp"
#include "caminv/metrics.hpp"
#include "caminv/synthdata.hpp"
#include "caminv/trainer.hpp"

namespace caminv::exp {

enum class Score { Fused, Spf, Aug };

std::vector<metrics::ScoreRecord> score_records(const train::Dataset& data,
                                                const std::vector<inference::Prediction>& preds,
                                                Score which);

std::string score_csv_header();
// One row per sample, ordered by sample_id.
std::string scores_csv(const train::Dataset& data, const std::vector<inference::Prediction>& preds);

void write_calibration(const std::filesystem::path& path, const inference::CameraCalibration& cal);
inference::CameraCalibration read_calibration(const std::filesystem::path& path);

// Cameras used for training: the configured subset, or every camera in the manifest.
std::vector<int> training_cameras(const train::TrainConfig& cfg, const synth::Manifest& manifest);
std::vector<int> held_out_cameras(const std::vector<int>& trained, const synth::Manifest& manifest);

// Trains on the train split of the training cameras and attaches a tau
// calibration when the model has a camera sub-network. A failed calibration
// leaves the checkpoint uncalibrated and its message in calibration_error.
train::Checkpoint train_and_calibrate(const train::TrainConfig& cfg, const synth::Manifest& manifest,
                                      const std::function<void(const train::LogRow&)>& on_log = {},
                                      std::string* calibration_error = nullptr);

struct CrossEvalResult {
  double hter_fused = 0.0;          // unknown-camera mode off
  double hter_fused_unknown = 0.0;  // unknown-camera mode on; NaN without a calibration
  double hter_spf = 0.0;
  double hter_aug = 0.0;
  double mean_unknown_held_out = 0.0;  // mean normalized p(N+1); NaN without a calibration
  double mean_unknown_known = 0.0;
  bool camera_branch = false;
};

// Threshold from the dev split of the training cameras; HTER on the test
// split of the held-out cameras.
CrossEvalResult cross_evaluate(const train::Checkpoint& ckpt, const synth::Manifest& manifest,
                               const inference::FusionWeights& weights = {});

struct IntraEvalResult {
  metrics::MetricsReport fused;
  std::vector<std::pair<int, double>> eer_per_camera;  // fused-score EER on each camera's test split
  double eer_spf = 0.0;
  double eer_aug = 0.0;
};

IntraEvalResult intra_evaluate(const train::Checkpoint& ckpt, const synth::Manifest& manifest,
                               const inference::PredictOptions& options);

struct PixelAccuracy {
  double mix = 0.0;
  double spf = 0.0;
  double cam = 0.0;
};

// Per-pixel argmax camera accuracy of O_mix, O_spf and O_cam; cameras maps
// class index to camera id.
PixelAccuracy camera_pixel_accuracy(const CameraInvariantModel& model, const train::Dataset& data,
                                    const std::vector<int>& cameras, int chunk = 32);

struct AblationRow {
  std::string method;
  std::vector<std::pair<int, double>> eer_per_camera;
  double eer_avg = 0.0;
  double cross_hter = 0.0;
};

// Table rows: 1st branch, 1st branch w/o EDDF, 2nd branch, 2nd branch w/o
// EDDF, Fusion w/o CamID, Fusion.
std::vector<AblationRow> run_ablation(const train::TrainConfig& base, const synth::Manifest& manifest,
                                      const std::function<void(const std::string&)>& progress = {});
std::string format_ablation(const std::vector<AblationRow>& rows);

}  // namespace caminv::exp
