#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "caminv/inference.hpp"
#include "caminv/io.hpp"
#include "caminv/losses.hpp"
#include "caminv/model.hpp"
#include "caminv/synthdata.hpp"

namespace caminv::train {

struct TrainConfig {
  std::string profile = "desk";  // desk (64 px, narrow) or full (224 px)
  int input_size = 64;
  int batch_size = 32;
  double lr0 = 0.004;
  double decay_factor = 0.2;
  long long decay_start = 20000;
  long long decay_every = 10000;
  long long total_steps = 2000;
  std::uint64_t seed = 1;
  std::vector<int> train_cameras;  // empty = every camera in the manifest
  bool no_eddf_branch1 = false;
  bool no_eddf_branch2 = false;
  bool no_cam_id = false;
  bool augment = true;
  long long checkpoint_every = 0;  // 0 = only at the end
  long long log_every = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  losses::HyperParams hp;

  // Defaults for a profile; the desk schedule keeps the decay breakpoints at
  // the same fractions of the step budget.
  static TrainConfig for_profile(const std::string& profile);
  static TrainConfig from(const io::KeyValues& kv);
  static const std::vector<std::string>& keys();
  io::KeyValues to_key_values() const;
  void validate() const;
  ModelConfig model_config(int num_cameras) const;
};

double lr_schedule(long long step, const TrainConfig& cfg);

// In-memory training images with their labels.
struct Dataset {
  std::vector<Tensor> images;  // each [1, 3, S, S]
  std::vector<int> camera_ids;
  std::vector<int> labels;
  std::vector<std::string> pai_types;
  std::vector<std::string> sample_ids;

  std::size_t size() const { return images.size(); }
};

Dataset load_split(const synth::Manifest& manifest, const std::string& split,
                   const std::vector<int>& cameras = {});

// Indices into the dataset: the first half live, the second half spoof.
std::vector<int> sample_batch(const Dataset& data, int batch_size, std::mt19937_64& rng);

struct AugmentParams {
  bool hflip = false;
  bool vflip = false;
  double angle_deg = 0.0;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

AugmentParams draw_augment(std::mt19937_64& rng);
Tensor apply_augment(const Tensor& image, const AugmentParams& p);
Tensor augment(const Tensor& image, std::mt19937_64& rng);

class Adam {
 public:
  struct Slot {
    std::vector<float> m;
    std::vector<float> v;
  };

  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterList& params, double lr);
  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

 private:
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<std::string, Slot> slots_;
};

struct StepResult {
  losses::LossComponents parts;
  double total = 0.0;
};

// Forward both branches, evaluate the objective and fill parameter gradients
// (gradients are zeroed first). camera_classes index the camera logits.
StepResult compute_gradients(CameraInvariantModel& model, const Tensor& images,
                             const std::vector<int>& camera_classes,
                             const std::vector<int>& labels, const losses::HyperParams& hp);

struct LogRow {
  long long step = 0;
  double lr = 0.0;
  StepResult result;
};

std::string log_header();
std::string format_log_row(const LogRow& row);

struct Checkpoint {
  static constexpr int kVersion = 1;
  TrainConfig config;
  ModelConfig model;
  std::vector<int> cameras;  // camera id of each camera class
  long long step = 0;
  std::vector<std::pair<std::string, Tensor>> weights;
  long long optimizer_steps = 0;
  std::map<std::string, Adam::Slot> optimizer;
  std::optional<inference::CameraCalibration> calibration;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Builds a model from the checkpoint's config and copies its weights in.
CameraInvariantModel restore_model(const Checkpoint& ckpt);

io::KeyValues model_config_to_key_values(const ModelConfig& m);
ModelConfig model_config_from_key_values(const io::KeyValues& kv);

class Trainer {
 public:
  Trainer(const TrainConfig& config, std::vector<int> cameras);

  StepResult step(const Dataset& data);
  // Runs total_steps steps; log rows go to on_log every log_every steps.
  void run(const Dataset& data, const std::function<void(const LogRow&)>& on_log,
           const std::function<void(const Checkpoint&)>& on_checkpoint = {});

  Checkpoint checkpoint() const;
  CameraInvariantModel& model() { return model_; }
  const std::vector<int>& cameras() const { return cameras_; }
  long long steps_done() const { return step_; }

 private:
  TrainConfig config_;
  std::vector<int> cameras_;
  std::map<int, int> camera_class_;
  CameraInvariantModel model_;
  Adam adam_;
  std::mt19937_64 batch_rng_;
  long long step_ = 0;
};

// Camera-probability vectors (spatial mean of softmax over O_cam) for a
// dataset, evaluated in chunks.
std::vector<std::vector<double>> camera_probabilities(const CameraInvariantModel& model,
                                                      const Dataset& data, int chunk = 32);
inference::CameraCalibration calibrate(const CameraInvariantModel& model, const Dataset& train,
                                       double floor = 0.6);
std::vector<inference::Prediction> predict_dataset(const CameraInvariantModel& model,
                                                   const Dataset& data,
                                                   const inference::CameraCalibration* cal,
                                                   const inference::PredictOptions& options,
                                                   int chunk = 32);

}  // namespace caminv::train
