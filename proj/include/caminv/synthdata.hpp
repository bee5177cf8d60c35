#pragma once

// Procedural faces, presentation attacks and camera fingerprints with known
// ground truth. Images are [1, 3, S, S] tensors in [0, 1].

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "caminv/io.hpp"
#include "caminv/tensor.hpp"

namespace caminv::synth {

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

enum class Pai { None, Print, Replay };
std::string pai_name(Pai p);
Pai parse_pai(const std::string& name);

struct CameraProfile {
  int camera_id = 0;
  std::uint64_t fingerprint_seed = 0;
  double noise_amplitude = 0.02;
  std::array<double, 3> response_gamma{1.0, 1.0, 1.0};
  // Periodic fixed-pattern component (DFT bins over the image width).
  int pattern_fx = 0;
  int pattern_fy = 0;
  // Block-DCT quantization strength; 0 disables it.
  double quality_degradation = 0.0;

  // Deterministic profile for a camera id: gamma from the seed, pattern
  // orientation from a fixed per-id table so that cameras stay distinct.
  static CameraProfile standard(int camera_id, std::uint64_t master_seed,
                                double noise_amplitude = 0.02);
  void validate() const;
};

struct SpoofProfile {
  Pai pai = Pai::Replay;
  std::uint64_t seed = 0;
  // print
  double grain_amplitude = 0.03;
  double paper_amplitude = 0.015;
  int paper_frequency = 4;
  double blur_sigma = 0.7;
  // replay
  int moire_fx = 9;
  int moire_fy = 5;
  double moire_amplitude = 0.05;
  double moire_phase = 0.0;

  static SpoofProfile sample(Pai pai, std::uint64_t seed, double grain_amplitude = 0.03,
                             double moire_amplitude = 0.05);
};

Tensor render_base_scene(std::uint64_t scene_seed, int size = 64);
Tensor apply_spoof(const Tensor& image, const SpoofProfile& spoof);
// [H, W] field F with the periodic and per-pixel components (per channel).
std::vector<float> fingerprint_field(const CameraProfile& cam, int channel, int h, int w);
Tensor apply_camera(const Tensor& image, const CameraProfile& cam);
Tensor block_dct_quantize(const Tensor& image, double strength);

struct SynthConfig {
  int cameras = 3;
  int scenes_per_camera = 200;
  int image_size = 64;
  std::uint64_t master_seed = 1;
  double noise_amplitude = 0.02;
  double grain_amplitude = 0.03;
  double moire_amplitude = 0.05;
  double quality_degradation = 0.0;
  double train_fraction = 0.6;
  double dev_fraction = 0.2;

  static SynthConfig from(const io::KeyValues& kv);
  static const std::vector<std::string>& keys();
  io::KeyValues to_key_values() const;
  void validate() const;
};

struct SampleRecord {
  std::string relative_path;
  int camera_id = 0;
  int label = 0;  // 1 = live
  std::string pai_type = "none";
  std::string split;
  int scene = 0;  // parsed from the file name
};

std::string split_for_scene(int scene_index, const SynthConfig& cfg);
std::uint64_t scene_seed(const SynthConfig& cfg, int camera, int scene_index);
// Full pipeline for one sample, quantized to 8 bits like the stored PNG.
Tensor render_sample(const SynthConfig& cfg, int camera, int scene_index, Pai pai);

struct Manifest {
  std::filesystem::path root;
  std::vector<SampleRecord> records;

  std::vector<SampleRecord> select(const std::string& split,
                                   const std::vector<int>& cameras = {}) const;
};

std::string manifest_header();
std::string manifest_csv(const std::vector<SampleRecord>& records);
Manifest load_manifest(const std::filesystem::path& path);

// Writes images, manifest.csv and synth_config.txt under out_dir.
Manifest generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace caminv::synth
