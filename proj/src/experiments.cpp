#include "caminv/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace caminv::exp {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) { return io::format_double(v); }

double pick(const inference::Prediction& p, Score which) {
  switch (which) {
    case Score::Fused:
      return p.p_fused;
    case Score::Spf:
      return p.p_spf;
    case Score::Aug:
      return p.p_aug;
  }
  return p.p_fused;
}

train::Dataset subset(const train::Dataset& d, int camera) {
  train::Dataset out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.camera_ids[i] != camera) continue;
    out.images.push_back(d.images[i]);
    out.camera_ids.push_back(d.camera_ids[i]);
    out.labels.push_back(d.labels[i]);
    out.pai_types.push_back(d.pai_types[i]);
    out.sample_ids.push_back(d.sample_ids[i]);
  }
  return out;
}

const inference::CameraCalibration* calibration_of(const train::Checkpoint& ckpt) {
  return ckpt.calibration ? &*ckpt.calibration : nullptr;
}

// Predictions with and without unknown-camera mode; the second is empty when
// the checkpoint has no calibration.
struct Scored {
  train::Dataset data;
  std::vector<inference::Prediction> plain;
  std::vector<inference::Prediction> unknown;
};

Scored score(const CameraInvariantModel& model, const train::Checkpoint& ckpt, train::Dataset data,
             const inference::FusionWeights& weights) {
  Scored s;
  inference::PredictOptions off{weights, false};
  s.plain = train::predict_dataset(model, data, calibration_of(ckpt), off);
  if (ckpt.calibration && model.has_camera_branch()) {
    inference::PredictOptions on{weights, true};
    s.unknown = train::predict_dataset(model, data, calibration_of(ckpt), on);
  }
  s.data = std::move(data);
  return s;
}

double held_out_hter(const Scored& dev, const Scored& test, bool unknown_mode, Score which) {
  const auto& dp = unknown_mode ? dev.unknown : dev.plain;
  const auto& tp = unknown_mode ? test.unknown : test.plain;
  if (dp.empty() || tp.empty()) return kNaN;
  const auto d = score_records(dev.data, dp, which);
  const auto t = score_records(test.data, tp, which);
  return metrics::evaluate(d, t).hter;
}

double mean_unknown(const std::vector<inference::Prediction>& preds) {
  if (preds.empty() || preds.front().normalized.empty()) return kNaN;
  double s = 0.0;
  for (const auto& p : preds) s += p.normalized.back();
  return s / static_cast<double>(preds.size());
}

std::vector<std::pair<int, double>> per_camera_eer(const CameraInvariantModel& model,
                                                   const train::Checkpoint& ckpt,
                                                   const train::Dataset& test,
                                                   const inference::PredictOptions& options,
                                                   Score which) {
  std::vector<std::pair<int, double>> out;
  for (int cam : ckpt.cameras) {
    const auto part = subset(test, cam);
    if (part.size() == 0) continue;
    const auto preds = train::predict_dataset(model, part, calibration_of(ckpt), options);
    out.emplace_back(cam, metrics::eer(score_records(part, preds, which)).eer);
  }
  return out;
}

std::string pct(double v) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

}  // namespace

std::vector<metrics::ScoreRecord> score_records(const train::Dataset& data,
                                                const std::vector<inference::Prediction>& preds,
                                                Score which) {
  if (preds.size() != data.size()) throw DimensionError("one prediction per sample expected");
  std::vector<metrics::ScoreRecord> out;
  out.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    out.push_back({data.sample_ids[i], pick(preds[i], which), data.labels[i], data.pai_types[i]});
  }
  return out;
}

std::string score_csv_header() { return "sample_id,p_spf,p_aug,p_fused,label,pai_type,camera_pred,p_unknown"; }

std::string scores_csv(const train::Dataset& data, const std::vector<inference::Prediction>& preds) {
  if (preds.size() != data.size()) throw DimensionError("one prediction per sample expected");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return data.sample_ids[a] < data.sample_ids[b]; });
  std::string out = score_csv_header() + "\n";
  for (std::size_t i : order) {
    const auto& p = preds[i];
    out += data.sample_ids[i] + "," + num(p.p_spf) + "," + num(p.p_aug) + "," + num(p.p_fused) + "," +
           std::to_string(data.labels[i]) + "," + data.pai_types[i] + "," + std::to_string(p.camera_pred) +
           "," + num(p.p_unknown) + "\n";
  }
  return out;
}

void write_calibration(const std::filesystem::path& path, const inference::CameraCalibration& cal) {
  cal.validate();
  io::KeyValues kv;
  kv.set("tau", num(cal.tau));
  kv.set("floor", num(cal.floor));
  kv.set("n_cameras", std::to_string(cal.n_cameras));
  io::write_text(path, kv.str());
}

inference::CameraCalibration read_calibration(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("calibration file not found: " + path.string());
  const auto kv = io::KeyValues::load(path);
  kv.require_known({"tau", "floor", "n_cameras"});
  if (!kv.has("tau") || !kv.has("n_cameras")) {
    throw ParseError("calibration file " + path.string() + " needs tau and n_cameras");
  }
  inference::CameraCalibration cal;
  cal.tau = kv.get_double("tau", 0.0);
  cal.floor = kv.get_double("floor", 0.6);
  cal.n_cameras = static_cast<int>(kv.get_int("n_cameras", 0));
  cal.validate();
  return cal;
}

std::vector<int> training_cameras(const train::TrainConfig& cfg, const synth::Manifest& manifest) {
  std::set<int> present;
  for (const auto& r : manifest.records) present.insert(r.camera_id);
  if (cfg.train_cameras.empty()) return {present.begin(), present.end()};
  for (int c : cfg.train_cameras) {
    if (!present.count(c)) throw DataError("training camera " + std::to_string(c) + " is not in the manifest");
  }
  return cfg.train_cameras;
}

std::vector<int> held_out_cameras(const std::vector<int>& trained, const synth::Manifest& manifest) {
  std::set<int> present;
  for (const auto& r : manifest.records) present.insert(r.camera_id);
  for (int c : trained) present.erase(c);
  return {present.begin(), present.end()};
}

train::Checkpoint train_and_calibrate(const train::TrainConfig& cfg, const synth::Manifest& manifest,
                                      const std::function<void(const train::LogRow&)>& on_log,
                                      std::string* calibration_error) {
  const auto cameras = training_cameras(cfg, manifest);
  const auto data = train::load_split(manifest, "train", cameras);
  train::Trainer trainer(cfg, cameras);
  trainer.run(data, on_log);
  auto ckpt = trainer.checkpoint();
  if (trainer.model().has_camera_branch()) {
    try {
      ckpt.calibration = train::calibrate(trainer.model(), data);
    } catch (const CalibrationError& e) {
      if (!calibration_error) throw;
      *calibration_error = e.what();
    }
  }
  return ckpt;
}

CrossEvalResult cross_evaluate(const train::Checkpoint& ckpt, const synth::Manifest& manifest,
                               const inference::FusionWeights& weights) {
  const auto held = held_out_cameras(ckpt.cameras, manifest);
  if (held.empty()) throw DataError("cross-camera evaluation needs a camera outside the training set");
  const auto model = train::restore_model(ckpt);
  const auto dev = score(model, ckpt, train::load_split(manifest, "dev", ckpt.cameras), weights);
  const auto test = score(model, ckpt, train::load_split(manifest, "test", held), weights);
  CrossEvalResult r;
  r.camera_branch = model.has_camera_branch();
  r.hter_fused = held_out_hter(dev, test, false, Score::Fused);
  r.hter_fused_unknown = held_out_hter(dev, test, true, Score::Fused);
  r.hter_spf = held_out_hter(dev, test, false, Score::Spf);
  r.hter_aug = held_out_hter(dev, test, false, Score::Aug);
  r.mean_unknown_held_out = mean_unknown(test.plain);
  if (ckpt.calibration) {
    const auto known = score(model, ckpt, train::load_split(manifest, "test", ckpt.cameras), weights);
    r.mean_unknown_known = mean_unknown(known.plain);
  } else {
    r.mean_unknown_known = kNaN;
  }
  return r;
}

IntraEvalResult intra_evaluate(const train::Checkpoint& ckpt, const synth::Manifest& manifest,
                               const inference::PredictOptions& options) {
  const auto model = train::restore_model(ckpt);
  const auto dev = train::load_split(manifest, "dev", ckpt.cameras);
  const auto test = train::load_split(manifest, "test", ckpt.cameras);
  const auto dp = train::predict_dataset(model, dev, calibration_of(ckpt), options);
  const auto tp = train::predict_dataset(model, test, calibration_of(ckpt), options);
  IntraEvalResult r;
  r.fused = metrics::evaluate(score_records(dev, dp, Score::Fused), score_records(test, tp, Score::Fused));
  r.eer_per_camera = per_camera_eer(model, ckpt, test, options, Score::Fused);
  r.eer_spf = metrics::eer(score_records(test, tp, Score::Spf)).eer;
  r.eer_aug = metrics::eer(score_records(test, tp, Score::Aug)).eer;
  return r;
}

PixelAccuracy camera_pixel_accuracy(const CameraInvariantModel& model, const train::Dataset& data,
                                    const std::vector<int>& cameras, int chunk) {
  if (!model.has_camera_branch()) throw ConfigError("model has no camera sub-network");
  std::map<int, int> cls;
  for (std::size_t i = 0; i < cameras.size(); ++i) cls[cameras[i]] = static_cast<int>(i);
  long long hits_mix = 0, hits_spf = 0, hits_cam = 0, total = 0;
  auto argmax = [](const Tensor& o, int n, int y, int x) {
    int best = 0;
    for (int k = 1; k < o.c(); ++k)
      if (o.at(n, k, y, x) > o.at(n, best, y, x)) best = k;
    return best;
  };
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    const auto out = model.forward_invariant(stack(std::span(data.images).subspan(start, end - start)));
    for (int n = 0; n < out.o_mix.n(); ++n) {
      const auto it = cls.find(data.camera_ids[start + n]);
      if (it == cls.end()) throw DataError("sample " + data.sample_ids[start + n] + " is from an untrained camera");
      for (int y = 0; y < out.o_mix.h(); ++y)
        for (int x = 0; x < out.o_mix.w(); ++x) {
          hits_mix += argmax(out.o_mix, n, y, x) == it->second;
          hits_spf += argmax(out.o_spf, n, y, x) == it->second;
          hits_cam += argmax(out.o_cam, n, y, x) == it->second;
          ++total;
        }
    }
  }
  const double t = static_cast<double>(total);
  return {hits_mix / t, hits_spf / t, hits_cam / t};
}

std::vector<AblationRow> run_ablation(const train::TrainConfig& base, const synth::Manifest& manifest,
                                      const std::function<void(const std::string&)>& progress) {
  struct Variant {
    std::string name;
    bool no_eddf1, no_eddf2, no_cam;
  };
  const std::vector<Variant> variants{{"full", false, false, false},
                                      {"no_eddf_branch1", true, false, false},
                                      {"no_eddf_branch2", false, true, false},
                                      {"no_cam_id", false, false, true}};
  std::map<std::string, train::Checkpoint> ckpts;
  for (const auto& v : variants) {
    if (progress) progress("training " + v.name);
    auto cfg = base;
    cfg.no_eddf_branch1 = v.no_eddf1;
    cfg.no_eddf_branch2 = v.no_eddf2;
    cfg.no_cam_id = v.no_cam;
    std::string calibration_error;
    ckpts.emplace(v.name, train_and_calibrate(cfg, manifest, {}, &calibration_error));
    if (progress && !calibration_error.empty()) progress("calibration failed: " + calibration_error);
  }
  const bool cross = !held_out_cameras(ckpts.at("full").cameras, manifest).empty();

  auto row = [&](const std::string& method, const std::string& variant, Score which, bool unknown_mode) {
    const auto& ckpt = ckpts.at(variant);
    const auto model = train::restore_model(ckpt);
    const auto test = train::load_split(manifest, "test", ckpt.cameras);
    AblationRow r;
    r.method = method;
    r.eer_per_camera = per_camera_eer(model, ckpt, test, inference::PredictOptions{}, which);
    double s = 0.0;
    for (const auto& [cam, e] : r.eer_per_camera) s += e;
    r.eer_avg = r.eer_per_camera.empty() ? kNaN : s / static_cast<double>(r.eer_per_camera.size());
    r.cross_hter = kNaN;
    if (cross) {
      const auto c = cross_evaluate(ckpt, manifest);
      r.cross_hter = which == Score::Spf   ? c.hter_spf
                     : which == Score::Aug ? c.hter_aug
                     : unknown_mode        ? c.hter_fused_unknown
                                           : c.hter_fused;
    }
    return r;
  };
  return {row("1st branch", "full", Score::Spf, false),
          row("1st branch w/o EDDF", "no_eddf_branch1", Score::Spf, false),
          row("2nd branch", "full", Score::Aug, false),
          row("2nd branch w/o EDDF", "no_eddf_branch2", Score::Aug, false),
          row("Fusion w/o CamID", "no_cam_id", Score::Fused, false),
          row("Fusion", "full", Score::Fused, true)};
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::string out = "method,intra_eer_per_camera_pct,intra_eer_avg_pct,cross_hter_pct\n";
  for (const auto& r : rows) {
    std::string cams;
    for (const auto& [cam, e] : r.eer_per_camera) cams += (cams.empty() ? "" : " ") + ("cam" + std::to_string(cam) + "=" + pct(e));
    out += r.method + "," + cams + "," + pct(r.eer_avg) + "," + pct(r.cross_hter) + "\n";
  }
  return out;
}

}  // namespace caminv::exp
