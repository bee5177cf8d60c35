// caminv: dataset generation, training, calibration and evaluation.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "caminv/errors.hpp"
#include "caminv/experiments.hpp"

namespace fs = std::filesystem;
using namespace caminv;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;

struct Common {
  std::string config;
  std::optional<long long> seed;
  std::string out_dir;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Config file first, then --key=value overrides in order (last writer wins).
io::KeyValues effective(const Common& c, const std::string& seed_key) {
  io::KeyValues kv = c.config.empty() ? io::KeyValues{} : io::KeyValues::load(c.config);
  if (c.seed) kv.set(seed_key, std::to_string(*c.seed));
  for (const auto& [k, v] : c.overrides) kv.set(k, v);
  return kv;
}

void echo_config(const fs::path& out_dir, const io::KeyValues& kv) {
  fs::create_directories(out_dir);
  io::write_text(out_dir / "effective_config.txt", kv.str());
  std::cout << "# effective config\n" << kv.str();
}

synth::Manifest open_manifest(const std::string& data_dir) {
  if (data_dir.empty()) throw ConfigError("--data is required");
  const fs::path p = fs::path(data_dir) / "manifest.csv";
  if (!fs::exists(p)) throw MissingArtifact("manifest not found: " + p.string());
  return synth::load_manifest(p);
}

train::Checkpoint open_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(path)) throw MissingArtifact("checkpoint not found: " + path);
  return train::load_checkpoint(path);
}

// Fusion weights from the keys w_inv, lambda4 and unknown_w_aug.
inference::FusionWeights fusion_weights(const io::KeyValues& kv) {
  inference::FusionWeights w;
  w.w_inv = kv.get_double("w_inv", w.w_inv);
  w.w_aug = kv.get_double("lambda4", w.w_aug);
  w.unknown_mode_w_aug = kv.get_double("unknown_w_aug", w.unknown_mode_w_aug);
  w.validate();
  return w;
}

void add_fusion_keys(io::KeyValues& kv, const inference::FusionWeights& w) {
  kv.set("w_inv", std::to_string(w.w_inv));
  kv.set("lambda4", std::to_string(w.w_aug));
  kv.set("unknown_w_aug", std::to_string(w.unknown_mode_w_aug));
}

std::string fmt(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string sha_of(const fs::path& p) { return io::sha256_file(p); }

int cmd_gen_data(const Common& c) {
  auto kv = effective(c, "master_seed");
  const auto cfg = synth::SynthConfig::from(kv);
  const fs::path out = c.out_dir.empty() ? "data" : c.out_dir;
  std::cout << "# effective config\n" << cfg.to_key_values().str();
  const auto m = synth::generate_dataset(cfg, out);
  std::cout << "rows " << m.records.size() << "\n";
  std::cout << "manifest_sha256 " << sha_of(out / "manifest.csv") << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& data_dir) {
  auto kv = effective(c, "seed");
  const auto cfg = train::TrainConfig::from(kv);
  const auto manifest = open_manifest(data_dir);
  const fs::path out = c.out_dir.empty() ? "run" : c.out_dir;
  echo_config(out, cfg.to_key_values());
  const auto cameras = exp::training_cameras(cfg, manifest);
  const auto data = train::load_split(manifest, "train", cameras);
  train::Trainer trainer(cfg, cameras);
  std::string log = train::log_header() + "\n";
  trainer.run(
      data,
      [&](const train::LogRow& r) {
        const auto line = train::format_log_row(r);
        log += line + "\n";
        std::cout << line << "\n" << std::flush;
      },
      [&](const train::Checkpoint& ck) {
        train::save_checkpoint(out / ("checkpoint_" + std::to_string(ck.step) + ".bin"), ck);
      });
  io::write_text(out / "train_log.csv", log);
  train::save_checkpoint(out / "checkpoint.bin", trainer.checkpoint());
  std::cout << "checkpoint " << (out / "checkpoint.bin").string() << " sha256 " << sha_of(out / "checkpoint.bin")
            << "\n";
  return 0;
}

int cmd_calibrate(const Common& c, const std::string& data_dir, const std::string& ckpt_path) {
  auto kv = effective(c, "seed");
  kv.require_known({"seed", "floor"});
  const double floor = kv.get_double("floor", 0.6);
  const auto ckpt = open_checkpoint(ckpt_path);
  const auto manifest = open_manifest(data_dir);
  const fs::path out = c.out_dir.empty() ? fs::path(ckpt_path).parent_path() : fs::path(c.out_dir);
  echo_config(out, kv);
  const auto model = train::restore_model(ckpt);
  const auto cal = train::calibrate(model, train::load_split(manifest, "train", ckpt.cameras), floor);
  exp::write_calibration(out / "calibration.txt", cal);
  std::cout << "tau " << cal.tau << "\nfloor " << cal.floor << "\nn_cameras " << cal.n_cameras << "\n";
  return 0;
}

std::optional<inference::CameraCalibration> calibration_for(const std::string& path,
                                                            const train::Checkpoint& ckpt) {
  if (!path.empty()) return exp::read_calibration(path);
  return ckpt.calibration;
}

std::vector<inference::Prediction> predict_split(const train::Checkpoint& ckpt, const train::Dataset& data,
                                                 const std::optional<inference::CameraCalibration>& cal,
                                                 const inference::PredictOptions& options) {
  const auto model = train::restore_model(ckpt);
  return train::predict_dataset(model, data, cal ? &*cal : nullptr, options);
}

int cmd_eval(const Common& c, const std::string& data_dir, const std::string& ckpt_path,
             const std::string& cal_path, bool unknown_mode) {
  auto kv = effective(c, "seed");
  kv.require_known({"seed", "w_inv", "lambda4", "unknown_w_aug"});
  const auto ckpt = open_checkpoint(ckpt_path);
  const auto manifest = open_manifest(data_dir);
  const auto cal = calibration_for(cal_path, ckpt);
  if (unknown_mode && !cal) throw MissingArtifact("unknown-camera mode needs a calibration file (--calibration)");
  const inference::PredictOptions options{fusion_weights(kv), unknown_mode};
  const fs::path out = c.out_dir.empty() ? "eval" : c.out_dir;
  add_fusion_keys(kv, options.weights);
  kv.set("unknown_mode", unknown_mode ? "true" : "false");
  echo_config(out, kv);

  const auto dev = train::load_split(manifest, "dev", ckpt.cameras);
  const auto test = train::load_split(manifest, "test", ckpt.cameras);
  const auto dp = predict_split(ckpt, dev, cal, options);
  const auto tp = predict_split(ckpt, test, cal, options);
  io::write_text(out / "scores_dev.csv", exp::scores_csv(dev, dp));
  io::write_text(out / "scores_test.csv", exp::scores_csv(test, tp));
  const auto report = metrics::evaluate(exp::score_records(dev, dp, exp::Score::Fused),
                                        exp::score_records(test, tp, exp::Score::Fused));
  io::write_text(out / "report.txt", metrics::format_report(report));
  io::write_text(out / "report.csv", metrics::report_csv(report));
  std::cout << metrics::format_report(report);
  return 0;
}

int cmd_export(const Common& c, const std::string& data_dir, const std::string& ckpt_path,
               const std::string& cal_path, const std::string& split, bool unknown_mode) {
  auto kv = effective(c, "seed");
  kv.require_known({"seed", "w_inv", "lambda4", "unknown_w_aug"});
  const auto ckpt = open_checkpoint(ckpt_path);
  const auto manifest = open_manifest(data_dir);
  std::set<std::string> splits;
  for (const auto& r : manifest.records) splits.insert(r.split);
  if (!splits.count(split)) throw ConfigError("split '" + split + "' is not in the manifest");
  const auto cal = calibration_for(cal_path, ckpt);
  if (unknown_mode && !cal) throw MissingArtifact("unknown-camera mode needs a calibration file (--calibration)");
  const inference::PredictOptions options{fusion_weights(kv), unknown_mode};
  const fs::path out = c.out_dir.empty() ? "scores" : c.out_dir;
  add_fusion_keys(kv, options.weights);
  kv.set("unknown_mode", unknown_mode ? "true" : "false");
  echo_config(out, kv);
  const auto data = train::load_split(manifest, split);
  const auto preds = predict_split(ckpt, data, cal, options);
  const auto path = out / ("scores_" + split + ".csv");
  io::write_text(path, exp::scores_csv(data, preds));
  std::cout << "rows " << preds.size() << "\nscores " << path.string() << " sha256 " << sha_of(path) << "\n";
  return 0;
}

int cmd_cross_eval(const Common& c, const std::string& data_dir, const std::string& ckpt_path,
                   const std::string& cal_path) {
  auto kv = effective(c, "seed");
  const auto manifest = open_manifest(data_dir);
  const fs::path out = c.out_dir.empty() ? "cross_eval" : c.out_dir;
  train::Checkpoint ckpt;
  if (!ckpt_path.empty()) {
    ckpt = open_checkpoint(ckpt_path);
    if (!cal_path.empty()) ckpt.calibration = exp::read_calibration(cal_path);
    echo_config(out, ckpt.config.to_key_values());
  } else {
    const auto cfg = train::TrainConfig::from(kv);
    if (cfg.train_cameras.empty()) throw ConfigError("cross-eval needs train_cameras to leave a camera out");
    echo_config(out, cfg.to_key_values());
    std::string cal_error;
    ckpt = exp::train_and_calibrate(
        cfg, manifest, [](const train::LogRow& r) { std::cout << train::format_log_row(r) << "\n" << std::flush; },
        &cal_error);
    if (!cal_error.empty()) std::cout << "calibration failed: " << cal_error << "\n";
    train::save_checkpoint(out / "checkpoint.bin", ckpt);
  }
  const auto r = exp::cross_evaluate(ckpt, manifest);
  std::string csv =
      "hter_fused,hter_fused_unknown_mode,hter_invariant_only,hter_augmentation_only,"
      "mean_p_unknown_held_out,mean_p_unknown_known\n";
  csv += fmt(r.hter_fused) + "," + fmt(r.hter_fused_unknown) + "," + fmt(r.hter_spf) + "," + fmt(r.hter_aug) +
         "," + fmt(r.mean_unknown_held_out) + "," + fmt(r.mean_unknown_known) + "\n";
  io::write_text(out / "cross_eval.csv", csv);
  std::cout << csv;
  return 0;
}

int cmd_ablate(const Common& c, const std::string& data_dir) {
  auto kv = effective(c, "seed");
  const auto cfg = train::TrainConfig::from(kv);
  const auto manifest = open_manifest(data_dir);
  const fs::path out = c.out_dir.empty() ? "ablation" : c.out_dir;
  echo_config(out, cfg.to_key_values());
  const auto rows = exp::run_ablation(cfg, manifest, [](const std::string& s) { std::cout << s << "\n" << std::flush; });
  const auto table = exp::format_ablation(rows);
  io::write_text(out / "ablation.csv", table);
  std::cout << table;
  return 0;
}

// Splits `--key=value` pairs that are not declared options off the argument list.
std::vector<std::string> extract_overrides(int argc, char** argv, const std::set<std::string>& declared,
                                           std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<std::string> rest;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    const auto eq = a.find('=');
    if (a.rfind("--", 0) == 0 && eq != std::string::npos && !declared.count(a.substr(0, eq))) {
      overrides.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      rest.push_back(a);
    }
  }
  return rest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"caminv: camera-invariant face anti-spoofing on synthetic data"};
  app.require_subcommand(1);
  Common common;
  std::string data_dir, ckpt_path, cal_path, split = "test";
  bool unknown_mode = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "key = value config file");
    sub->add_option("--seed", common.seed, "seed override");
    sub->add_option("--out-dir", common.out_dir, "output directory");
  };
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  auto* trn = app.add_subcommand("train", "train a model");
  auto* cal = app.add_subcommand("calibrate-tau", "calibrate the unknown-camera threshold");
  auto* evl = app.add_subcommand("eval", "intra-camera evaluation");
  auto* xev = app.add_subcommand("cross-eval", "train on a camera subset, test on the held-out camera");
  auto* abl = app.add_subcommand("ablate", "ablation grid");
  auto* exs = app.add_subcommand("export-scores", "write the score file for one split");
  for (auto* s : {gen, trn, cal, evl, xev, abl, exs}) add_common(s);
  for (auto* s : {trn, cal, evl, xev, abl, exs}) s->add_option("--data", data_dir, "dataset directory");
  for (auto* s : {cal, evl, xev, exs}) s->add_option("--checkpoint", ckpt_path, "checkpoint file");
  for (auto* s : {evl, exs, xev}) s->add_option("--calibration", cal_path, "calibration file");
  for (auto* s : {evl, exs}) {
    s->add_flag("--unknown-mode", unknown_mode, "enable unknown-camera refinement");
  }
  exs->add_option("--split", split, "train, dev or test");

  const std::set<std::string> declared{"--config", "--seed", "--out-dir", "--data", "--checkpoint",
                                       "--calibration", "--unknown-mode", "--split", "--help"};
  auto rest = extract_overrides(argc, argv, declared, common.overrides);
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*trn) return cmd_train(common, data_dir);
    if (*cal) return cmd_calibrate(common, data_dir, ckpt_path);
    if (*evl) return cmd_eval(common, data_dir, ckpt_path, cal_path, unknown_mode);
    if (*exs) return cmd_export(common, data_dir, ckpt_path, cal_path, split, unknown_mode);
    if (*xev) return cmd_cross_eval(common, data_dir, ckpt_path, cal_path);
    if (*abl) return cmd_ablate(common, data_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kExitMissing;
  } catch (const ParseError& e) {
    std::cerr << "unreadable artifact: " << e.what() << "\n";
    return kExitMissing;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const CalibrationError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
