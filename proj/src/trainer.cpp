#include "caminv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "caminv/kernels.hpp"

namespace caminv::train {
namespace {

std::string num(double v) { return io::format_double(v); }

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  if (text.empty()) return out;
  for (const auto& f : io::split_csv_line(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(f, &used));
      if (used != f.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a comma-separated integer list, got '" + text + "'");
    }
  }
  return out;
}

Tensor scaled_tensor(const losses::LogitMap& m, double scale) {
  Tensor t(m.batch, m.classes, m.height, m.width);
  for (std::size_t i = 0; i < m.values.size(); ++i) t.data()[i] = static_cast<float>(m.values[i] * scale);
  return t;
}

float sample_replicate(const Tensor& img, int c, double y, double x) {
  const int h = img.h(), w = img.w();
  y = std::clamp(y, 0.0, h - 1.0);
  x = std::clamp(x, 0.0, w - 1.0);
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  return static_cast<float>((1 - fy) * ((1 - fx) * img.at(0, c, y0, x0) + fx * img.at(0, c, y0, x1)) +
                            fy * ((1 - fx) * img.at(0, c, y1, x0) + fx * img.at(0, c, y1, x1)));
}

constexpr const char* kMagic = "caminv-checkpoint";

// Sequential reader over a checkpoint section payload.
class Reader {
 public:
  Reader(std::string_view data, std::string section) : data_(data), section_(std::move(section)) {}

  std::string line() {
    const auto nl = data_.find('\n', pos_);
    if (nl == std::string_view::npos) fail("unterminated line");
    std::string out(data_.substr(pos_, nl - pos_));
    pos_ = nl + 1;
    return out;
  }
  void floats(float* dst, std::size_t count) {
    const std::size_t bytes = count * sizeof(float);
    if (pos_ + bytes > data_.size()) fail("payload shorter than declared array");
    std::memcpy(dst, data_.data() + pos_, bytes);
    pos_ += bytes;
  }
  bool done() const { return pos_ >= data_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("checkpoint section '" + section_ + "': " + what);
  }

 private:
  std::string_view data_;
  std::string section_;
  std::size_t pos_ = 0;
};

void append_floats(std::string& out, const float* src, std::size_t count) {
  out.append(reinterpret_cast<const char*>(src), count * sizeof(float));
}

void append_section(std::string& out, const std::string& name, const std::string& payload) {
  out += "section " + name + " " + std::to_string(payload.size()) + "\n";
  out += payload;
  out += "\n";
}

}  // namespace

TrainConfig TrainConfig::for_profile(const std::string& profile) {
  TrainConfig c;
  c.profile = profile;
  if (profile == "desk") {
    c.input_size = 64;
    c.batch_size = 16;
    c.total_steps = 2000;
    c.decay_start = 1000;
    c.decay_every = 500;
  } else if (profile == "full") {
    c.input_size = 224;
    c.batch_size = 32;
    c.total_steps = 40000;
    c.decay_start = 20000;
    c.decay_every = 10000;
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected desk or full)");
  }
  return c;
}

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{
      "profile", "input_size", "batch_size", "lr0", "decay_factor", "decay_start",
      "decay_every", "total_steps", "seed", "train_cameras", "no_eddf_branch1",
      "no_eddf_branch2", "no_cam_id", "augment", "checkpoint_every", "log_every",
      "adam_beta1", "adam_beta2", "adam_eps", "alpha1", "alpha2", "gamma", "lambda1",
      "lambda2", "lambda3", "lambda4"};
  return k;
}

TrainConfig TrainConfig::from(const io::KeyValues& kv) {
  kv.require_known(keys());
  TrainConfig c = for_profile(kv.get("profile", "desk"));
  c.input_size = static_cast<int>(kv.get_int("input_size", c.input_size));
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.lr0 = kv.get_double("lr0", c.lr0);
  c.decay_factor = kv.get_double("decay_factor", c.decay_factor);
  c.decay_start = kv.get_int("decay_start", c.decay_start);
  c.decay_every = kv.get_int("decay_every", c.decay_every);
  c.total_steps = kv.get_int("total_steps", c.total_steps);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.train_cameras = parse_int_list("train_cameras", kv.get("train_cameras", ""));
  c.no_eddf_branch1 = kv.get_bool("no_eddf_branch1", c.no_eddf_branch1);
  c.no_eddf_branch2 = kv.get_bool("no_eddf_branch2", c.no_eddf_branch2);
  c.no_cam_id = kv.get_bool("no_cam_id", c.no_cam_id);
  c.augment = kv.get_bool("augment", c.augment);
  c.checkpoint_every = kv.get_int("checkpoint_every", c.checkpoint_every);
  c.log_every = kv.get_int("log_every", c.log_every);
  c.adam_beta1 = kv.get_double("adam_beta1", c.adam_beta1);
  c.adam_beta2 = kv.get_double("adam_beta2", c.adam_beta2);
  c.adam_eps = kv.get_double("adam_eps", c.adam_eps);
  c.hp.alpha1 = kv.get_double("alpha1", c.hp.alpha1);
  c.hp.alpha2 = kv.get_double("alpha2", c.hp.alpha2);
  c.hp.gamma = kv.get_double("gamma", c.hp.gamma);
  c.hp.lambda1 = kv.get_double("lambda1", c.hp.lambda1);
  c.hp.lambda2 = kv.get_double("lambda2", c.hp.lambda2);
  c.hp.lambda3 = kv.get_double("lambda3", c.hp.lambda3);
  c.hp.lambda4 = kv.get_double("lambda4", c.hp.lambda4);
  c.validate();
  return c;
}

io::KeyValues TrainConfig::to_key_values() const {
  io::KeyValues kv;
  kv.set("profile", profile);
  kv.set("input_size", std::to_string(input_size));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("lr0", num(lr0));
  kv.set("decay_factor", num(decay_factor));
  kv.set("decay_start", std::to_string(decay_start));
  kv.set("decay_every", std::to_string(decay_every));
  kv.set("total_steps", std::to_string(total_steps));
  kv.set("seed", std::to_string(seed));
  kv.set("train_cameras", join(train_cameras));
  kv.set("no_eddf_branch1", no_eddf_branch1 ? "true" : "false");
  kv.set("no_eddf_branch2", no_eddf_branch2 ? "true" : "false");
  kv.set("no_cam_id", no_cam_id ? "true" : "false");
  kv.set("augment", augment ? "true" : "false");
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  kv.set("log_every", std::to_string(log_every));
  kv.set("adam_beta1", num(adam_beta1));
  kv.set("adam_beta2", num(adam_beta2));
  kv.set("adam_eps", num(adam_eps));
  kv.set("alpha1", num(hp.alpha1));
  kv.set("alpha2", num(hp.alpha2));
  kv.set("gamma", num(hp.gamma));
  kv.set("lambda1", num(hp.lambda1));
  kv.set("lambda2", num(hp.lambda2));
  kv.set("lambda3", num(hp.lambda3));
  kv.set("lambda4", num(hp.lambda4));
  return kv;
}

void TrainConfig::validate() const {
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch_size must be even and >= 2");
  if (total_steps <= 0) throw ConfigError("total_steps must be positive");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be positive");
  if (decay_start < 0 || decay_every <= 0) throw ConfigError("decay breakpoints must be positive");
  if (input_size <= 0 || input_size % 16 != 0) throw ConfigError("input_size must be a multiple of 16");
  if (log_every <= 0) throw ConfigError("log_every must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  hp.validate();
}

ModelConfig TrainConfig::model_config(int num_cameras) const {
  ModelConfig m = profile == "full" ? ModelConfig::full_profile(num_cameras)
                                    : ModelConfig::desk_profile(num_cameras);
  m.input_size = input_size;
  m.no_eddf_branch1 = no_eddf_branch1;
  m.no_eddf_branch2 = no_eddf_branch2;
  m.no_cam_id = no_cam_id;
  m.validate();
  return m;
}

double lr_schedule(long long step, const TrainConfig& cfg) {
  if (step < cfg.decay_start) return cfg.lr0;
  const long long decays = 1 + (step - cfg.decay_start) / cfg.decay_every;
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(decays));
}

Dataset load_split(const synth::Manifest& manifest, const std::string& split,
                   const std::vector<int>& cameras) {
  const auto records = manifest.select(split, cameras);
  if (records.empty()) throw DataError("no manifest rows for split '" + split + "'");
  Dataset d;
  d.images.resize(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) d.images[i] = io::read_png(manifest.root / records[i].relative_path);
  for (const auto& r : records) {
    d.camera_ids.push_back(r.camera_id);
    d.labels.push_back(r.label);
    d.pai_types.push_back(r.pai_type);
    d.sample_ids.push_back(r.relative_path);
  }
  return d;
}

std::vector<int> sample_batch(const Dataset& data, int batch_size, std::mt19937_64& rng) {
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch size must be even");
  std::vector<int> live, spoof;
  for (std::size_t i = 0; i < data.size(); ++i) (data.labels[i] == 1 ? live : spoof).push_back(static_cast<int>(i));
  if (live.empty() || spoof.empty()) throw DataError("training split needs both live and spoof samples");
  const int half = batch_size / 2;
  std::vector<int> out;
  out.reserve(batch_size);
  for (auto* pool : {&live, &spoof}) {
    auto& p = *pool;
    if (static_cast<int>(p.size()) >= half) {
      // Partial Fisher-Yates: distinct draws within a batch.
      for (int i = 0; i < half; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, p.size() - 1);
        std::swap(p[i], p[pick(rng)]);
        out.push_back(p[i]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
      for (int i = 0; i < half; ++i) out.push_back(p[pick(rng)]);
    }
  }
  return out;
}

AugmentParams draw_augment(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AugmentParams p;
  p.hflip = u(rng) < 0.5;
  p.vflip = u(rng) < 0.5;
  p.angle_deg = -15.0 + 30.0 * u(rng);
  p.brightness = 0.8 + 0.4 * u(rng);
  p.contrast = 0.8 + 0.4 * u(rng);
  p.saturation = 0.8 + 0.4 * u(rng);
  return p;
}

Tensor apply_augment(const Tensor& image, const AugmentParams& p) {
  if (image.n() != 1 || image.c() != 3) throw DimensionError("augment expects [1, 3, H, W]");
  const int h = image.h(), w = image.w();
  Tensor out(image.shape());
  const double a = p.angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sy = p.vflip ? h - 1 - y : y;
      const int sx = p.hflip ? w - 1 - x : x;
      for (int c = 0; c < 3; ++c) {
        if (p.angle_deg == 0.0) {
          out.at(0, c, y, x) = image.at(0, c, sy, sx);
        } else {
          // Inverse rotation of the (flipped) output grid back into the source.
          const double dy = y - cy, dx = x - cx;
          const double ry = cy + sa * dx + ca * dy, rx = cx + ca * dx - sa * dy;
          const double fy = p.vflip ? h - 1 - ry : ry, fx = p.hflip ? w - 1 - rx : rx;
          out.at(0, c, y, x) = sample_replicate(image, c, fy, fx);
        }
      }
    }
  }
  if (p.brightness == 1.0 && p.contrast == 1.0 && p.saturation == 1.0) return out;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  float* r = out.data();
  float* g = r + plane;
  float* b = g + plane;
  double mean = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    r[i] *= static_cast<float>(p.brightness);
    g[i] *= static_cast<float>(p.brightness);
    b[i] *= static_cast<float>(p.brightness);
    mean += 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  }
  mean /= static_cast<double>(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    float* px[3] = {r + i, g + i, b + i};
    for (auto* v : px) *v = static_cast<float>(mean + p.contrast * (*v - mean));
    const double gray = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    for (auto* v : px) *v = std::clamp(static_cast<float>(gray + p.saturation * (*v - gray)), 0.0f, 1.0f);
  }
  return out;
}

Tensor augment(const Tensor& image, std::mt19937_64& rng) { return apply_augment(image, draw_augment(rng)); }

void Adam::step(ParameterList& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(eps_);
  for (auto& [name, p] : params) {
    auto& slot = slots_[name];
    const std::size_t n = p->value.size();
    if (slot.m.size() != n) {
      slot.m.assign(n, 0.0f);
      slot.v.assign(n, 0.0f);
    }
    float* w = p->value.data();
    const float* g = p->grad.data();
    float* m = slot.m.data();
    float* v = slot.v.data();
#pragma omp parallel for schedule(static) if (n > 65536)
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

StepResult compute_gradients(CameraInvariantModel& model, const Tensor& images,
                             const std::vector<int>& camera_classes,
                             const std::vector<int>& labels, const losses::HyperParams& hp) {
  model.zero_grad();
  InvariantCache ic;
  AugmentationCache ac;
  const auto inv = model.forward_invariant(images, &ic);
  const auto aug = model.forward_augmentation(images, &ac);

  StepResult r;
  InvariantGrads g;
  losses::LogitMap grad;
  if (model.has_camera_branch()) {
    r.parts.cam_id1 = losses::camera_focal_loss(losses::to_logit_map(inv.o_cam), camera_classes, hp.gamma, &grad);
    g.o_cam = scaled_tensor(grad, hp.lambda1);
    r.parts.cam_id2 = losses::camera_focal_loss(losses::to_logit_map(inv.o_mix), camera_classes, hp.gamma, &grad);
    g.o_mix = scaled_tensor(grad, hp.lambda1);
    r.parts.decam = losses::decam_loss(losses::to_logit_map(inv.o_spf), &grad);
    g.o_spf = scaled_tensor(grad, hp.lambda3);
    r.parts.anti2 = losses::binary_focal_loss_logits(losses::to_logit_map(inv.logits_spf), labels,
                                                     hp.alpha1, hp.alpha2, hp.gamma, &grad);
    g.logits_spf = scaled_tensor(grad, hp.lambda2);
  }
  r.parts.anti1 = losses::binary_focal_loss_logits(losses::to_logit_map(inv.logits_mix), labels,
                                                   hp.alpha1, hp.alpha2, hp.gamma, &grad);
  g.logits_mix = scaled_tensor(grad, hp.lambda2);
  r.parts.anti3 = losses::binary_focal_loss_logits(losses::to_logit_map(aug.logits_aug), labels,
                                                   hp.alpha1, hp.alpha2, hp.gamma, &grad);
  const Tensor g_aug = scaled_tensor(grad, hp.lambda2);
  r.total = losses::total_loss(r.parts, hp);

  model.backward_invariant(ic, g);
  model.backward_augmentation(ac, g_aug);
  return r;
}

std::string log_header() { return "step,lr,l1_cam,l2_cam,l1_anti,l2_anti,l3_anti,decam,total"; }

std::string format_log_row(const LogRow& row) {
  std::ostringstream os;
  os.precision(9);
  const auto& p = row.result.parts;
  os << row.step << "," << row.lr << "," << p.cam_id1 << "," << p.cam_id2 << "," << p.anti1 << ","
     << p.anti2 << "," << p.anti3 << "," << p.decam << "," << row.result.total;
  return os.str();
}

io::KeyValues model_config_to_key_values(const ModelConfig& m) {
  io::KeyValues kv;
  kv.set("input_size", std::to_string(m.input_size));
  kv.set("hf_channels", std::to_string(m.hf_channels));
  kv.set("stem_channels", std::to_string(m.stem_channels));
  kv.set("stage_channels", join({m.stage_channels[0], m.stage_channels[1], m.stage_channels[2]}));
  kv.set("gn_groups", std::to_string(m.gn_groups));
  kv.set("head_hidden", std::to_string(m.head_hidden));
  kv.set("num_cameras", std::to_string(m.num_cameras));
  kv.set("no_eddf_branch1", m.no_eddf_branch1 ? "true" : "false");
  kv.set("no_eddf_branch2", m.no_eddf_branch2 ? "true" : "false");
  kv.set("no_cam_id", m.no_cam_id ? "true" : "false");
  return kv;
}

ModelConfig model_config_from_key_values(const io::KeyValues& kv) {
  kv.require_known({"input_size", "hf_channels", "stem_channels", "stage_channels", "gn_groups",
                    "head_hidden", "num_cameras", "no_eddf_branch1", "no_eddf_branch2", "no_cam_id"});
  ModelConfig m;
  m.input_size = static_cast<int>(kv.get_int("input_size", m.input_size));
  m.hf_channels = static_cast<int>(kv.get_int("hf_channels", m.hf_channels));
  m.stem_channels = static_cast<int>(kv.get_int("stem_channels", m.stem_channels));
  const auto stages = parse_int_list("stage_channels", kv.get("stage_channels", "128,256,512"));
  if (stages.size() != 3) throw ConfigError("stage_channels needs three widths");
  m.stage_channels = {stages[0], stages[1], stages[2]};
  m.gn_groups = static_cast<int>(kv.get_int("gn_groups", m.gn_groups));
  m.head_hidden = static_cast<int>(kv.get_int("head_hidden", m.head_hidden));
  m.num_cameras = static_cast<int>(kv.get_int("num_cameras", m.num_cameras));
  m.no_eddf_branch1 = kv.get_bool("no_eddf_branch1", false);
  m.no_eddf_branch2 = kv.get_bool("no_eddf_branch2", false);
  m.no_cam_id = kv.get_bool("no_cam_id", false);
  m.validate();
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string out = std::string(kMagic) + " v" + std::to_string(Checkpoint::kVersion) + "\n";
  append_section(out, "config", ckpt.config.to_key_values().str());
  append_section(out, "model", model_config_to_key_values(ckpt.model).str());
  append_section(out, "state", "step = " + std::to_string(ckpt.step) + "\ncameras = " + join(ckpt.cameras) + "\n");
  std::string weights;
  for (const auto& [name, t] : ckpt.weights) {
    const auto& s = t.shape();
    weights += name + " " + std::to_string(s.n) + " " + std::to_string(s.c) + " " +
               std::to_string(s.h) + " " + std::to_string(s.w) + "\n";
    append_floats(weights, t.data(), t.size());
  }
  append_section(out, "weights", weights);
  std::string opt = "t " + std::to_string(ckpt.optimizer_steps) + "\n";
  for (const auto& [name, slot] : ckpt.optimizer) {
    opt += name + " " + std::to_string(slot.m.size()) + "\n";
    append_floats(opt, slot.m.data(), slot.m.size());
    append_floats(opt, slot.v.data(), slot.v.size());
  }
  append_section(out, "optimizer", opt);
  if (ckpt.calibration) {
    append_section(out, "calibration", "tau = " + num(ckpt.calibration->tau) + "\nfloor = " +
                                           num(ckpt.calibration->floor) + "\nn_cameras = " +
                                           std::to_string(ckpt.calibration->n_cameras) + "\n");
  }
  append_section(out, "end", "");
  io::write_text(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("checkpoint not found: " + path.string());
  const std::string data = io::read_text(path);
  Reader top(data, "header");
  const std::string header = top.line();
  const std::string expected = std::string(kMagic) + " v" + std::to_string(Checkpoint::kVersion);
  if (header != expected) {
    if (header.rfind(std::string(kMagic) + " v", 0) == 0) {
      throw ParseError("checkpoint version mismatch: file has " + header.substr(std::strlen(kMagic) + 1) +
                       ", this build reads v" + std::to_string(Checkpoint::kVersion));
    }
    throw ParseError("checkpoint section 'header': not a checkpoint file");
  }
  std::size_t pos = header.size() + 1;
  std::map<std::string, std::string_view> sections;
  std::string last = "header";
  bool ended = false;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) throw ParseError("checkpoint section after '" + last + "': truncated section header");
    std::istringstream hs(data.substr(pos, nl - pos));
    std::string word, name;
    std::size_t bytes = 0;
    if (!(hs >> word >> name >> bytes) || word != "section") {
      throw ParseError("checkpoint section after '" + last + "': malformed section header");
    }
    pos = nl + 1;
    if (pos + bytes + 1 > data.size() || data[pos + bytes] != '\n') {
      throw ParseError("checkpoint section '" + name + "': truncated payload");
    }
    sections[name] = std::string_view(data).substr(pos, bytes);
    pos += bytes + 1;
    last = name;
    if (name == "end") {
      ended = true;
      break;
    }
  }
  if (!ended) throw ParseError("checkpoint section 'end': missing (file truncated after '" + last + "')");
  for (const char* required : {"config", "model", "state", "weights", "optimizer"}) {
    if (!sections.count(required)) throw ParseError(std::string("checkpoint section '") + required + "': missing");
  }

  Checkpoint ck;
  auto kv_section = [&](const char* name) {
    try {
      return io::KeyValues::parse(sections[name], std::string("checkpoint section '") + name + "'");
    } catch (const ConfigError& e) {
      throw ParseError(e.what());
    }
  };
  try {
    ck.config = TrainConfig::from(kv_section("config"));
    ck.model = model_config_from_key_values(kv_section("model"));
    const auto state = kv_section("state");
    ck.step = state.get_int("step", 0);
    ck.cameras = parse_int_list("cameras", state.get("cameras", ""));
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint configuration: ") + e.what());
  }

  Reader w(sections["weights"], "weights");
  while (!w.done()) {
    std::istringstream ls(w.line());
    std::string name;
    Shape s;
    if (!(ls >> name >> s.n >> s.c >> s.h >> s.w) || s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
      w.fail("malformed array header");
    }
    Tensor t(s);
    w.floats(t.data(), t.size());
    ck.weights.emplace_back(name, std::move(t));
  }
  Reader o(sections["optimizer"], "optimizer");
  {
    std::istringstream ls(o.line());
    std::string tag;
    if (!(ls >> tag >> ck.optimizer_steps) || tag != "t") o.fail("missing step counter");
  }
  while (!o.done()) {
    std::istringstream ls(o.line());
    std::string name;
    std::size_t count = 0;
    if (!(ls >> name >> count)) o.fail("malformed slot header");
    Adam::Slot slot;
    slot.m.resize(count);
    slot.v.resize(count);
    o.floats(slot.m.data(), count);
    o.floats(slot.v.data(), count);
    ck.optimizer[name] = std::move(slot);
  }
  if (sections.count("calibration")) {
    const auto kv = kv_section("calibration");
    inference::CameraCalibration cal;
    try {
      cal.tau = kv.get_double("tau", 0.0);
      cal.floor = kv.get_double("floor", 0.6);
      cal.n_cameras = static_cast<int>(kv.get_int("n_cameras", 0));
      cal.validate();
    } catch (const std::exception& e) {
      throw ParseError(std::string("checkpoint section 'calibration': ") + e.what());
    }
    ck.calibration = cal;
  }
  return ck;
}

CameraInvariantModel restore_model(const Checkpoint& ckpt) {
  CameraInvariantModel model(ckpt.model);
  auto params = model.parameters();
  if (params.size() != ckpt.weights.size()) {
    throw ParseError("checkpoint section 'weights': " + std::to_string(ckpt.weights.size()) +
                     " arrays, model expects " + std::to_string(params.size()));
  }
  for (const auto& [name, t] : ckpt.weights) {
    Parameter* p = model.find_parameter(name);
    if (!p) throw ParseError("checkpoint section 'weights': unexpected array '" + name + "'");
    if (!(p->value.shape() == t.shape())) {
      throw ParseError("checkpoint section 'weights': array '" + name + "' has shape " +
                       t.shape().str() + ", model expects " + p->value.shape().str());
    }
    p->value = t;
  }
  return model;
}

Trainer::Trainer(const TrainConfig& config, std::vector<int> cameras)
    : config_(config),
      cameras_(std::move(cameras)),
      model_(config.model_config(static_cast<int>(cameras_.size()))),
      adam_(config.adam_beta1, config.adam_beta2, config.adam_eps),
      batch_rng_(synth::derive_seed({config.seed, 0xBA7CULL})) {
  config_.validate();
  if (!config_.no_cam_id && cameras_.size() < 2) {
    throw ConfigError("camera losses need at least two training cameras");
  }
  for (std::size_t i = 0; i < cameras_.size(); ++i) camera_class_[cameras_[i]] = static_cast<int>(i);
  model_.init(config_.seed);
}

StepResult Trainer::step(const Dataset& data) {
  const auto idx = sample_batch(data, config_.batch_size, batch_rng_);
  std::vector<Tensor> images;
  std::vector<int> cams, labels;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int k = idx[i];
    if (config_.augment) {
      std::mt19937_64 rng(synth::derive_seed({config_.seed, 0xA06ULL, static_cast<std::uint64_t>(step_), i}));
      images.push_back(augment(data.images[k], rng));
    } else {
      images.push_back(data.images[k]);
    }
    const auto it = camera_class_.find(data.camera_ids[k]);
    if (it == camera_class_.end()) {
      throw DataError("sample " + data.sample_ids[k] + " comes from camera " +
                      std::to_string(data.camera_ids[k]) + " outside the training set");
    }
    cams.push_back(it->second);
    labels.push_back(data.labels[k]);
  }
  const auto r = compute_gradients(model_, stack(images), cams, labels, config_.hp);
  auto params = model_.parameters();
  adam_.step(params, lr_schedule(step_, config_));
  ++step_;
  return r;
}

void Trainer::run(const Dataset& data, const std::function<void(const LogRow&)>& on_log,
                  const std::function<void(const Checkpoint&)>& on_checkpoint) {
  while (step_ < config_.total_steps) {
    const double lr = lr_schedule(step_, config_);
    const auto r = step(data);
    if (on_log && (step_ == 1 || step_ % config_.log_every == 0 || step_ == config_.total_steps)) {
      on_log({step_, lr, r});
    }
    if (on_checkpoint && config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0 &&
        step_ != config_.total_steps) {
      on_checkpoint(checkpoint());
    }
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config = config_;
  ck.model = model_.config();
  ck.cameras = cameras_;
  ck.step = step_;
  auto params = const_cast<CameraInvariantModel&>(model_).parameters();
  for (const auto& [name, p] : params) ck.weights.emplace_back(name, p->value);
  ck.optimizer_steps = adam_.steps();
  ck.optimizer = adam_.slots();
  return ck;
}

std::vector<std::vector<double>> camera_probabilities(const CameraInvariantModel& model,
                                                      const Dataset& data, int chunk) {
  if (!model.has_camera_branch()) throw ConfigError("model has no camera sub-network");
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    const Tensor batch = stack(std::span(data.images).subspan(start, end - start));
    const auto inv = model.forward_invariant(batch);
    for (int n = 0; n < batch.n(); ++n) out.push_back(image_camera_probs(inv.o_cam, n));
  }
  return out;
}

inference::CameraCalibration calibrate(const CameraInvariantModel& model, const Dataset& train,
                                       double floor) {
  const auto probs = camera_probabilities(model, train);
  return inference::calibrate_tau(probs, floor);
}

std::vector<inference::Prediction> predict_dataset(const CameraInvariantModel& model,
                                                   const Dataset& data,
                                                   const inference::CameraCalibration* cal,
                                                   const inference::PredictOptions& options,
                                                   int chunk) {
  std::vector<inference::Prediction> out;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    const Tensor batch = stack(std::span(data.images).subspan(start, end - start));
    auto p = inference::predict(model, batch, cal, options);
    out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return out;
}

}  // namespace caminv::train
