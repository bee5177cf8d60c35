#include "caminv/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace caminv::synth {
namespace {

using Rng = std::mt19937_64;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void require_image(const Tensor& image, const char* what) {
  if (image.n() != 1 || image.c() != 3) {
    throw DimensionError(std::string(what) + ": expected [1, 3, H, W], got " + image.shape().str());
  }
}

void clamp_unit(Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = std::clamp(t.data()[i], 0.0f, 1.0f);
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Separable Gaussian blur of one [H, W] plane, replicate borders.
std::vector<double> blur_plane(const std::vector<double>& src, int h, int w, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double z = 0.0;
  for (int i = -radius; i <= radius; ++i) z += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= z;
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * src[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = acc;
    }
  }
  return out;
}

// Pattern orientations per camera id: horizontal, vertical, diagonal, then
// further angles. Entries are (cycles per width along x, along y) at 64 px and
// scale with the image size.
constexpr std::array<std::array<int, 2>, 6> kPatternTable{{
    {16, 0}, {0, 21}, {11, 11}, {13, -13}, {19, 6}, {6, 19},
}};

}  // namespace

std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6A09E667F3BCC908ULL;
  for (auto p : parts) h = splitmix(h ^ splitmix(p));
  return h;
}

std::string pai_name(Pai p) {
  switch (p) {
    case Pai::None: return "none";
    case Pai::Print: return "print";
    case Pai::Replay: return "replay";
  }
  return "none";
}

Pai parse_pai(const std::string& name) {
  if (name == "none") return Pai::None;
  if (name == "print") return Pai::Print;
  if (name == "replay") return Pai::Replay;
  throw DataError("unknown PAI type '" + name + "'");
}

CameraProfile CameraProfile::standard(int camera_id, std::uint64_t master_seed,
                                      double noise_amplitude) {
  CameraProfile cam;
  cam.camera_id = camera_id;
  cam.fingerprint_seed = derive_seed({master_seed, 0xCA3ULL, static_cast<std::uint64_t>(camera_id)});
  cam.noise_amplitude = noise_amplitude;
  Rng rng(cam.fingerprint_seed);
  for (auto& g : cam.response_gamma) g = uniform(rng, 0.8, 1.2);
  const auto& p = kPatternTable[static_cast<std::size_t>(camera_id) % kPatternTable.size()];
  cam.pattern_fx = p[0];
  cam.pattern_fy = p[1];
  return cam;
}

void CameraProfile::validate() const {
  if (!(noise_amplitude >= 0.0 && noise_amplitude <= 0.1)) {
    throw ConfigError("camera noise amplitude must lie in [0, 0.1]");
  }
  for (double g : response_gamma) {
    if (!(g > 0.0)) throw ConfigError("camera response gamma must be positive");
  }
  if (quality_degradation < 0.0) throw ConfigError("quality degradation must be >= 0");
}

SpoofProfile SpoofProfile::sample(Pai pai, std::uint64_t seed, double grain_amplitude,
                                  double moire_amplitude) {
  if (pai == Pai::None) throw DataError("live samples carry no spoof profile");
  SpoofProfile s;
  s.pai = pai;
  s.seed = seed;
  s.grain_amplitude = grain_amplitude;
  s.paper_amplitude = grain_amplitude / 2.0;
  s.moire_amplitude = moire_amplitude;
  Rng rng(seed);
  s.paper_frequency = std::uniform_int_distribution<int>(3, 6)(rng);
  s.blur_sigma = uniform(rng, 0.5, 0.9);
  const double angle = uniform(rng, 0.0, kTwoPi);
  const double radius = uniform(rng, 6.0, 12.0);
  s.moire_fx = static_cast<int>(std::lround(radius * std::cos(angle)));
  s.moire_fy = static_cast<int>(std::lround(radius * std::sin(angle)));
  if (s.moire_fx == 0 && s.moire_fy == 0) s.moire_fx = 8;
  s.moire_phase = uniform(rng, 0.0, kTwoPi);
  return s;
}

Tensor render_base_scene(std::uint64_t scene_seed, int size) {
  if (size < 8) throw ConfigError("scene size must be at least 8");
  Rng rng(scene_seed);
  std::array<double, 3> bg0, bg1, skin;
  for (auto& v : bg0) v = uniform(rng, 0.15, 0.85);
  for (auto& v : bg1) v = uniform(rng, 0.15, 0.85);
  const double tone = uniform(rng, 0.45, 0.85);
  skin = {tone, tone * uniform(rng, 0.75, 0.9), tone * uniform(rng, 0.6, 0.8)};
  const double grad_angle = uniform(rng, 0.0, kTwoPi);
  const double cx = 0.5 + uniform(rng, -0.06, 0.06), cy = 0.5 + uniform(rng, -0.06, 0.06);
  const double rx = uniform(rng, 0.24, 0.32), ry = uniform(rng, 0.32, 0.40);
  const double eye_dx = uniform(rng, 0.09, 0.13), eye_y = uniform(rng, -0.12, -0.06);
  const double eye_r = uniform(rng, 0.03, 0.045), eye_dark = uniform(rng, 0.5, 0.8);
  const double mouth_y = uniform(rng, 0.14, 0.2), mouth_w = uniform(rng, 0.08, 0.13);
  const double light_x = uniform(rng, -0.3, 0.3), light_y = uniform(rng, -0.3, 0.3);
  const double edge = 1.5 / size;

  Tensor img(Shape{1, 3, size, size});
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size, v = (y + 0.5) / size;
      const double t = 0.5 + 0.5 * ((u - 0.5) * std::cos(grad_angle) + (v - 0.5) * std::sin(grad_angle)) * 1.4;
      const double dx = (u - cx) / rx, dy = (v - cy) / ry;
      const double r = std::sqrt(dx * dx + dy * dy);
      const double face = 1.0 - smoothstep(1.0 - edge / rx, 1.0 + edge / rx, r);
      const double shade = 1.0 + 0.25 * (light_x * dx + light_y * dy) - 0.15 * r * r;
      double dark = 0.0;
      for (double side : {-1.0, 1.0}) {
        const double ex = u - (cx + side * eye_dx), ey = v - (cy + eye_y);
        dark += eye_dark * std::exp(-(ex * ex + ey * ey) / (2.0 * eye_r * eye_r));
      }
      const double mx = (u - cx) / mouth_w, my = (v - (cy + mouth_y)) / 0.02;
      dark += 0.4 * std::exp(-(mx * mx + my * my));
      dark = std::min(dark, 0.9);
      for (int c = 0; c < 3; ++c) {
        const double back = bg0[c] + (bg1[c] - bg0[c]) * std::clamp(t, 0.0, 1.0);
        const double skin_c = skin[c] * shade * (1.0 - dark);
        img.at(0, c, y, x) = static_cast<float>(std::clamp(face * skin_c + (1.0 - face) * back, 0.0, 1.0));
      }
    }
  }
  return img;
}

Tensor apply_spoof(const Tensor& image, const SpoofProfile& spoof) {
  require_image(image, "apply_spoof");
  const int h = image.h(), w = image.w();
  Tensor out = image;
  if (spoof.pai == Pai::Replay) {
    if (spoof.moire_amplitude == 0.0) return out;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double m = spoof.moire_amplitude *
                         std::cos(kTwoPi * (spoof.moire_fx * static_cast<double>(x) / w +
                                            spoof.moire_fy * static_cast<double>(y) / h) +
                                  spoof.moire_phase);
        for (int c = 0; c < 3; ++c) out.at(0, c, y, x) += static_cast<float>(m);
      }
    }
  } else if (spoof.pai == Pai::Print) {
    if (spoof.grain_amplitude == 0.0 && spoof.paper_amplitude == 0.0) return out;
    Rng rng(spoof.seed ^ 0x5EEDULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    // Band-limited grain: white noise minus its blur, normalized to unit RMS.
    std::vector<double> white(static_cast<std::size_t>(h) * w);
    for (auto& v : white) v = normal(rng);
    const auto low = blur_plane(white, h, w, 1.5);
    const auto mid = blur_plane(white, h, w, 0.6);
    std::vector<double> grain(white.size());
    double rms = 0.0;
    for (std::size_t i = 0; i < grain.size(); ++i) {
      grain[i] = mid[i] - low[i];
      rms += grain[i] * grain[i];
    }
    rms = std::sqrt(rms / grain.size());
    const double paper_angle = std::uniform_real_distribution<double>(0.0, kTwoPi)(rng);
    for (int c = 0; c < 3; ++c) {
      std::vector<double> plane(static_cast<std::size_t>(h) * w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) plane[y * w + x] = image.at(0, c, y, x);
      plane = blur_plane(plane, h, w, spoof.blur_sigma);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double along = (std::cos(paper_angle) * x + std::sin(paper_angle) * y) / w;
          const double paper = spoof.paper_amplitude * std::sin(kTwoPi * spoof.paper_frequency * along);
          const double g = rms > 0.0 ? spoof.grain_amplitude * grain[y * w + x] / rms : 0.0;
          out.at(0, c, y, x) = static_cast<float>(plane[y * w + x] + g + paper);
        }
      }
    }
  } else {
    throw DataError("apply_spoof: live samples carry no spoof profile");
  }
  clamp_unit(out);
  return out;
}

std::vector<float> fingerprint_field(const CameraProfile& cam, int channel, int h, int w) {
  Rng rng(derive_seed({cam.fingerprint_seed, static_cast<std::uint64_t>(channel),
                       static_cast<std::uint64_t>(h), static_cast<std::uint64_t>(w)}));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double phase = std::uniform_real_distribution<double>(0.0, kTwoPi)(rng);
  // Frequencies are defined at 64 px and scale with the image.
  const double fx = cam.pattern_fx * (w / 64.0), fy = cam.pattern_fy * (h / 64.0);
  std::vector<float> f(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double periodic = std::cos(kTwoPi * (fx * x / w + fy * y / h) + phase);
      f[y * w + x] = static_cast<float>(std::sqrt(0.5) * normal(rng) + periodic);
    }
  }
  return f;
}

Tensor apply_camera(const Tensor& image, const CameraProfile& cam) {
  require_image(image, "apply_camera");
  cam.validate();
  const int h = image.h(), w = image.w();
  Tensor out(image.shape());
  for (int c = 0; c < 3; ++c) {
    const auto f = cam.noise_amplitude > 0.0 ? fingerprint_field(cam, c, h, w)
                                             : std::vector<float>(static_cast<std::size_t>(h) * w, 0.0f);
    const double g = cam.response_gamma[c];
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = image.at(0, c, y, x);
        const double responded = g == 1.0 ? v : std::pow(std::max(v, 0.0), g);
        out.at(0, c, y, x) = static_cast<float>(responded * (1.0 + cam.noise_amplitude * f[y * w + x]));
      }
    }
  }
  clamp_unit(out);
  if (cam.quality_degradation > 0.0) out = block_dct_quantize(out, cam.quality_degradation);
  return out;
}

Tensor block_dct_quantize(const Tensor& image, double strength) {
  require_image(image, "block_dct_quantize");
  if (strength <= 0.0) return image;
  constexpr int B = 8;
  std::array<std::array<double, B>, B> basis{};
  for (int k = 0; k < B; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / B) : std::sqrt(2.0 / B);
    for (int n = 0; n < B; ++n) basis[k][n] = a * std::cos(std::numbers::pi * (n + 0.5) * k / B);
  }
  Tensor out = image;
  const int h = image.h(), w = image.w();
  for (int c = 0; c < 3; ++c) {
    for (int by = 0; by + B <= h; by += B) {
      for (int bx = 0; bx + B <= w; bx += B) {
        double block[B][B], coef[B][B];
        for (int y = 0; y < B; ++y)
          for (int x = 0; x < B; ++x) block[y][x] = image.at(0, c, by + y, bx + x);
        for (int u = 0; u < B; ++u) {
          for (int v = 0; v < B; ++v) {
            double s = 0.0;
            for (int y = 0; y < B; ++y)
              for (int x = 0; x < B; ++x) s += basis[u][y] * basis[v][x] * block[y][x];
            const double step = strength * 0.01 * (1 + u + v);
            coef[u][v] = std::round(s / step) * step;
          }
        }
        for (int y = 0; y < B; ++y) {
          for (int x = 0; x < B; ++x) {
            double s = 0.0;
            for (int u = 0; u < B; ++u)
              for (int v = 0; v < B; ++v) s += basis[u][y] * basis[v][x] * coef[u][v];
            out.at(0, c, by + y, bx + x) = static_cast<float>(s);
          }
        }
      }
    }
  }
  clamp_unit(out);
  return out;
}

const std::vector<std::string>& SynthConfig::keys() {
  static const std::vector<std::string> k{
      "cameras", "scenes_per_camera", "image_size", "master_seed", "noise_amplitude",
      "grain_amplitude", "moire_amplitude", "quality_degradation", "train_fraction",
      "dev_fraction"};
  return k;
}

SynthConfig SynthConfig::from(const io::KeyValues& kv) {
  kv.require_known(keys());
  SynthConfig c;
  c.cameras = static_cast<int>(kv.get_int("cameras", c.cameras));
  c.scenes_per_camera = static_cast<int>(kv.get_int("scenes_per_camera", c.scenes_per_camera));
  c.image_size = static_cast<int>(kv.get_int("image_size", c.image_size));
  c.master_seed = static_cast<std::uint64_t>(kv.get_int("master_seed", static_cast<long long>(c.master_seed)));
  c.noise_amplitude = kv.get_double("noise_amplitude", c.noise_amplitude);
  c.grain_amplitude = kv.get_double("grain_amplitude", c.grain_amplitude);
  c.moire_amplitude = kv.get_double("moire_amplitude", c.moire_amplitude);
  c.quality_degradation = kv.get_double("quality_degradation", c.quality_degradation);
  c.train_fraction = kv.get_double("train_fraction", c.train_fraction);
  c.dev_fraction = kv.get_double("dev_fraction", c.dev_fraction);
  c.validate();
  return c;
}

io::KeyValues SynthConfig::to_key_values() const {
  io::KeyValues kv;
  const auto num = io::format_double;
  kv.set("cameras", std::to_string(cameras));
  kv.set("scenes_per_camera", std::to_string(scenes_per_camera));
  kv.set("image_size", std::to_string(image_size));
  kv.set("master_seed", std::to_string(master_seed));
  kv.set("noise_amplitude", num(noise_amplitude));
  kv.set("grain_amplitude", num(grain_amplitude));
  kv.set("moire_amplitude", num(moire_amplitude));
  kv.set("quality_degradation", num(quality_degradation));
  kv.set("train_fraction", num(train_fraction));
  kv.set("dev_fraction", num(dev_fraction));
  return kv;
}

void SynthConfig::validate() const {
  if (cameras < 1) throw ConfigError("cameras must be >= 1");
  if (scenes_per_camera < 3) throw ConfigError("scenes_per_camera must be >= 3");
  if (image_size < 16 || image_size % 16 != 0) throw ConfigError("image_size must be a multiple of 16");
  if (!(noise_amplitude > 0.0 && noise_amplitude <= 0.1)) throw ConfigError("noise_amplitude must lie in (0, 0.1]");
  if (grain_amplitude < 0.0 || moire_amplitude < 0.0) throw ConfigError("spoof amplitudes must be >= 0");
  if (quality_degradation < 0.0) throw ConfigError("quality_degradation must be >= 0");
  if (!(train_fraction > 0.0) || !(dev_fraction >= 0.0) || train_fraction + dev_fraction >= 1.0) {
    throw ConfigError("split fractions must leave room for a test split");
  }
}

std::string split_for_scene(int scene_index, const SynthConfig& cfg) {
  const double f = (scene_index + 0.5) / cfg.scenes_per_camera;
  if (f < cfg.train_fraction) return "train";
  if (f < cfg.train_fraction + cfg.dev_fraction) return "dev";
  return "test";
}

std::uint64_t scene_seed(const SynthConfig& cfg, int camera, int scene_index) {
  return derive_seed({cfg.master_seed, 0x5CEEULL,
                      static_cast<std::uint64_t>(camera) * cfg.scenes_per_camera + scene_index});
}

Tensor render_sample(const SynthConfig& cfg, int camera, int scene_index, Pai pai) {
  const std::uint64_t seed = scene_seed(cfg, camera, scene_index);
  Tensor img = render_base_scene(seed, cfg.image_size);
  if (pai != Pai::None) {
    const auto sp = SpoofProfile::sample(
        pai, derive_seed({cfg.master_seed, seed, static_cast<std::uint64_t>(camera),
                          static_cast<std::uint64_t>(pai)}),
        cfg.grain_amplitude, cfg.moire_amplitude);
    img = apply_spoof(img, sp);
  }
  auto cam = CameraProfile::standard(camera, cfg.master_seed, cfg.noise_amplitude);
  cam.quality_degradation = cfg.quality_degradation;
  return io::quantize_8bit(apply_camera(img, cam));
}

std::vector<SampleRecord> Manifest::select(const std::string& split,
                                           const std::vector<int>& cameras) const {
  std::vector<SampleRecord> out;
  for (const auto& r : records) {
    if (!split.empty() && r.split != split) continue;
    if (!cameras.empty() && std::find(cameras.begin(), cameras.end(), r.camera_id) == cameras.end()) continue;
    out.push_back(r);
  }
  return out;
}

std::string manifest_header() { return "relative_path,camera_id,label,pai_type,split"; }

std::string manifest_csv(const std::vector<SampleRecord>& records) {
  std::string out = manifest_header() + "\n";
  for (const auto& r : records) {
    out += r.relative_path + "," + std::to_string(r.camera_id) + "," + std::to_string(r.label) +
           "," + r.pai_type + "," + r.split + "\n";
  }
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("manifest not found: " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || io::split_csv_line(line) != io::split_csv_line(manifest_header())) {
    throw ParseError("manifest " + path.string() + ": bad header");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 5) throw ParseError(where + ": expected 5 fields");
    SampleRecord r;
    r.relative_path = f[0];
    try {
      r.camera_id = std::stoi(f[1]);
      r.label = std::stoi(f[2]);
    } catch (const std::exception&) {
      throw ParseError(where + ": non-integer camera_id or label");
    }
    r.pai_type = f[3];
    r.split = f[4];
    parse_pai(r.pai_type);
    if ((r.label == 1) != (r.pai_type == "none") || (r.label != 0 && r.label != 1)) {
      throw DataError(where + ": label and pai_type disagree");
    }
    if (r.split != "train" && r.split != "dev" && r.split != "test") {
      throw DataError(where + ": unknown split '" + r.split + "'");
    }
    const auto name = std::filesystem::path(r.relative_path).filename().string();
    try {
      r.scene = std::stoi(name.substr(0, name.find('_')));
    } catch (const std::exception&) {
      throw ParseError(where + ": cannot read scene number from " + name);
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

Manifest generate_dataset(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const Pai pais[] = {Pai::None, Pai::Print, Pai::Replay};
  Manifest m;
  m.root = out_dir;
  for (int cam = 0; cam < cfg.cameras; ++cam) {
    for (int s = 0; s < cfg.scenes_per_camera; ++s) {
      const int scene = cam * cfg.scenes_per_camera + s;
      for (Pai pai : pais) {
        SampleRecord r;
        char name[32];
        std::snprintf(name, sizeof(name), "%05d_%s.png", scene, pai_name(pai).c_str());
        r.split = split_for_scene(s, cfg);
        r.relative_path = "cam" + std::to_string(cam) + "/" + r.split + "/" + name;
        r.camera_id = cam;
        r.label = pai == Pai::None ? 1 : 0;
        r.pai_type = pai_name(pai);
        r.scene = scene;
        m.records.push_back(std::move(r));
      }
    }
  }
  for (const auto& r : m.records) {
    std::filesystem::create_directories((out_dir / r.relative_path).parent_path());
  }
  const auto total = static_cast<std::ptrdiff_t>(m.records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < total; ++i) {
    const auto& r = m.records[i];
    const int s = r.scene - r.camera_id * cfg.scenes_per_camera;
    io::write_png(out_dir / r.relative_path, render_sample(cfg, r.camera_id, s, parse_pai(r.pai_type)));
  }
  io::write_text(out_dir / "manifest.csv", manifest_csv(m.records));
  io::write_text(out_dir / "synth_config.txt", cfg.to_key_values().str());
  return m;
}

}  // namespace caminv::synth
