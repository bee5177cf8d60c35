#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <set>

#include "caminv/filters.hpp"
#include "caminv/synthdata.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace caminv;
using namespace caminv::synth;
using caminv::testing::bitwise_equal;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("caminv_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

// |DFT| of one channel at integer bin (fx, fy).
double dft_magnitude(const Tensor& d, int c, int fx, int fy) {
  std::complex<double> acc = 0.0;
  const int h = d.h(), w = d.w();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double a = -2.0 * std::numbers::pi * (double(fx) * x / w + double(fy) * y / h);
      acc += double(d.at(0, c, y, x)) * std::complex<double>(std::cos(a), std::sin(a));
    }
  return std::abs(acc);
}

std::vector<double> eddf_vector(const Tensor& img) {
  const Tensor r = filters::apply_eddf(img);
  return {r.data(), r.data() + r.size()};
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("synthdata") {
  TEST_CASE("base scenes are deterministic, distinct, and mid-gray on average") {
    CHECK(bitwise_equal(render_base_scene(7), render_base_scene(7)));
    CHECK_FALSE(bitwise_equal(render_base_scene(7), render_base_scene(8)));
    CHECK(render_base_scene(3, 224).shape() == Shape{1, 3, 224, 224});
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Tensor img = render_base_scene(s);
      double mean = 0.0;
      for (std::size_t i = 0; i < img.size(); ++i) {
        REQUIRE(img.data()[i] >= 0.0f);
        REQUIRE(img.data()[i] <= 1.0f);
        mean += img.data()[i];
      }
      mean /= img.size();
      CHECK(mean > 0.1);
      CHECK(mean < 0.9);
    }
  }

  TEST_CASE("spoof rendering") {
    const Tensor img = render_base_scene(11);
    SUBCASE("zero amplitude is the identity") {
      auto replay = SpoofProfile::sample(Pai::Replay, 1, 0.03, 0.0);
      CHECK(bitwise_equal(apply_spoof(img, replay), img));
      auto print = SpoofProfile::sample(Pai::Print, 1, 0.0, 0.05);
      CHECK(bitwise_equal(apply_spoof(img, print), img));
    }
    SUBCASE("moire energy sits at the configured frequencies") {
      // mid-gray input keeps the pattern away from the clamp
      const Tensor gray(Shape{1, 3, 64, 64}, 0.5f);
      for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto sp = SpoofProfile::sample(Pai::Replay, seed, 0.03, 0.05);
        const Tensor out = apply_spoof(gray, sp);
        Tensor diff(gray.shape());
        for (std::size_t i = 0; i < diff.size(); ++i) diff.data()[i] = out.data()[i] - gray.data()[i];
        double total = 0.0;
        for (std::size_t i = 0; i < 64 * 64; ++i) total += double(diff.data()[i]) * diff.data()[i];
        // Parseval: both conjugate bins together hold the channel's energy.
        const double peak = dft_magnitude(diff, 0, sp.moire_fx, sp.moire_fy);
        CHECK(2.0 * peak * peak / (64.0 * 64.0) == doctest::Approx(total).epsilon(1e-3));
        CHECK(dft_magnitude(diff, 0, sp.moire_fx + 2, sp.moire_fy) < 1e-3 * peak);
      }
    }
    SUBCASE("deterministic and clamped") {
      const auto sp = SpoofProfile::sample(Pai::Print, 5);
      const Tensor a = apply_spoof(img, sp), b = apply_spoof(img, sp);
      CHECK(bitwise_equal(a, b));
      for (std::size_t i = 0; i < a.size(); ++i) CHECK((a.data()[i] >= 0.0f && a.data()[i] <= 1.0f));
    }
    CHECK_THROWS_AS(SpoofProfile::sample(Pai::None, 1), DataError);
    CHECK_THROWS_AS(parse_pai("mask"), DataError);
  }

  TEST_CASE("camera model") {
    const Tensor img = render_base_scene(12);
    CameraProfile identity;
    identity.noise_amplitude = 0.0;
    CHECK(bitwise_equal(apply_camera(img, identity), img));
    const auto cam = CameraProfile::standard(1, 99);
    CHECK(bitwise_equal(apply_camera(img, cam), apply_camera(img, cam)));
    CHECK(bitwise_equal(Tensor(Shape{1, 1, 1, 64 * 64}), Tensor(Shape{1, 1, 1, 64 * 64})));
    const auto f1 = fingerprint_field(cam, 0, 64, 64), f2 = fingerprint_field(cam, 0, 64, 64);
    CHECK(f1 == f2);
    CameraProfile bad = cam;
    bad.noise_amplitude = 0.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    auto degraded = cam;
    degraded.quality_degradation = 2.0;
    CHECK_FALSE(bitwise_equal(apply_camera(img, degraded), apply_camera(img, cam)));
  }

  TEST_CASE("same-camera residual correlation exceeds cross-camera correlation") {
    SynthConfig cfg;
    double same = 0.0, cross = 0.0;
    const int pairs = 50;
    for (int i = 0; i < pairs; ++i) {
      const int cam = i % 3;
      const auto a = eddf_vector(render_sample(cfg, cam, 2 * i % 100, Pai::None));
      const auto b = eddf_vector(render_sample(cfg, cam, (2 * i + 1) % 100, Pai::None));
      const auto c = eddf_vector(render_sample(cfg, (cam + 1) % 3, (2 * i + 1) % 100, Pai::None));
      same += correlation(a, b);
      cross += correlation(a, c);
    }
    same /= pairs;
    cross /= pairs;
    MESSAGE("mean same-camera correlation " << same << ", cross-camera " << cross);
    CHECK(same > cross + 0.2);
  }

  TEST_CASE("fingerprints are attributable by template matching on residuals") {
    SynthConfig cfg;
    std::vector<std::vector<double>> templates(3);
    for (int c = 0; c < 3; ++c) {
      templates[c].assign(24 * 64 * 64, 0.0);
      for (int s = 0; s < 20; ++s) {
        const auto r = eddf_vector(render_sample(cfg, c, s, Pai::None));
        for (std::size_t i = 0; i < r.size(); ++i) templates[c][i] += r[i];
      }
    }
    int correct = 0, total = 0;
    for (int c = 0; c < 3; ++c)
      for (int s = 150; s < 170; ++s)
        for (Pai p : {Pai::None, Pai::Print, Pai::Replay}) {
          const auto r = eddf_vector(render_sample(cfg, c, s, p));
          int best = 0;
          double best_score = -1e300;
          for (int k = 0; k < 3; ++k) {
            // least-squares fit r ~ a * T_k: residual decreases with (r.T)^2/|T|^2
            double dot = 0.0, nn = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) {
              dot += r[i] * templates[k][i];
              nn += templates[k][i] * templates[k][i];
            }
            const double score = dot * dot / nn * (dot > 0 ? 1 : -1);
            if (score > best_score) {
              best_score = score;
              best = k;
            }
          }
          correct += best == c;
          ++total;
        }
    CHECK(double(correct) / total >= 0.9);
  }

  TEST_CASE("high-frequency energy separates live from spoof") {
    SynthConfig cfg;
    std::vector<double> live, spoof;
    for (int c = 0; c < 3; ++c)
      for (int s = 100; s < 140; ++s)
        for (Pai p : {Pai::None, Pai::Print, Pai::Replay}) {
          const auto r = eddf_vector(render_sample(cfg, c, s, p));
          double e = 0.0;
          for (double v : r) e += v * v;
          (p == Pai::None ? live : spoof).push_back(e / r.size());
        }
    double best = 0.0;
    std::vector<double> all = live;
    all.insert(all.end(), spoof.begin(), spoof.end());
    for (double t : all) {
      int ok = 0;
      for (double v : live) ok += v < t;
      for (double v : spoof) ok += v >= t;
      best = std::max(best, double(ok) / all.size());
    }
    MESSAGE("best single-threshold accuracy " << best);
    CHECK(best >= 0.9);
  }

  TEST_CASE("dataset generation: counts, splits, determinism") {
    SynthConfig cfg;
    cfg.scenes_per_camera = 10;
    cfg.image_size = 32;
    const auto dir_a = scratch_dir("gen_a"), dir_b = scratch_dir("gen_b");
    const auto m = generate_dataset(cfg, dir_a);
    CHECK(m.records.size() == 3 * 10 * 3);
    generate_dataset(cfg, dir_b);
    CHECK(io::sha256_file(dir_a / "manifest.csv") == io::sha256_file(dir_b / "manifest.csv"));
    CHECK(io::sha256_file(dir_a / m.records[7].relative_path) == io::sha256_file(dir_b / m.records[7].relative_path));

    const auto loaded = load_manifest(dir_a / "manifest.csv");
    CHECK(loaded.records.size() == m.records.size());
    CHECK(io::read_text(dir_a / "manifest.csv").rfind("relative_path,camera_id,label,pai_type,split\n", 0) == 0);

    std::set<int> train_scenes;
    for (const auto& r : loaded.records) {
      CHECK((r.label == 1) == (r.pai_type == "none"));
      if (r.split == "train") train_scenes.insert(r.scene);
    }
    for (const auto& r : loaded.records) {
      if (r.split != "train") CHECK(train_scenes.count(r.scene) == 0);
    }
    CHECK(loaded.select("test").size() > 0);
    CHECK(loaded.select("dev", {1}).size() == 2 * 3);

    // stored images are the rendered samples
    const auto& r = loaded.records[4];
    CHECK(bitwise_equal(io::read_png(dir_a / r.relative_path),
                        render_sample(cfg, r.camera_id, r.scene - r.camera_id * 10, parse_pai(r.pai_type))));

    cfg.master_seed = 2;
    const auto dir_c = scratch_dir("gen_c");
    generate_dataset(cfg, dir_c);
    CHECK(io::sha256_file(dir_a / r.relative_path) != io::sha256_file(dir_c / r.relative_path));
    for (const auto& d : {dir_a, dir_b, dir_c}) std::filesystem::remove_all(d);
  }

  TEST_CASE("configuration keys") {
    io::KeyValues kv;
    kv.set("cameras", "4");
    kv.set("moire_amplitude", "0.02");
    const auto cfg = SynthConfig::from(kv);
    CHECK(cfg.cameras == 4);
    CHECK(cfg.moire_amplitude == 0.02);
    kv.set("colour", "red");
    CHECK_THROWS_AS(SynthConfig::from(kv), ConfigError);
    io::KeyValues bad;
    bad.set("image_size", "50");
    CHECK_THROWS_AS(SynthConfig::from(bad), ConfigError);
  }

  TEST_CASE("manifest parse errors") {
    const auto dir = scratch_dir("manifest");
    std::filesystem::create_directories(dir);
    io::write_text(dir / "manifest.csv", "path,cam\n");
    CHECK_THROWS_AS(load_manifest(dir / "manifest.csv"), ParseError);
    io::write_text(dir / "manifest.csv", manifest_header() + "\ncam0/train/00001_live.png,0,1,print,train\n");
    CHECK_THROWS_AS(load_manifest(dir / "manifest.csv"), DataError);
    CHECK_THROWS_AS(load_manifest(dir / "missing.csv"), MissingArtifact);
    std::filesystem::remove_all(dir);
  }
}
