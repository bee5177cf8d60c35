#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "caminv/trainer.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace caminv;
using namespace caminv::train;
using caminv::testing::bitwise_equal;
using caminv::testing::random_tensor;

namespace {

TrainConfig small_config() {
  TrainConfig c = TrainConfig::for_profile("desk");
  c.input_size = 32;
  c.batch_size = 4;
  c.total_steps = 4;
  c.log_every = 1;
  return c;
}

Dataset small_dataset(int per_camera = 6) {
  synth::SynthConfig cfg;
  cfg.image_size = 32;
  Dataset d;
  for (int cam = 0; cam < 3; ++cam)
    for (int s = 0; s < per_camera; ++s) {
      const auto pai = s % 3 == 0 ? synth::Pai::None : s % 3 == 1 ? synth::Pai::Print : synth::Pai::Replay;
      d.images.push_back(synth::render_sample(cfg, cam, s, pai));
      d.camera_ids.push_back(cam);
      d.labels.push_back(pai == synth::Pai::None ? 1 : 0);
      d.pai_types.push_back(synth::pai_name(pai));
      d.sample_ids.push_back("c" + std::to_string(cam) + "_" + std::to_string(s));
    }
  return d;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("caminv_test_" + name);
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("learning-rate schedule") {
    const auto full = TrainConfig::for_profile("full");
    CHECK(lr_schedule(0, full) == doctest::Approx(0.004).epsilon(1e-15));
    CHECK(lr_schedule(19999, full) == doctest::Approx(0.004).epsilon(1e-15));
    CHECK(lr_schedule(20000, full) == doctest::Approx(0.0008).epsilon(1e-12));
    CHECK(lr_schedule(29999, full) == doctest::Approx(0.0008).epsilon(1e-12));
    CHECK(lr_schedule(30000, full) == doctest::Approx(0.00016).epsilon(1e-12));
    CHECK(full.batch_size == 32);
    const auto desk = TrainConfig::for_profile("desk");
    // breakpoints at the same fractions of the budget
    CHECK(double(desk.decay_start) / desk.total_steps == double(full.decay_start) / full.total_steps);
    CHECK(double(desk.decay_every) / desk.total_steps == double(full.decay_every) / full.total_steps);
    CHECK(lr_schedule(desk.decay_start, desk) == doctest::Approx(0.0008).epsilon(1e-12));
    CHECK_THROWS_AS(TrainConfig::for_profile("huge"), ConfigError);
  }

  TEST_CASE("config keys and validation") {
    io::KeyValues kv;
    kv.set("batch_size", "7");
    CHECK_THROWS_AS(TrainConfig::from(kv), ConfigError);
    io::KeyValues unknown;
    unknown.set("learning_rate", "0.1");
    CHECK_THROWS_AS(TrainConfig::from(unknown), ConfigError);
    auto c = small_config();
    c.train_cameras = {0, 2};
    c.no_cam_id = true;
    const auto back = TrainConfig::from(c.to_key_values());
    CHECK(back.to_key_values().str() == c.to_key_values().str());
    CHECK(back.train_cameras == std::vector<int>{0, 2});
  }

  TEST_CASE("balanced batches") {
    const Dataset d = small_dataset();
    std::mt19937_64 rng(3), rng2(3);
    for (int rep = 0; rep < 20; ++rep) {
      const auto idx = sample_batch(d, 32, rng);
      REQUIRE(idx.size() == 32);
      for (int i = 0; i < 16; ++i) CHECK(d.labels[idx[i]] == 1);
      for (int i = 16; i < 32; ++i) CHECK(d.labels[idx[i]] == 0);
      CHECK(sample_batch(d, 32, rng2) == idx);
    }
    Dataset lives = d;
    lives.labels.assign(d.size(), 1);
    CHECK_THROWS_AS(sample_batch(lives, 4, rng), DataError);
  }

  TEST_CASE("augmentation") {
    const Tensor img = random_tensor({1, 3, 16, 16}, 1, 0.0f, 1.0f);
    CHECK(bitwise_equal(apply_augment(img, AugmentParams{}), img));
    AugmentParams flips;
    flips.hflip = flips.vflip = true;
    CHECK(bitwise_equal(apply_augment(apply_augment(img, flips), flips), img));
    AugmentParams h;
    h.hflip = true;
    const Tensor f = apply_augment(img, h);
    CHECK(f.at(0, 1, 3, 0) == img.at(0, 1, 3, 15));
    std::mt19937_64 rng(9);
    int hflips = 0;
    for (int i = 0; i < 400; ++i) {
      const auto p = draw_augment(rng);
      hflips += p.hflip;
      CHECK(std::abs(p.angle_deg) <= 15.0);
      CHECK((p.brightness >= 0.8 && p.brightness <= 1.2));
      CHECK((p.contrast >= 0.8 && p.contrast <= 1.2));
      CHECK((p.saturation >= 0.8 && p.saturation <= 1.2));
    }
    CHECK(hflips > 150);
    CHECK(hflips < 250);
    for (int i = 0; i < 20; ++i) {
      const Tensor a = augment(img, rng);
      for (std::size_t k = 0; k < a.size(); ++k) CHECK((a.data()[k] >= 0.0f && a.data()[k] <= 1.0f));
    }
  }

  TEST_CASE("one gradient step on the anti-spoofing loss decreases it") {
    CameraInvariantModel m(small_config().model_config(3));
    m.init(2);
    const Dataset d = small_dataset();
    const Tensor x = stack(std::span(d.images).subspan(0, 6));
    const std::vector<int> cams{0, 0, 0, 0, 0, 0}, labels{1, 0, 0, 1, 0, 0};
    losses::HyperParams hp;
    hp.lambda1 = 0.0;
    hp.lambda3 = 0.0;
    const auto before = compute_gradients(m, x, cams, labels, hp);
    for (auto& [name, p] : m.parameters())
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value.data()[i] -= 1e-4f * p->grad.data()[i];
    const auto after = compute_gradients(m, x, cams, labels, hp);
    CHECK(after.parts.anti1 < before.parts.anti1);
  }

  TEST_CASE("gradients: camera losses reach trunk_cam; heads match finite differences") {
    CameraInvariantModel m(small_config().model_config(3));
    m.init(4);
    const Dataset d = small_dataset();
    const Tensor x = stack(std::span(d.images).subspan(0, 4));
    const std::vector<int> cams{0, 1, 2, 1}, labels{1, 0, 0, 1};
    losses::HyperParams hp;
    hp.lambda2 = 0.0;
    hp.lambda3 = 0.0;
    compute_gradients(m, x, cams, labels, hp);
    double trunk_cam = 0.0;
    for (auto& [name, p] : m.parameters())
      if (name.rfind("trunk_cam.", 0) == 0)
        for (std::size_t i = 0; i < p->grad.size(); ++i) trunk_cam += std::abs(p->grad.data()[i]);
    CHECK(trunk_cam > 0.0);

    const losses::HyperParams all;
    compute_gradients(m, x, cams, labels, all);
    std::vector<std::pair<std::string, Tensor>> grads;
    for (auto& [name, p] : m.parameters()) grads.emplace_back(name, p->grad);
    // small step: hidden ReLUs put kinks within 1e-3 of some weights
    const float h = 1e-4f;
    int checked = 0;
    auto params = m.parameters();
    for (std::size_t j = 0; j < params.size(); ++j) {
      auto& [name, p] = params[j];
      const bool linear_tail = name.rfind("head_", 0) == 0 || name.rfind("conv_cam.", 0) == 0;
      if (!linear_tail) continue;
      for (std::size_t i = 0; i < p->value.size(); i += 7) {
        const float saved = p->value.data()[i];
        p->value.data()[i] = saved + h;
        const double fp = compute_gradients(m, x, cams, labels, all).total;
        p->value.data()[i] = saved - h;
        const double fm = compute_gradients(m, x, cams, labels, all).total;
        p->value.data()[i] = saved;
        const double fd = (fp - fm) / (2 * h);
        const double an = grads[j].second.data()[i];
        INFO(name, " ", i, " fd ", fd, " an ", an);
        CHECK(std::abs(fd - an) <= 1e-2 * std::abs(fd) + 1e-4);
        ++checked;
      }
    }
    CHECK(checked > 20);
  }

  TEST_CASE("no_cam_id removes the camera sub-network") {
    auto c = small_config();
    c.no_cam_id = true;
    Trainer t(c, {0, 1, 2});
    const Dataset d = small_dataset();
    const auto r = t.step(d);
    CHECK(r.parts.cam_id1 == 0.0);
    CHECK(r.parts.cam_id2 == 0.0);
    CHECK(r.parts.decam == 0.0);
    for (const auto& [name, w] : t.checkpoint().weights) {
      CHECK(name.rfind("trunk_cam.", 0) != 0);
      CHECK(name.rfind("conv_cam.", 0) != 0);
    }
    auto needs_cams = small_config();
    CHECK_THROWS_AS(Trainer(needs_cams, {0}), ConfigError);
  }

  TEST_CASE("checkpoint round trip, truncation, version mismatch") {
    Trainer t(small_config(), {0, 1, 2});
    const Dataset d = small_dataset();
    t.step(d);
    auto ck = t.checkpoint();
    ck.calibration = inference::CameraCalibration{1.25, 0.6, 3};
    const auto path = temp_file("ckpt.bin");
    save_checkpoint(path, ck);
    const auto back = load_checkpoint(path);
    CHECK(back.step == ck.step);
    CHECK(back.cameras == ck.cameras);
    CHECK(back.optimizer_steps == ck.optimizer_steps);
    REQUIRE(back.calibration.has_value());
    CHECK(back.calibration->tau == 1.25);
    REQUIRE(back.weights.size() == ck.weights.size());
    for (std::size_t i = 0; i < ck.weights.size(); ++i) {
      CHECK(back.weights[i].first == ck.weights[i].first);
      CHECK(bitwise_equal(back.weights[i].second, ck.weights[i].second));
    }
    for (const auto& [name, slot] : ck.optimizer) CHECK(back.optimizer.at(name).v == slot.v);
    const Tensor x = stack(std::span(d.images).subspan(0, 2));
    const auto a = t.model().forward_invariant(x);
    const auto b = restore_model(back).forward_invariant(x);
    CHECK(bitwise_equal(a.o_mix, b.o_mix));
    CHECK(bitwise_equal(a.logits_spf, b.logits_spf));
    CHECK(bitwise_equal(t.model().forward_augmentation(x).logits_aug, restore_model(back).forward_augmentation(x).logits_aug));

    const std::string bytes = io::read_text(path);
    const auto cut = temp_file("ckpt_cut.bin");
    io::write_text(cut, bytes.substr(0, bytes.size() / 2));
    try {
      load_checkpoint(cut);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("section") != std::string::npos);
    }
    const auto other = temp_file("ckpt_v9.bin");
    std::string v9 = bytes;
    v9.replace(v9.find("v1"), 2, "v9");
    io::write_text(other, v9);
    try {
      load_checkpoint(other);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      CHECK(msg.find('9') != std::string::npos);
      CHECK(msg.find('1') != std::string::npos);
    }
    CHECK_THROWS_AS(load_checkpoint(temp_file("absent.bin")), MissingArtifact);
    for (const auto& p : {path, cut, other}) std::filesystem::remove(p);
  }

  TEST_CASE("identical seeds give identical checkpoints") {
    const Dataset d = small_dataset();
    auto run = [&](std::uint64_t seed) {
      auto c = small_config();
      c.seed = seed;
      Trainer t(c, {0, 1, 2});
      t.run(d, [](const LogRow&) {});
      const auto path = temp_file("ckpt_seed.bin");
      save_checkpoint(path, t.checkpoint());
      const auto h = io::sha256_file(path);
      std::filesystem::remove(path);
      return h;
    };
    const auto a = run(5);
    CHECK(a == run(5));
    CHECK(a != run(6));
  }

  TEST_CASE("log rows") {
    CHECK(log_header() == "step,lr,l1_cam,l2_cam,l1_anti,l2_anti,l3_anti,decam,total");
    LogRow row;
    row.step = 3;
    row.lr = 0.004;
    const auto line = format_log_row(row);
    CHECK(std::count(line.begin(), line.end(), ',') == 8);
  }

  TEST_CASE("50 desk-scale steps reduce the total loss") {
    synth::SynthConfig cfg;
    Dataset d;
    for (int cam = 0; cam < 3; ++cam)
      for (int s = 0; s < 12; ++s) {
        const auto pai = s % 2 == 0 ? synth::Pai::None : (s % 4 == 1 ? synth::Pai::Print : synth::Pai::Replay);
        d.images.push_back(synth::render_sample(cfg, cam, s, pai));
        d.camera_ids.push_back(cam);
        d.labels.push_back(pai == synth::Pai::None);
        d.pai_types.push_back(synth::pai_name(pai));
        d.sample_ids.push_back(std::to_string(cam * 100 + s));
      }
    auto c = TrainConfig::for_profile("desk");
    c.batch_size = 8;
    c.total_steps = 50;
    c.log_every = 1;
    Trainer t(c, {0, 1, 2});
    std::vector<double> totals;
    t.run(d, [&](const LogRow& r) { totals.push_back(r.result.total); });
    REQUIRE(totals.size() == 50);
    MESSAGE("total loss step 1: " << totals.front() << ", step 50: " << totals.back());
    CHECK(totals.back() < totals.front());
  }
}
