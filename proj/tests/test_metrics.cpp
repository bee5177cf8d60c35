#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "caminv/errors.hpp"
#include "caminv/metrics.hpp"
#include "doctest.h"

using namespace caminv;
using namespace caminv::metrics;

namespace {

std::vector<ScoreRecord> make(const std::vector<double>& lives, const std::vector<double>& spoofs,
                              const std::vector<std::string>& pais = {}) {
  std::vector<ScoreRecord> r;
  for (std::size_t i = 0; i < lives.size(); ++i) r.push_back({"l" + std::to_string(i), lives[i], 1, "none"});
  for (std::size_t i = 0; i < spoofs.size(); ++i) {
    r.push_back({"s" + std::to_string(i), spoofs[i], 0, pais.empty() ? "print" : pais[i]});
  }
  return r;
}

// Exhaustive counting oracle.
struct Oracle {
  static std::pair<double, double> rates(const std::vector<ScoreRecord>& r, double t) {
    double fa = 0, fr = 0, ns = 0, nl = 0;
    for (const auto& x : r) {
      if (x.label == 1) {
        nl += 1;
        fr += !(x.score >= t);
      } else {
        ns += 1;
        fa += x.score >= t;
      }
    }
    return {fa / ns, fr / nl};
  }
  static std::tuple<double, double, double, double> eer(const std::vector<ScoreRecord>& r) {
    std::set<double> ts{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (const auto& x : r) ts.insert(x.score);
    double best_t = 0, best_gap = 2, far = 0, frr = 0;
    for (double t : ts) {  // ascending, so strict < keeps the smallest on ties
      const auto [a, b] = rates(r, t);
      if (std::abs(a - b) < best_gap) {
        best_gap = std::abs(a - b);
        best_t = t;
        far = a;
        frr = b;
      }
    }
    return {(far + frr) / 2, best_t, far, frr};
  }
  static std::tuple<double, double, double> apcer_bpcer_acer(const std::vector<ScoreRecord>& r, double t) {
    std::map<std::string, std::pair<double, double>> per;
    double bona = 0, rej = 0;
    for (const auto& x : r) {
      if (x.label == 1) {
        bona += 1;
        rej += x.score < t;
      } else {
        per[x.pai_type].second += 1;
        per[x.pai_type].first += x.score >= t;
      }
    }
    double apcer = 0;
    for (auto& [k, v] : per) apcer = std::max(apcer, v.first / v.second);
    return {apcer, rej / bona, (apcer + rej / bona) / 2};
  }
};

std::vector<ScoreRecord> random_records(int n, std::uint64_t seed, bool quantized = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ScoreRecord> r;
  for (int i = 0; i < n; ++i) {
    double s = u(rng);
    if (quantized) s = std::round(s * 20) / 20;  // forces ties
    const int label = u(rng) < 0.4;
    r.push_back({"r" + std::to_string(i), s, label, label ? "none" : (u(rng) < 0.5 ? "print" : "replay")});
  }
  r[0].label = 1;
  r[0].pai_type = "none";
  r[1].label = 0;
  r[1].pai_type = "replay";
  return r;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("ROC sweep sentinels and monotonicity") {
    const auto r = make({0.9, 0.8, 0.4}, {0.6, 0.2, 0.1});
    const auto roc = roc_sweep(r);
    CHECK(roc.front().threshold == -std::numeric_limits<double>::infinity());
    CHECK(roc.front().far == 1.0);
    CHECK(roc.front().frr == 0.0);
    CHECK(roc.back().far == 0.0);
    CHECK(roc.back().frr == 1.0);
    for (std::size_t i = 1; i < roc.size(); ++i) {
      CHECK(roc[i].far <= roc[i - 1].far);
      CHECK(roc[i].frr >= roc[i - 1].frr);
    }
    CHECK(roc.size() == 8);
  }

  TEST_CASE("ROC sweep equals exhaustive enumeration") {
    const auto r = random_records(50, 1);
    for (const auto& p : roc_sweep(r)) {
      const auto [far, frr] = Oracle::rates(r, p.threshold);
      CHECK(p.far == far);
      CHECK(p.frr == frr);
    }
  }

  TEST_CASE("EER worked examples") {
    CHECK(eer(make({0.9, 0.8}, {0.1, 0.2})).eer == 0.0);
    const auto e = eer(make({0.9, 0.8, 0.4}, {0.6, 0.2, 0.1}));
    CHECK(e.eer == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(e.threshold > 0.4);
    CHECK(e.threshold <= 0.6);
    auto twice = make({0.9, 0.8, 0.4}, {0.6, 0.2, 0.1});
    const auto copy = twice;
    twice.insert(twice.end(), copy.begin(), copy.end());
    CHECK(eer(twice).eer == e.eer);
    CHECK(eer(twice).threshold == e.threshold);
  }

  TEST_CASE("HTER") {
    CHECK(hter(0.2, 0.1) == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(hter(0.0, 0.0) == 0.0);
    const auto r = random_records(20, 2);
    const auto [far, frr] = Oracle::rates(r, 0.5);
    CHECK(hter_at(r, 0.5) == (far + frr) / 2);
  }

  TEST_CASE("APCER, BPCER, ACER worked example") {
    std::vector<double> lives(20, 0.9), spoofs;
    lives[0] = 0.1;
    std::vector<std::string> pais;
    for (int i = 0; i < 10; ++i) {
      spoofs.push_back(i == 0 ? 0.8 : 0.2);
      pais.push_back("print");
    }
    for (int i = 0; i < 10; ++i) {
      spoofs.push_back(i < 2 ? 0.8 : 0.2);
      pais.push_back("replay");
    }
    const auto r = apcer_bpcer_acer(make(lives, spoofs, pais), 0.5);
    CHECK(r.per_pai.at("print") == doctest::Approx(0.1));
    CHECK(r.per_pai.at("replay") == doctest::Approx(0.2));
    CHECK(r.apcer == doctest::Approx(0.2));
    CHECK(r.bpcer == doctest::Approx(0.05));
    CHECK(r.acer == doctest::Approx(0.125));
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(roc_sweep(make({0.1, 0.2}, {})), DataError);
    CHECK_THROWS_AS(eer(make({}, {0.3})), DataError);
    auto bad = make({0.9}, {0.2});
    bad[1].pai_type = "none";
    CHECK_THROWS_AS(apcer_bpcer_acer(bad, 0.5), DataError);
  }

  TEST_CASE("1000 random records match the oracle exactly") {
    for (bool quantized : {false, true}) {
      const auto r = random_records(1000, quantized ? 4 : 3, quantized);
      const auto e = eer(r);
      const auto [oe, ot, ofar, ofrr] = Oracle::eer(r);
      CHECK(std::abs(e.eer - oe) <= 1e-12);
      CHECK(e.threshold == ot);
      CHECK(std::abs(hter_at(r, e.threshold) - (ofar + ofrr) / 2) <= 1e-12);
      const auto p = apcer_bpcer_acer(r, e.threshold);
      const auto [oa, ob, oc] = Oracle::apcer_bpcer_acer(r, e.threshold);
      CHECK(std::abs(p.apcer - oa) <= 1e-12);
      CHECK(std::abs(p.bpcer - ob) <= 1e-12);
      CHECK(std::abs(p.acer - oc) <= 1e-12);
    }
  }

  TEST_CASE("invariant to monotone transforms and record order") {
    const auto r = random_records(200, 5);
    auto t = r;
    for (auto& x : t) x.score = std::exp(3.0 * x.score) - 7.0;
    auto shuffled = r;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(6));
    const auto a = eer(r), b = eer(t), c = eer(shuffled);
    CHECK(a.eer == b.eer);
    CHECK(a.eer == c.eer);
    CHECK(std::exp(3.0 * a.threshold) - 7.0 == doctest::Approx(b.threshold));
    const auto pa = apcer_bpcer_acer(r, a.threshold), pb = apcer_bpcer_acer(t, b.threshold);
    CHECK(pa.acer == pb.acer);
  }

  TEST_CASE("evaluate fixes the threshold on dev") {
    const auto dev = random_records(100, 7), test = random_records(100, 8);
    const auto rep = evaluate(dev, test);
    CHECK(rep.threshold == eer(dev).threshold);
    CHECK(rep.hter == (rep.far + rep.frr) / 2);
    CHECK(rep.rates.acer == (rep.rates.apcer + rep.rates.bpcer) / 2);
    for (double v : {rep.eer, rep.far, rep.frr, rep.hter, rep.rates.apcer, rep.rates.bpcer, rep.rates.acer}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    const auto text = format_report(rep);
    for (const char* key : {"EER", "HTER", "APCER", "BPCER", "ACER"}) CHECK(text.find(key) != std::string::npos);
  }
}
