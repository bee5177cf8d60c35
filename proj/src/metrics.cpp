#include "caminv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "caminv/errors.hpp"

namespace caminv::metrics {
namespace {

void require_both_classes(std::span<const ScoreRecord> records) {
  bool live = false, spoof = false;
  for (const auto& r : records) {
    if (!std::isfinite(r.score)) throw DataError("non-finite score for sample " + r.sample_id);
    (r.label == 1 ? live : spoof) = true;
  }
  if (!live || !spoof) throw DataError("metrics need at least one live and one spoof record");
}

}  // namespace

std::vector<RocPoint> roc_sweep(std::span<const ScoreRecord> records) {
  require_both_classes(records);
  std::vector<double> lives, spoofs;
  for (const auto& r : records) (r.label == 1 ? lives : spoofs).push_back(r.score);
  std::sort(lives.begin(), lives.end());
  std::sort(spoofs.begin(), spoofs.end());

  std::vector<double> thresholds;
  thresholds.reserve(records.size() + 2);
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  for (const auto& r : records) thresholds.push_back(r.score);
  std::sort(thresholds.begin() + 1, thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  // Counts of scores strictly below t via a merge over the sorted lists.
  std::vector<RocPoint> out;
  out.reserve(thresholds.size());
  std::size_t li = 0, si = 0;
  const double nl = static_cast<double>(lives.size());
  const double ns = static_cast<double>(spoofs.size());
  for (double t : thresholds) {
    while (li < lives.size() && lives[li] < t) ++li;
    while (si < spoofs.size() && spoofs[si] < t) ++si;
    out.push_back({t, static_cast<double>(spoofs.size() - si) / ns, static_cast<double>(li) / nl});
  }
  return out;
}

EerResult eer(std::span<const ScoreRecord> records) {
  const auto roc = roc_sweep(records);
  const RocPoint* best = &roc.front();
  for (const auto& p : roc) {
    // Strict comparison keeps the smallest threshold on ties.
    if (std::abs(p.far - p.frr) < std::abs(best->far - best->frr)) best = &p;
  }
  return {(best->far + best->frr) / 2.0, best->threshold, best->far, best->frr};
}

double hter(double far, double frr) { return (far + frr) / 2.0; }

RocPoint rates_at(std::span<const ScoreRecord> records, double threshold) {
  require_both_classes(records);
  std::size_t lives = 0, spoofs = 0, rejected = 0, accepted = 0;
  for (const auto& r : records) {
    const bool live_pred = r.score >= threshold;
    if (r.label == 1) {
      ++lives;
      if (!live_pred) ++rejected;
    } else {
      ++spoofs;
      if (live_pred) ++accepted;
    }
  }
  return {threshold, static_cast<double>(accepted) / spoofs, static_cast<double>(rejected) / lives};
}

double hter_at(std::span<const ScoreRecord> records, double threshold) {
  const auto p = rates_at(records, threshold);
  return hter(p.far, p.frr);
}

PresentationRates apcer_bpcer_acer(std::span<const ScoreRecord> records, double threshold) {
  require_both_classes(records);
  std::map<std::string, std::pair<std::size_t, std::size_t>> attacks;  // missed, total
  std::size_t bona = 0, bona_rejected = 0;
  for (const auto& r : records) {
    const bool attack_pred = r.score < threshold;
    if (r.label == 1) {
      ++bona;
      if (attack_pred) ++bona_rejected;
    } else {
      if (r.pai_type.empty() || r.pai_type == "none") {
        throw DataError("spoof record " + r.sample_id + " has no PAI type");
      }
      auto& [missed, total] = attacks[r.pai_type];
      ++total;
      if (!attack_pred) ++missed;
    }
  }
  PresentationRates out;
  for (const auto& [pai, counts] : attacks) {
    const double rate = static_cast<double>(counts.first) / counts.second;
    out.per_pai[pai] = rate;
    out.apcer = std::max(out.apcer, rate);
  }
  out.bpcer = static_cast<double>(bona_rejected) / bona;
  out.acer = (out.apcer + out.bpcer) / 2.0;
  return out;
}

MetricsReport evaluate(std::span<const ScoreRecord> dev, std::span<const ScoreRecord> test) {
  MetricsReport r;
  const auto e = eer(dev);
  r.eer = e.eer;
  r.threshold = e.threshold;
  const auto p = rates_at(test, e.threshold);
  r.far = p.far;
  r.frr = p.frr;
  r.hter = hter(p.far, p.frr);
  r.rates = apcer_bpcer_acer(test, e.threshold);
  return r;
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "EER (dev)        " << r.eer << "\n"
     << "threshold        " << r.threshold << "\n"
     << "FAR (test)       " << r.far << "\n"
     << "FRR (test)       " << r.frr << "\n"
     << "HTER (test)      " << r.hter << "\n"
     << "APCER (worst)    " << r.rates.apcer << "\n";
  for (const auto& [pai, v] : r.rates.per_pai) os << "  APCER " << pai << "  " << v << "\n";
  os << "BPCER            " << r.rates.bpcer << "\n"
     << "ACER             " << r.rates.acer << "\n";
  return os.str();
}

std::string report_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << "metric,value\n"
     << "eer," << r.eer << "\n"
     << "threshold," << r.threshold << "\n"
     << "far," << r.far << "\n"
     << "frr," << r.frr << "\n"
     << "hter," << r.hter << "\n"
     << "apcer," << r.rates.apcer << "\n";
  for (const auto& [pai, v] : r.rates.per_pai) os << "apcer_" << pai << "," << v << "\n";
  os << "bpcer," << r.rates.bpcer << "\n"
     << "acer," << r.rates.acer << "\n";
  return os.str();
}

}  // namespace caminv::metrics
