#pragma once

// Biometric error rates. A sample is accepted as live iff score >= threshold.

#include <map>
#include <span>
#include <string>
#include <vector>

namespace caminv::metrics {

struct ScoreRecord {
  std::string sample_id;
  double score = 0.0;  // higher = more live
  int label = 0;       // 1 = live
  std::string pai_type = "none";
};

struct RocPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

struct PresentationRates {
  double apcer = 0.0;  // worst PAI type
  std::map<std::string, double> per_pai;
  double bpcer = 0.0;
  double acer = 0.0;
};

struct MetricsReport {
  double eer = 0.0;
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
  double hter = 0.0;
  PresentationRates rates;
};

// Thresholds: -inf, every distinct score ascending, +inf.
// Throws DataError unless both classes are present.
std::vector<RocPoint> roc_sweep(std::span<const ScoreRecord> records);
EerResult eer(std::span<const ScoreRecord> records);

double hter(double far, double frr);
// (FAR, FRR) at a fixed threshold.
RocPoint rates_at(std::span<const ScoreRecord> records, double threshold);
double hter_at(std::span<const ScoreRecord> records, double threshold);

PresentationRates apcer_bpcer_acer(std::span<const ScoreRecord> records, double threshold);

// Threshold from the dev records, rates on the test records.
MetricsReport evaluate(std::span<const ScoreRecord> dev, std::span<const ScoreRecord> test);

std::string format_report(const MetricsReport& r);
std::string report_csv(const MetricsReport& r);

}  // namespace caminv::metrics
