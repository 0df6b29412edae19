#pragma once

#include "dcd/dataset.hpp"
#include "dcd/models.hpp"
#include "dcd/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace dcd {

// 1 when the target sits in the top N (rank 0 is best), else 0.
int hit_at_n(int rank_of_target, int n);

// Truncated reciprocal rank: 1/(rank+1) inside the top N, else 0.
double mrr_at_n(int rank_of_target, int n);

// Leave-one-out report for one model under one split. Per-user values are
// kept so reports can be compared with a paired test.
struct MetricReport {
  std::string method;
  std::uint64_t seed = 0;
  std::string dataset_fingerprint;
  std::vector<int> users;                          // users that have a target item
  std::map<int, std::vector<double>> hit;          // N -> per-user hit@N
  std::map<int, std::vector<double>> mrr;          // N -> per-user M@N
  std::map<std::string, double> extras;            // e.g. discrepancy diagnostics

  double mean_hit(int n) const;
  double mean_mrr(int n) const;
};

// Rank each user's held-out item (test or valid) against every item outside
// the user's train list, exhaustively.
enum class EvalTarget { Test, Valid };
MetricReport evaluate_model(const ModelParams& p, const InteractionDataset& ds,
                            const std::vector<int>& metric_ns, EvalTarget target = EvalTarget::Test);

// Mean |student rank - teacher rank| over the teacher's top-K candidates,
// both ranks taken in the full unobserved ranking, averaged over anchors.
double avg_rank_discrepancy(const ModelParams& teacher, const ModelParams& student,
                            const InteractionDataset& ds, Side side, int k = 50);

// Two-sided paired t-test over per-user differences of one metric.
struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};
TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b);
TTestResult paired_ttest(const MetricReport& a, const MetricReport& b, const std::string& metric);

// Report files: JSON document plus a flat CSV row for plotting.
void save_report(const MetricReport& r, const std::string& json_path,
                 const std::string& csv_path = "");
MetricReport load_report(const std::string& json_path);

}  // namespace dcd
