#include "dcd/eval.hpp"

#include "dcd/ranking.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace dcd {

int hit_at_n(int rank_of_target, int n) { return rank_of_target >= 0 && rank_of_target < n ? 1 : 0; }

double mrr_at_n(int rank_of_target, int n) {
  if (rank_of_target < 0 || rank_of_target >= n) return 0.0;
  return 1.0 / static_cast<double>(rank_of_target + 1);
}

double MetricReport::mean_hit(int n) const {
  const auto& v = hit.at(n);
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double MetricReport::mean_mrr(int n) const {
  const auto& v = mrr.at(n);
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

MetricReport evaluate_model(const ModelParams& p, const InteractionDataset& ds,
                            const std::vector<int>& metric_ns, EvalTarget target) {
  check_matches(p, ds);
  MetricReport rep;
  rep.dataset_fingerprint = ds.fingerprint();
  for (int n : metric_ns) {
    rep.hit[n] = {};
    rep.mrr[n] = {};
  }
  const auto& targets = target == EvalTarget::Test ? ds.test_item : ds.valid_item;
  for (int u = 0; u < ds.num_users; ++u) {
    const int item = targets[u];
    if (item < 0) continue;
    const int rank = rank_of_candidate(p, ds, Side::User, u, item);
    rep.users.push_back(u);
    for (int n : metric_ns) {
      rep.hit[n].push_back(static_cast<double>(hit_at_n(rank, n)));
      rep.mrr[n].push_back(mrr_at_n(rank, n));
    }
  }
  return rep;
}

double avg_rank_discrepancy(const ModelParams& teacher, const ModelParams& student,
                            const InteractionDataset& ds, Side side, int k) {
  check_matches(teacher, ds);
  check_matches(student, ds);
  const int n_anchors = side == Side::User ? ds.num_users : ds.num_items;
  double total = 0.0;
  std::size_t counted = 0;
  for (int a = 0; a < n_anchors; ++a) {
    const std::vector<int> universe = unobserved_candidates(ds, side, a);
    if (universe.empty()) continue;
    const RankingList t_list = rank_candidates(teacher, a, side, universe);
    const RankingList s_list = rank_candidates(student, a, side, universe);
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                  t_list.ordered.size());
    double acc = 0.0;
    for (std::size_t r = 0; r < top; ++r) {
      acc += std::abs(s_list.rank(t_list.ordered[r]) - static_cast<int>(r));
    }
    total += acc / static_cast<double>(top);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

TTestResult paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_ttest: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired_ttest: need at least 2 paired observations");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult res;
  res.n = n;
  if (sd == 0.0) {
    res.t = mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity() * (mean > 0 ? 1 : -1);
    res.p = mean == 0.0 ? 1.0 : 0.0;
    return res;
  }
  res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  res.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(res.t)));
  return res;
}

TTestResult paired_ttest(const MetricReport& a, const MetricReport& b, const std::string& metric) {
  if (a.dataset_fingerprint != b.dataset_fingerprint) {
    throw DataError("paired_ttest: reports come from different dataset splits");
  }
  if (a.users != b.users) throw DataError("paired_ttest: reports cover different user sets");
  const bool is_hit = metric.rfind("H@", 0) == 0;
  const bool is_mrr = metric.rfind("M@", 0) == 0;
  if (!is_hit && !is_mrr) throw std::invalid_argument("paired_ttest: metric must be H@N or M@N");
  const int n = std::stoi(metric.substr(2));
  const auto& va = is_hit ? a.hit.at(n) : a.mrr.at(n);
  const auto& vb = is_hit ? b.hit.at(n) : b.mrr.at(n);
  return paired_ttest(va, vb);
}

void save_report(const MetricReport& r, const std::string& json_path, const std::string& csv_path) {
  nlohmann::json j;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["dataset_fingerprint"] = r.dataset_fingerprint;
  j["num_users"] = r.users.size();
  j["users"] = r.users;
  nlohmann::json metrics;
  for (const auto& [n, v] : r.hit) {
    metrics["H@" + std::to_string(n)] = r.mean_hit(n);
    j["per_user"]["H@" + std::to_string(n)] = v;
  }
  for (const auto& [n, v] : r.mrr) {
    metrics["M@" + std::to_string(n)] = r.mean_mrr(n);
    j["per_user"]["M@" + std::to_string(n)] = v;
  }
  for (const auto& [k, v] : r.extras) metrics[k] = v;
  j["metrics"] = metrics;

  std::ofstream out(json_path);
  if (!out) throw DataError("cannot write report: " + json_path);
  out << j.dump(2) << '\n';

  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw DataError("cannot write report csv: " + csv_path);
    csv << "method,seed";
    for (const auto& [k, v] : metrics.items()) csv << ',' << k;
    csv << '\n' << r.method << ',' << r.seed;
    csv.setf(std::ios::fixed);
    csv.precision(6);
    for (const auto& [k, v] : metrics.items()) csv << ',' << v.get<double>();
    csv << '\n';
  }
}

MetricReport load_report(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open report: " + json_path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError("corrupt report json: " + json_path);

  MetricReport r;
  r.method = j.value("method", "");
  r.seed = j.value("seed", std::uint64_t{0});
  r.dataset_fingerprint = j.value("dataset_fingerprint", "");
  r.users = j.value("users", std::vector<int>{});
  if (j.contains("per_user")) {
    for (const auto& [key, v] : j["per_user"].items()) {
      const int n = std::stoi(key.substr(2));
      if (key.rfind("H@", 0) == 0) r.hit[n] = v.get<std::vector<double>>();
      if (key.rfind("M@", 0) == 0) r.mrr[n] = v.get<std::vector<double>>();
    }
  }
  if (j.contains("metrics")) {
    for (const auto& [key, v] : j["metrics"].items()) {
      if (key.rfind("H@", 0) != 0 && key.rfind("M@", 0) != 0) r.extras[key] = v.get<double>();
    }
  }
  return r;
}

}  // namespace dcd
