#include "dcd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace dcd {

double discrepancy_under(int rank_student, int rank_teacher, double mu) {
  if (mu <= 0.0) throw std::invalid_argument("discrepancy: mu must be positive");
  const double gap = mu * static_cast<double>(rank_student - rank_teacher);
  return std::tanh(std::max(gap, 0.0));
}

double discrepancy_over(int rank_student, int rank_teacher, double mu) {
  return discrepancy_under(rank_teacher, rank_student, mu);
}

double relaxed_log_prob(const Vec& head_scores, const Vec& tail_scores) {
  return relaxed_log_prob_grad(head_scores, tail_scores, nullptr, nullptr);
}

double relaxed_log_prob_grad(const Vec& head_scores, const Vec& tail_scores, Vec* dhead,
                             Vec* dtail) {
  const Eigen::Index h = head_scores.size();
  const Eigen::Index l = tail_scores.size();
  if (h == 0) throw std::invalid_argument("relaxed_log_prob: head list is empty");
  if (!head_scores.allFinite() || (l > 0 && !tail_scores.allFinite())) {
    throw NumericalError("relaxed_log_prob: non-finite score");
  }

  double m = head_scores.maxCoeff();
  if (l > 0) m = std::max(m, tail_scores.maxCoeff());

  const Vec eh = (head_scores.array() - m).exp();
  double tail_sum = 0.0;
  Vec et;
  if (l > 0) {
    et = (tail_scores.array() - m).exp();
    tail_sum = et.sum();
  }

  // suffix[k] = sum_{i >= k} exp(s_i - m)
  Vec suffix(h);
  double acc = 0.0;
  for (Eigen::Index k = h - 1; k >= 0; --k) {
    acc += eh(k);
    suffix(k) = acc;
  }

  double logp = 0.0;
  // inv_prefix[k] = sum_{j <= k} 1 / D_j with D_j the k-th factor's denominator.
  Vec inv_prefix(h);
  double inv_acc = 0.0;
  for (Eigen::Index k = 0; k < h; ++k) {
    const double denom = suffix(k) + tail_sum;
    logp += head_scores(k) - m - std::log(denom);
    inv_acc += 1.0 / denom;
    inv_prefix(k) = inv_acc;
  }

  if (dhead != nullptr) {
    dhead->resize(h);
    for (Eigen::Index a = 0; a < h; ++a) (*dhead)(a) = 1.0 - eh(a) * inv_prefix(a);
  }
  if (dtail != nullptr) {
    dtail->resize(l);
    for (Eigen::Index b = 0; b < l; ++b) (*dtail)(b) = -et(b) * inv_prefix(h - 1);
  }
  return logp;
}

std::vector<int> weighted_sample_without_replacement(const std::vector<double>& weights, int m,
                                                     Rng& rng) {
  std::vector<int> active;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] > 0.0) active.push_back(static_cast<int>(k));
  }
  std::vector<int> picked;
  while (static_cast<int>(picked.size()) < m && !active.empty()) {
    double total = 0.0;
    for (int idx : active) total += weights[static_cast<std::size_t>(idx)];
    const double x = rng.uniform() * total;
    double cum = 0.0;
    std::size_t sel = active.size() - 1;  // rounding fallback: last active entry
    for (std::size_t k = 0; k < active.size(); ++k) {
      cum += weights[static_cast<std::size_t>(active[k])];
      if (x < cum) {
        sel = k;
        break;
      }
    }
    picked.push_back(active[sel]);
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(sel));
  }
  return picked;
}

RRDTargets build_rrd_targets(const ModelParams& teacher, const InteractionDataset& ds,
                             const RRDConfig& cfg, std::uint64_t seed, Side side) {
  RRDTargets targets;
  targets.side = side;
  const int n_anchors = side == Side::User ? ds.num_users : ds.num_items;
  targets.by_anchor.resize(static_cast<std::size_t>(n_anchors));
  const char* stream = side == Side::User ? "rrd_targets_user" : "rrd_targets_item";

  for (int a = 0; a < n_anchors; ++a) {
    const std::vector<int> universe = unobserved_candidates(ds, side, a);
    if (universe.empty()) continue;
    RankingList list = rank_candidates(teacher, a, side, universe);

    RRDTarget& t = targets.by_anchor[static_cast<std::size_t>(a)];
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k_interesting),
                                                list.ordered.size());
    t.interesting.assign(list.ordered.begin(), list.ordered.begin() + static_cast<std::ptrdiff_t>(k));

    std::vector<int> remainder(list.ordered.begin() + static_cast<std::ptrdiff_t>(k),
                               list.ordered.end());
    if (cfg.exhaustive_tail || remainder.size() <= static_cast<std::size_t>(cfg.l_uninteresting)) {
      t.uninteresting = std::move(remainder);
    } else {
      // Partial Fisher-Yates: first L slots become a uniform sample.
      Rng rng = fork_stream(seed, stream, static_cast<std::uint64_t>(a));
      for (int j = 0; j < cfg.l_uninteresting; ++j) {
        const std::size_t pick =
            static_cast<std::size_t>(j) +
            rng.uniform_below(remainder.size() - static_cast<std::size_t>(j));
        std::swap(remainder[static_cast<std::size_t>(j)], remainder[pick]);
      }
      remainder.resize(static_cast<std::size_t>(cfg.l_uninteresting));
      t.uninteresting = std::move(remainder);
    }
  }
  return targets;
}

std::uint64_t targets_hash(const RRDTargets& targets) {
  std::uint64_t h = fnv1a("rrd-targets");
  const int side = targets.side == Side::User ? 0 : 1;
  h = fnv1a(&side, sizeof(side), h);
  for (const auto& t : targets.by_anchor) {
    const int sizes[2] = {static_cast<int>(t.interesting.size()),
                          static_cast<int>(t.uninteresting.size())};
    h = fnv1a(sizes, sizeof(sizes), h);
    if (!t.interesting.empty()) {
      h = fnv1a(t.interesting.data(), t.interesting.size() * sizeof(int), h);
    }
    if (!t.uninteresting.empty()) {
      h = fnv1a(t.uninteresting.data(), t.uninteresting.size() * sizeof(int), h);
    }
  }
  return h;
}

CorrectionSample sample_correction(const RankingList& teacher_list,
                                   const RankingList& student_list, double mu, int m_budget,
                                   Rng& rng, bool deterministic) {
  const std::vector<int>& pool = teacher_list.ordered;
  std::vector<double> under_w(pool.size()), over_w(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const int rt = static_cast<int>(k);
    const int rs = student_list.rank(pool[k]);
    if (rs < 0) throw std::invalid_argument("sample_correction: ranking lists differ in pool");
    under_w[k] = discrepancy_under(rs, rt, mu);
    over_w[k] = discrepancy_over(rs, rt, mu);
  }

  auto select = [&](const std::vector<double>& w) {
    std::vector<int> idx;
    if (deterministic) {
      // Largest discrepancy first; ties toward the smaller candidate id.
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (w[k] > 0.0) idx.push_back(static_cast<int>(k));
      }
      std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (w[static_cast<std::size_t>(a)] != w[static_cast<std::size_t>(b)]) {
          return w[static_cast<std::size_t>(a)] > w[static_cast<std::size_t>(b)];
        }
        return pool[static_cast<std::size_t>(a)] < pool[static_cast<std::size_t>(b)];
      });
      if (static_cast<int>(idx.size()) > m_budget) idx.resize(static_cast<std::size_t>(m_budget));
    } else {
      idx = weighted_sample_without_replacement(w, m_budget, rng);
    }
    std::sort(idx.begin(), idx.end());  // teacher-rank ascending
    return idx;
  };

  CorrectionSample s;
  for (int k : select(under_w)) {
    s.underestimated.push_back(pool[static_cast<std::size_t>(k)]);
    s.under_teacher_rank.push_back(k);
  }
  for (int k : select(over_w)) s.overestimated.push_back(pool[static_cast<std::size_t>(k)]);
  return s;
}

CorrectionSamples build_correction_samples(const InteractionDataset& ds,
                                           const ModelParams& teacher,
                                           const ModelParams& student, Side side,
                                           const CorrectionConfig& cfg, std::uint64_t seed,
                                           int epoch) {
  CorrectionSamples out;
  out.side = side;
  out.epoch = epoch;
  const int n_anchors = side == Side::User ? ds.num_users : ds.num_items;
  out.by_anchor.resize(static_cast<std::size_t>(n_anchors));
  const char* stream = side == Side::User ? "correction_user" : "correction_item";

  for (int a = 0; a < n_anchors; ++a) {
    Rng rng = fork_stream(seed, stream,
                          (static_cast<std::uint64_t>(epoch) << 32) ^ static_cast<std::uint64_t>(a));
    CandidatePool pool = build_pool(ds, teacher, student, a, side, cfg.pool, rng);
    if (pool.candidates.size() < 2) continue;
    const RankingList t_list = rank_candidates(teacher, a, side, pool.candidates);
    const RankingList s_list = rank_candidates(student, a, side, pool.candidates);
    out.by_anchor[static_cast<std::size_t>(a)] =
        sample_correction(t_list, s_list, cfg.mu, cfg.m_budget, rng, cfg.deterministic);
  }
  return out;
}

std::uint64_t samples_hash(const CorrectionSamples& samples) {
  std::uint64_t h = fnv1a("correction-samples");
  for (const auto& s : samples.by_anchor) {
    const int sizes[2] = {static_cast<int>(s.underestimated.size()),
                          static_cast<int>(s.overestimated.size())};
    h = fnv1a(sizes, sizeof(sizes), h);
    if (!s.underestimated.empty()) {
      h = fnv1a(s.underestimated.data(), s.underestimated.size() * sizeof(int), h);
    }
    if (!s.overestimated.empty()) {
      h = fnv1a(s.overestimated.data(), s.overestimated.size() * sizeof(int), h);
    }
  }
  return h;
}

void dump_correction_samples(std::ostream& out, const InteractionDataset& ds,
                             const CorrectionSamples& samples) {
  const auto& anchor_raw = samples.side == Side::User ? ds.user_raw : ds.item_raw;
  const auto& cand_raw = samples.side == Side::User ? ds.item_raw : ds.user_raw;
  for (std::size_t a = 0; a < samples.by_anchor.size(); ++a) {
    const CorrectionSample& s = samples.by_anchor[a];
    if (s.underestimated.empty() && s.overestimated.empty()) continue;
    out << anchor_raw[a] << " under:";
    for (std::size_t k = 0; k < s.underestimated.size(); ++k) {
      out << (k ? "," : " ") << cand_raw[static_cast<std::size_t>(s.underestimated[k])] << '@'
          << s.under_teacher_rank[k];
    }
    out << " over:";
    for (std::size_t k = 0; k < s.overestimated.size(); ++k) {
      out << (k ? "," : " ") << cand_raw[static_cast<std::size_t>(s.overestimated[k])];
    }
    out << '\n';
  }
}

namespace {

// Shared core of the listwise losses: mean -log p over anchors with a
// non-empty head, gradients chained into the student parameters.
double mean_relaxed_nll(const ModelParams& student, Side side,
                        const std::vector<int>& batch_anchors,
                        const std::vector<const std::vector<int>*>& heads,
                        const std::vector<const std::vector<int>*>& tails,
                        GradientBuffer& grads) {
  std::size_t counted = 0;
  for (const auto* head : heads) {
    if (head != nullptr && !head->empty()) ++counted;
  }
  if (counted == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(counted);

  double loss = 0.0;
  Vec dhead, dtail;
  static const std::vector<int> kEmpty;
  for (std::size_t b = 0; b < batch_anchors.size(); ++b) {
    const std::vector<int>& head = heads[b] != nullptr ? *heads[b] : kEmpty;
    if (head.empty()) continue;
    const std::vector<int>& tail = tails[b] != nullptr ? *tails[b] : kEmpty;
    const int anchor = batch_anchors[b];

    const Vec head_scores = score_candidates(student, side, anchor, head);
    const Vec tail_scores = score_candidates(student, side, anchor, tail);
    loss -= scale * relaxed_log_prob_grad(head_scores, tail_scores, &dhead, &dtail);

    for (std::size_t k = 0; k < head.size(); ++k) {
      const int u = side == Side::User ? anchor : head[k];
      const int i = side == Side::User ? head[k] : anchor;
      accumulate_score_grad(student, u, i, -scale * dhead(static_cast<Eigen::Index>(k)), grads);
    }
    for (std::size_t k = 0; k < tail.size(); ++k) {
      const int u = side == Side::User ? anchor : tail[k];
      const int i = side == Side::User ? tail[k] : anchor;
      accumulate_score_grad(student, u, i, -scale * dtail(static_cast<Eigen::Index>(k)), grads);
    }
  }
  return loss;
}

}  // namespace

double rrd_loss(const ModelParams& student, const RRDTargets& targets,
                const std::vector<int>& batch_anchors, GradientBuffer& grads) {
  if (batch_anchors.empty()) throw std::invalid_argument("rrd_loss: empty batch");
  std::vector<const std::vector<int>*> heads, tails;
  heads.reserve(batch_anchors.size());
  tails.reserve(batch_anchors.size());
  for (int a : batch_anchors) {
    const RRDTarget& t = targets.by_anchor.at(static_cast<std::size_t>(a));
    heads.push_back(&t.interesting);
    tails.push_back(&t.uninteresting);
  }
  return mean_relaxed_nll(student, targets.side, batch_anchors, heads, tails, grads);
}

double correction_loss(const ModelParams& student, const CorrectionSamples& samples,
                       const std::vector<int>& batch_anchors, GradientBuffer& grads) {
  if (batch_anchors.empty()) throw std::invalid_argument("correction_loss: empty batch");
  std::vector<const std::vector<int>*> heads, tails;
  heads.reserve(batch_anchors.size());
  tails.reserve(batch_anchors.size());
  for (int a : batch_anchors) {
    const CorrectionSample& s = samples.by_anchor.at(static_cast<std::size_t>(a));
    heads.push_back(&s.underestimated);
    tails.push_back(&s.overestimated);
  }
  return mean_relaxed_nll(student, samples.side, batch_anchors, heads, tails, grads);
}

double ucd_loss(const ModelParams& student, const CorrectionSamples& samples,
                const std::vector<int>& batch_users, GradientBuffer& grads) {
  if (samples.side != Side::User) throw std::invalid_argument("ucd_loss: samples are not user-side");
  return correction_loss(student, samples, batch_users, grads);
}

double icd_loss(const ModelParams& student, const CorrectionSamples& samples,
                const std::vector<int>& batch_items, GradientBuffer& grads) {
  if (samples.side != Side::Item) throw std::invalid_argument("icd_loss: samples are not item-side");
  return correction_loss(student, samples, batch_items, grads);
}

}  // namespace dcd
