#pragma once

#include "dcd/dataset.hpp"
#include "dcd/models.hpp"
#include "dcd/ranking.hpp"
#include "dcd/types.hpp"

#include <iosfwd>
#include <vector>

namespace dcd {

// Saturated rank-gap errors. The student underestimates a candidate when it
// ranks it worse (larger rank value) than the teacher; overestimation is the
// opposite. Both are tanh(max(mu * gap, 0)), so they live in [0, 1) and are
// zero for non-positive gaps.
double discrepancy_under(int rank_student, int rank_teacher, double mu);
double discrepancy_over(int rank_student, int rank_teacher, double mu);

// Log of the relaxed permutation probability of an ordered head list given
// per-candidate scores: sum_k [ s_k - log( sum_{i >= k} exp s_i +
// sum_j exp t_j ) ]. Every factor is stabilized by max subtraction; the
// suffix sums make the whole thing O(|head| + |tail|). Tail items only push
// the denominators up, so maximizing the probability ranks the whole head
// above the tail without ordering the tail internally.
double relaxed_log_prob(const Vec& head_scores, const Vec& tail_scores);

// Same value, plus gradients w.r.t. the head/tail scores (either may be null).
double relaxed_log_prob_grad(const Vec& head_scores, const Vec& tail_scores, Vec* dhead,
                             Vec* dtail);

// m draws without replacement, probability proportional to weight.
// Zero-weight entries are never drawn; fewer than m positive entries means
// all of them come back. Returns indices into `weights` in draw order.
std::vector<int> weighted_sample_without_replacement(const std::vector<double>& weights, int m,
                                                     Rng& rng);

// ---- RRD targets (fixed for a whole run) ----

struct RRDTarget {
  std::vector<int> interesting;    // teacher's top-K, teacher order
  std::vector<int> uninteresting;  // sampled from the remaining candidates
};

struct RRDTargets {
  Side side = Side::User;
  std::vector<RRDTarget> by_anchor;  // indexed by dense anchor id
};

struct RRDConfig {
  int k_interesting = 40;
  int l_uninteresting = 40;
  bool exhaustive_tail = false;  // keep every non-head candidate in the tail
};

RRDTargets build_rrd_targets(const ModelParams& teacher, const InteractionDataset& ds,
                             const RRDConfig& cfg, std::uint64_t seed, Side side = Side::User);

std::uint64_t targets_hash(const RRDTargets& targets);

// ---- Correction samples (refreshed on the resample schedule) ----

struct CorrectionSample {
  std::vector<int> underestimated;       // teacher-rank ascending
  std::vector<int> under_teacher_rank;   // parallel to underestimated
  std::vector<int> overestimated;        // teacher-rank ascending
};

struct CorrectionSamples {
  Side side = Side::User;
  int epoch = -1;  // epoch the samples were drawn at
  std::vector<CorrectionSample> by_anchor;
};

// Draw the discrepant candidates for one anchor from a shared candidate pool
// ranked by both models. deterministic=true replaces the sampler with the
// top-m_budget by discrepancy (the "w/o Sampling" ablation).
CorrectionSample sample_correction(const RankingList& teacher_list,
                                   const RankingList& student_list, double mu, int m_budget,
                                   Rng& rng, bool deterministic = false);

struct CorrectionConfig {
  double mu = 1e-3;
  int m_budget = 40;
  PoolConfig pool;
  bool deterministic = false;
};

CorrectionSamples build_correction_samples(const InteractionDataset& ds,
                                           const ModelParams& teacher,
                                           const ModelParams& student, Side side,
                                           const CorrectionConfig& cfg, std::uint64_t seed,
                                           int epoch);

std::uint64_t samples_hash(const CorrectionSamples& samples);

// Line-oriented dump (per anchor: M_l with teacher ranks, then M_h).
void dump_correction_samples(std::ostream& out, const InteractionDataset& ds,
                             const CorrectionSamples& samples);

// ---- Listwise losses ----
// Each returns the mean negative relaxed log-probability over the batch
// anchors that carry a non-empty head list, and accumulates analytic
// gradients w.r.t. the student parameters. Anchors with an empty head
// contribute nothing and are excluded from the mean's denominator; an
// all-empty batch yields 0.

double rrd_loss(const ModelParams& student, const RRDTargets& targets,
                const std::vector<int>& batch_anchors, GradientBuffer& grads);

double correction_loss(const ModelParams& student, const CorrectionSamples& samples,
                       const std::vector<int>& batch_anchors, GradientBuffer& grads);

// User-side and item-side corrections are the same computation on opposite
// sides; the named wrappers guard the side.
double ucd_loss(const ModelParams& student, const CorrectionSamples& samples,
                const std::vector<int>& batch_users, GradientBuffer& grads);
double icd_loss(const ModelParams& student, const CorrectionSamples& samples,
                const std::vector<int>& batch_items, GradientBuffer& grads);

}  // namespace dcd
