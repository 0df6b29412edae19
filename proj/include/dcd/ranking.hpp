#pragma once

#include "dcd/dataset.hpp"
#include "dcd/models.hpp"
#include "dcd/types.hpp"

#include <unordered_map>
#include <vector>

namespace dcd {

// Candidates ordered best-first, with rank lookup. Rank 0 is the top
// position. Ties in score break toward the smaller id so ranks are total and
// reproducible.
struct RankingList {
  int anchor = -1;
  Side side = Side::User;
  std::vector<int> ordered;
  std::unordered_map<int, int> rank_of;

  // Rank of a candidate, or -1 when it is not in the list.
  int rank(int id) const {
    auto it = rank_of.find(id);
    return it == rank_of.end() ? -1 : it->second;
  }
};

struct CandidatePool {
  int anchor = -1;
  Side side = Side::User;
  std::vector<int> candidates;  // sorted, unique, none observed in train
};

struct PoolConfig {
  int t_teacher = 100;  // <=0 or >= catalog means exhaustive
  int t_student = 100;
  int n_random = 100;
};

RankingList rank_candidates(const ModelParams& p, int anchor, Side side,
                            const std::vector<int>& pool);

// All counterparts the anchor has not interacted with in train.
std::vector<int> unobserved_candidates(const InteractionDataset& ds, Side side, int anchor);

// Union of the teacher's and student's top candidates plus a uniform random
// tail, all drawn from the anchor's unobserved counterparts.
CandidatePool build_pool(const InteractionDataset& ds, const ModelParams& teacher,
                         const ModelParams& student, int anchor, Side side,
                         const PoolConfig& cfg, Rng& rng);

// Exhaustive top-N unobserved items for a user; shorter when fewer exist.
std::vector<int> top_n(const ModelParams& p, int user, const InteractionDataset& ds, int n);

// Rank of one target candidate within the full unobserved ranking, without
// materializing the list. -1 when the target is not a candidate.
int rank_of_candidate(const ModelParams& p, const InteractionDataset& ds, Side side, int anchor,
                      int target);

// Debug dump: "anchor_raw_id: c1,c2,..." per line.
void dump_ranking(std::ostream& out, const InteractionDataset& ds, const RankingList& list);

}  // namespace dcd
