#include "dcd/ranking.hpp"

#include <algorithm>
#include <ostream>

namespace dcd {

namespace {

// Sort candidate indices by (score desc, id asc).
std::vector<int> order_by_score(const std::vector<int>& ids, const Vec& scores) {
  std::vector<int> idx(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) idx[k] = static_cast<int>(k);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
  });
  std::vector<int> ordered(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) ordered[k] = ids[static_cast<std::size_t>(idx[k])];
  return ordered;
}

std::vector<int> top_of(const ModelParams& p, Side side, int anchor,
                        const std::vector<int>& candidates, int n) {
  if (n <= 0) return {};
  const Vec scores = score_candidates(p, side, anchor, candidates);
  std::vector<int> ordered = order_by_score(candidates, scores);
  if (static_cast<int>(ordered.size()) > n) ordered.resize(static_cast<std::size_t>(n));
  return ordered;
}

}  // namespace

RankingList rank_candidates(const ModelParams& p, int anchor, Side side,
                            const std::vector<int>& pool) {
  if (pool.empty()) throw std::invalid_argument("rank_candidates: empty candidate pool");
  RankingList list;
  list.anchor = anchor;
  list.side = side;
  const Vec scores = score_candidates(p, side, anchor, pool);
  list.ordered = order_by_score(pool, scores);
  list.rank_of.reserve(list.ordered.size());
  for (std::size_t k = 0; k < list.ordered.size(); ++k) {
    list.rank_of.emplace(list.ordered[k], static_cast<int>(k));
  }
  return list;
}

std::vector<int> unobserved_candidates(const InteractionDataset& ds, Side side, int anchor) {
  const int n = side == Side::User ? ds.num_items : ds.num_users;
  const auto& observed =
      side == Side::User ? ds.train_by_user[anchor] : ds.train_by_item[anchor];
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n) - observed.size());
  std::size_t k = 0;
  for (int c = 0; c < n; ++c) {
    while (k < observed.size() && observed[k] < c) ++k;
    if (k < observed.size() && observed[k] == c) continue;
    out.push_back(c);
  }
  return out;
}

CandidatePool build_pool(const InteractionDataset& ds, const ModelParams& teacher,
                         const ModelParams& student, int anchor, Side side,
                         const PoolConfig& cfg, Rng& rng) {
  CandidatePool pool;
  pool.anchor = anchor;
  pool.side = side;

  const std::vector<int> universe = unobserved_candidates(ds, side, anchor);
  if (universe.empty()) return pool;
  const int total = static_cast<int>(universe.size());

  auto head_count = [total](int t) { return t <= 0 || t >= total ? total : t; };

  std::vector<char> in_pool(static_cast<std::size_t>(side == Side::User ? ds.num_items
                                                                        : ds.num_users),
                            0);
  auto add = [&](int id) {
    if (!in_pool[static_cast<std::size_t>(id)]) {
      in_pool[static_cast<std::size_t>(id)] = 1;
      pool.candidates.push_back(id);
    }
  };

  if (cfg.t_teacher != 0) {
    for (int id : top_of(teacher, side, anchor, universe, head_count(cfg.t_teacher))) add(id);
  }
  if (cfg.t_student != 0) {
    for (int id : top_of(student, side, anchor, universe, head_count(cfg.t_student))) add(id);
  }
  const int n_random = std::min(cfg.n_random, total);
  for (int k = 0; k < n_random; ++k) {
    add(universe[rng.uniform_below(static_cast<std::uint64_t>(total))]);
  }

  std::sort(pool.candidates.begin(), pool.candidates.end());
  return pool;
}

std::vector<int> top_n(const ModelParams& p, int user, const InteractionDataset& ds, int n) {
  if (n < 1) throw std::invalid_argument("top_n: n must be >= 1");
  const std::vector<int> universe = unobserved_candidates(ds, Side::User, user);
  if (universe.empty()) return {};
  return top_of(p, Side::User, user, universe, n);
}

int rank_of_candidate(const ModelParams& p, const InteractionDataset& ds, Side side, int anchor,
                      int target) {
  if (ds.observed_train(side, anchor, target)) return -1;
  const int u = side == Side::User ? anchor : target;
  const int i = side == Side::User ? target : anchor;
  const double target_score = score(p, u, i);
  const std::vector<int> universe = unobserved_candidates(ds, side, anchor);
  const Vec scores = score_candidates(p, side, anchor, universe);
  int rank = 0;
  for (std::size_t k = 0; k < universe.size(); ++k) {
    const double s = scores(static_cast<Eigen::Index>(k));
    if (s > target_score || (s == target_score && universe[k] < target)) ++rank;
  }
  return rank;
}

void dump_ranking(std::ostream& out, const InteractionDataset& ds, const RankingList& list) {
  const auto& raw = list.side == Side::User ? ds.user_raw : ds.item_raw;
  const auto& cand_raw = list.side == Side::User ? ds.item_raw : ds.user_raw;
  out << raw[static_cast<std::size_t>(list.anchor)] << ": ";
  for (std::size_t k = 0; k < list.ordered.size(); ++k) {
    if (k > 0) out << ',';
    out << cand_raw[static_cast<std::size_t>(list.ordered[k])];
  }
  out << '\n';
}

}  // namespace dcd
