#include "dcd/ranking.hpp"

#include "testutil.hpp"

#include <doctest.h>

#include <sstream>

using namespace dcd;

namespace {

// d=1 BPR with a unit user vector turns item embeddings into raw scores.
ModelParams scorer(const std::vector<double>& item_scores, int num_users = 1) {
  ModelParams p = init_params(ModelKind::BPR, num_users, static_cast<int>(item_scores.size()), 1, 0);
  p.user_emb.setOnes();
  for (std::size_t i = 0; i < item_scores.size(); ++i) {
    p.item_emb(static_cast<Eigen::Index>(i), 0) = item_scores[i];
  }
  return p;
}

}  // namespace

TEST_CASE("rank_candidates sorts by score, best first") {
  const ModelParams p = scorer({0.9, 0.1, 0.5});
  const RankingList list = rank_candidates(p, 0, Side::User, {0, 1, 2});
  CHECK(list.ordered == std::vector<int>{0, 2, 1});
  CHECK(list.rank(2) == 1);
  CHECK(list.rank(list.ordered[0]) == 0);
  CHECK(list.rank(99) == -1);
}

TEST_CASE("ties break toward the smaller id") {
  const ModelParams p = scorer({0.5, 0.5, 0.5, 0.5});
  const RankingList list = rank_candidates(p, 0, Side::User, {3, 1, 2, 0});
  CHECK(list.ordered == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("rank_candidates rejects an empty pool") {
  const ModelParams p = scorer({1.0});
  CHECK_THROWS_AS(rank_candidates(p, 0, Side::User, {}), std::invalid_argument);
}

TEST_CASE("scores are non-increasing along the order") {
  Rng rng(404);
  for (int round = 0; round < 20; ++round) {
    ModelParams p = init_params(ModelKind::BPR, 3, 10, 4, rng.next_u64(), 0.5);
    std::vector<int> pool;
    for (int i = 0; i < 10; ++i) pool.push_back(i);
    const RankingList list = rank_candidates(p, 1, Side::User, pool);
    for (std::size_t k = 1; k < list.ordered.size(); ++k) {
      CHECK(score(p, 1, list.ordered[k - 1]) >= score(p, 1, list.ordered[k]));
    }
  }
}

TEST_CASE("raising a candidate's score never worsens its rank") {
  Rng rng(99);
  for (int round = 0; round < 20; ++round) {
    ModelParams p = init_params(ModelKind::BPR, 1, 8, 1, rng.next_u64(), 0.5);
    p.user_emb.setOnes();
    std::vector<int> pool{0, 1, 2, 3, 4, 5, 6, 7};
    const int target = static_cast<int>(rng.uniform_below(8));
    const int before = rank_candidates(p, 0, Side::User, pool).rank(target);
    p.item_emb(target, 0) += 0.5 + rng.uniform();
    const int after = rank_candidates(p, 0, Side::User, pool).rank(target);
    CHECK(after <= before);
  }
}

TEST_CASE("exhaustive pool settings return every unobserved candidate") {
  std::istringstream in("u,a\nu,b\nv,a\nv,c\nv,d\n");
  const InteractionDataset ds = load_interactions(in);
  const ModelParams teacher = init_params(ModelKind::BPR, ds.num_users, ds.num_items, 2, 1, 0.3);
  const ModelParams student = init_params(ModelKind::BPR, ds.num_users, ds.num_items, 2, 2, 0.3);
  Rng rng(0);
  PoolConfig cfg;
  cfg.t_teacher = 0;  // 0 disables a source; -1 means exhaustive
  cfg.t_student = 0;
  cfg.n_random = 0;
  cfg.t_teacher = -1;
  const int u = ds.user_index.at("u");
  const CandidatePool pool = build_pool(ds, teacher, student, u, Side::User, cfg, rng);
  CHECK(pool.candidates == unobserved_candidates(ds, Side::User, u));
}

TEST_CASE("pool is the union of the two heads") {
  std::istringstream in("u,a\nu,b\nu,c\nu,d\nu,e\nv,a\n");
  const InteractionDataset ds = load_interactions(in);
  const int v = ds.user_index.at("v");
  // Teacher loves item b, student loves item e; disjoint top-1 lists.
  ModelParams teacher = scorer({0.0, 5.0, 0.1, 0.2, 0.3}, ds.num_users);
  ModelParams student = scorer({0.0, 0.1, 0.2, 0.3, 5.0}, ds.num_users);
  Rng rng(0);
  PoolConfig cfg{1, 1, 0};
  const CandidatePool pool = build_pool(ds, teacher, student, v, Side::User, cfg, rng);
  CHECK(pool.candidates.size() == 2);
  CHECK(std::binary_search(pool.candidates.begin(), pool.candidates.end(), ds.item_index.at("b")));
  CHECK(std::binary_search(pool.candidates.begin(), pool.candidates.end(), ds.item_index.at("e")));
}

TEST_CASE("pools never contain the anchor's train interactions") {
  Rng rng(2511);
  for (int round = 0; round < 15; ++round) {
    auto ds = test::random_dataset(rng);
    const ModelParams teacher =
        init_params(ModelKind::BPR, ds.num_users, ds.num_items, 3, rng.next_u64(), 0.4);
    const ModelParams student =
        init_params(ModelKind::BPR, ds.num_users, ds.num_items, 3, rng.next_u64(), 0.4);
    PoolConfig cfg{2, 2, 3};
    for (Side side : {Side::User, Side::Item}) {
      const int n = side == Side::User ? ds.num_users : ds.num_items;
      for (int a = 0; a < n; ++a) {
        const CandidatePool pool = build_pool(ds, teacher, student, a, side, cfg, rng);
        for (int c : pool.candidates) CHECK_FALSE(ds.observed_train(side, a, c));
        CHECK(std::adjacent_find(pool.candidates.begin(), pool.candidates.end()) ==
              pool.candidates.end());
      }
    }
  }
}

TEST_CASE("top_n picks the unique maximum and truncates at the catalog") {
  std::istringstream in("u,a\nv,a\nv,b\nv,c\n");
  const InteractionDataset ds = load_interactions(in);
  const ModelParams p = scorer({-1.0, 3.0, 0.5}, ds.num_users);
  const int u = ds.user_index.at("u");
  CHECK(top_n(p, u, ds, 1) == std::vector<int>{1});
  CHECK(top_n(p, u, ds, 50) == std::vector<int>{1, 2});  // item a is observed
  CHECK_THROWS_AS(top_n(p, u, ds, 0), std::invalid_argument);
}

TEST_CASE("top_n agrees with the exhaustive ranking prefix") {
  Rng rng(808);
  for (int round = 0; round < 15; ++round) {
    auto ds = test::random_dataset(rng);
    const ModelParams p =
        init_params(ModelKind::BPR, ds.num_users, ds.num_items, 3, rng.next_u64(), 0.5);
    for (int u = 0; u < ds.num_users; ++u) {
      const auto universe = unobserved_candidates(ds, Side::User, u);
      if (universe.empty()) continue;
      const RankingList full = rank_candidates(p, u, Side::User, universe);
      const int n = 1 + static_cast<int>(rng.uniform_below(4));
      const auto got = top_n(p, u, ds, n);
      const std::size_t expect = std::min<std::size_t>(static_cast<std::size_t>(n), universe.size());
      CHECK(got.size() == expect);
      for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == full.ordered[k]);
    }
  }
}

TEST_CASE("rank_of_candidate matches the materialized ranking") {
  Rng rng(1999);
  for (int round = 0; round < 10; ++round) {
    auto ds = test::random_dataset(rng);
    const ModelParams p =
        init_params(ModelKind::BPR, ds.num_users, ds.num_items, 2, rng.next_u64(), 0.5);
    for (Side side : {Side::User, Side::Item}) {
      const int n = side == Side::User ? ds.num_users : ds.num_items;
      for (int a = 0; a < n; ++a) {
        const auto universe = unobserved_candidates(ds, side, a);
        if (universe.empty()) continue;
        const RankingList full = rank_candidates(p, a, side, universe);
        for (int c : universe) CHECK(rank_of_candidate(p, ds, side, a, c) == full.rank(c));
      }
    }
  }
}
