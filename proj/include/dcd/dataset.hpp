#pragma once

#include "dcd/rng.hpp"
#include "dcd/types.hpp"

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace dcd {

// Sparse implicit-feedback store. Raw IDs are mapped to dense 0-based indices
// in first-appearance order; interactions are kept as sorted per-user item
// lists plus the per-item transpose. After a leave-one-out split each eligible
// user additionally holds one validation item and one test item, both removed
// from the train lists.
struct InteractionDataset {
  int num_users = 0;
  int num_items = 0;

  std::vector<std::vector<int>> train_by_user;  // sorted item ids
  std::vector<std::vector<int>> train_by_item;  // sorted user ids (transpose)

  std::vector<int> valid_item;  // -1 when the user has no held-out valid item
  std::vector<int> test_item;   // -1 when the user has no held-out test item

  std::vector<std::string> user_raw;  // dense index -> raw id
  std::vector<std::string> item_raw;
  std::unordered_map<std::string, int> user_index;  // raw id -> dense index
  std::unordered_map<std::string, int> item_index;

  bool split_done = false;

  std::size_t num_train_interactions() const;

  // Membership in the user's train list (binary search).
  bool in_train(int user, int item) const;
  // Train, valid or test interaction of this user.
  bool observed(int user, int item) const;
  // Counterpart observed in train, from either side.
  bool observed_train(Side side, int anchor, int candidate) const;

  // Content hash over raw ids, interactions and split assignment. Two
  // datasets with the same hash are interchangeable for evaluation.
  std::string fingerprint() const;

  void check_consistent() const;  // throws DataError on broken invariants
};

struct LoadOptions {
  char delimiter = 0;          // 0 = auto-detect comma/tab on first data line
  int min_user_count = 1;      // iterative min-count filtering (k-core style),
  int min_item_count = 1;      // 1 disables
};

// Parse "user,item[,...]" lines; '#' lines and blank lines are skipped.
// Duplicate pairs collapse to one interaction.
InteractionDataset load_interactions(std::istream& in, const LoadOptions& opts = {});
InteractionDataset load_interactions_file(const std::string& path, const LoadOptions& opts = {});

// Move one random item to test and one to valid for every user with at least
// min_interactions train items. Deterministic in (dataset, seed).
void leave_one_out_split(InteractionDataset& ds, std::uint64_t seed, int min_interactions = 3);

// n uniform draws (with replacement) from the items this user has not
// interacted with in train/valid/test. Throws DataError when no candidate
// exists.
std::vector<int> sample_negatives(const InteractionDataset& ds, int user, int n, Rng& rng);

// Split sidecar: one "user_raw<TAB>valid_raw<TAB>test_raw" line per split
// user, so a split can be pinned across runs and toolkits.
void save_split(const InteractionDataset& ds, const std::string& path);
void load_split(InteractionDataset& ds, const std::string& path);

// Training mini-batch: one row per (anchor, positive) pair plus its sampled
// negatives. Negatives never collide with the anchor's observed interactions.
struct Batch {
  Side side = Side::User;
  std::vector<int> anchors;
  std::vector<int> positives;
  std::vector<std::vector<int>> negatives;  // negatives[row] has neg_ratio entries

  std::size_t size() const { return anchors.size(); }
};

// Shuffle all (user, item) train pairs and cut them into batches of
// batch_size rows, sampling neg_ratio negatives per row.
std::vector<Batch> make_batches(const InteractionDataset& ds, std::size_t batch_size,
                                int neg_ratio, Rng& shuffle_rng, Rng& negative_rng);

}  // namespace dcd
