#include "dcd/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace dcd {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool sorted_contains(const std::vector<int>& v, int x) {
  return std::binary_search(v.begin(), v.end(), x);
}

}  // namespace

std::size_t InteractionDataset::num_train_interactions() const {
  std::size_t n = 0;
  for (const auto& v : train_by_user) n += v.size();
  return n;
}

bool InteractionDataset::in_train(int user, int item) const {
  return sorted_contains(train_by_user[user], item);
}

bool InteractionDataset::observed(int user, int item) const {
  return in_train(user, item) || valid_item[user] == item || test_item[user] == item;
}

bool InteractionDataset::observed_train(Side side, int anchor, int candidate) const {
  return side == Side::User ? in_train(anchor, candidate)
                            : sorted_contains(train_by_item[anchor], candidate);
}

std::string InteractionDataset::fingerprint() const {
  std::uint64_t h = fnv1a("dcd-dataset-v1");
  auto mix_int = [&h](int x) { h = fnv1a(&x, sizeof(x), h); };
  mix_int(num_users);
  mix_int(num_items);
  for (int u = 0; u < num_users; ++u) {
    h = fnv1a(user_raw[u], h);
    for (int i : train_by_user[u]) mix_int(i);
    mix_int(valid_item[u]);
    mix_int(test_item[u]);
  }
  for (int i = 0; i < num_items; ++i) h = fnv1a(item_raw[i], h);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void InteractionDataset::check_consistent() const {
  if (static_cast<int>(train_by_user.size()) != num_users ||
      static_cast<int>(train_by_item.size()) != num_items) {
    throw DataError("dataset: index structures do not match num_users/num_items");
  }
  for (int u = 0; u < num_users; ++u) {
    for (int i : train_by_user[u]) {
      if (i < 0 || i >= num_items) throw DataError("dataset: item index out of range");
      if (!sorted_contains(train_by_item[i], u)) {
        throw DataError("dataset: transpose inconsistent");
      }
    }
    const int v = valid_item[u], t = test_item[u];
    if (v >= 0 && (in_train(u, v) || v == t)) throw DataError("dataset: split sets overlap");
    if (t >= 0 && in_train(u, t)) throw DataError("dataset: split sets overlap");
  }
}

namespace {

void rebuild_transpose(InteractionDataset& ds) {
  ds.train_by_item.assign(ds.num_items, {});
  for (int u = 0; u < ds.num_users; ++u) {
    for (int i : ds.train_by_user[u]) ds.train_by_item[i].push_back(u);
  }
  // Per-user lists are walked in order, so the transposed lists come out sorted.
}

// One filtering pass under min-count thresholds; returns surviving pairs.
// Repeats until stable because removing a user can push items below the
// threshold and vice versa.
std::vector<std::pair<int, int>> filter_min_counts(std::vector<std::pair<int, int>> pairs,
                                                   int num_users, int num_items,
                                                   const LoadOptions& opts) {
  if (opts.min_user_count <= 1 && opts.min_item_count <= 1) return pairs;
  bool changed = true;
  while (changed) {
    std::vector<int> ucount(num_users, 0), icount(num_items, 0);
    for (auto& [u, i] : pairs) {
      ++ucount[u];
      ++icount[i];
    }
    std::vector<std::pair<int, int>> kept;
    kept.reserve(pairs.size());
    for (auto& [u, i] : pairs) {
      if (ucount[u] >= opts.min_user_count && icount[i] >= opts.min_item_count) {
        kept.emplace_back(u, i);
      }
    }
    changed = kept.size() != pairs.size();
    pairs = std::move(kept);
  }
  return pairs;
}

}  // namespace

InteractionDataset load_interactions(std::istream& in, const LoadOptions& opts) {
  InteractionDataset ds;
  std::vector<std::pair<int, int>> pairs;
  std::set<std::pair<int, int>> seen;

  char delim = opts.delimiter;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (delim == 0) delim = t.find('\t') != std::string::npos ? '\t' : ',';

    const auto cut = t.find(delim);
    if (cut == std::string::npos) {
      throw DataError("parse error at line " + std::to_string(line_no) +
                      ": expected 'user" + std::string(1, delim) + "item'");
    }
    std::string user_id = trim(t.substr(0, cut));
    std::string rest = t.substr(cut + 1);
    // Extra columns beyond the second are ignored.
    std::string item_id = trim(rest.substr(0, rest.find(delim)));
    if (user_id.empty() || item_id.empty()) {
      throw DataError("parse error at line " + std::to_string(line_no) + ": empty id");
    }

    auto [uit, unew] = ds.user_index.try_emplace(user_id, ds.num_users);
    if (unew) {
      ds.user_raw.push_back(user_id);
      ++ds.num_users;
    }
    auto [iit, inew] = ds.item_index.try_emplace(item_id, ds.num_items);
    if (inew) {
      ds.item_raw.push_back(item_id);
      ++ds.num_items;
    }
    if (seen.emplace(uit->second, iit->second).second) {
      pairs.emplace_back(uit->second, iit->second);
    }
  }
  if (pairs.empty()) throw DataError("empty input: no interactions found");

  pairs = filter_min_counts(std::move(pairs), ds.num_users, ds.num_items, opts);
  if (pairs.empty()) throw DataError("min-count filtering removed every interaction");

  if (opts.min_user_count > 1 || opts.min_item_count > 1) {
    // Re-index densely in first-appearance order of the surviving pairs.
    InteractionDataset out;
    for (auto& [u, i] : pairs) {
      auto [uit, unew] = out.user_index.try_emplace(ds.user_raw[u], out.num_users);
      if (unew) {
        out.user_raw.push_back(ds.user_raw[u]);
        ++out.num_users;
      }
      auto [iit, inew] = out.item_index.try_emplace(ds.item_raw[i], out.num_items);
      if (inew) {
        out.item_raw.push_back(ds.item_raw[i]);
        ++out.num_items;
      }
      u = uit->second;
      i = iit->second;
    }
    ds = std::move(out);
  }

  ds.train_by_user.assign(ds.num_users, {});
  for (auto& [u, i] : pairs) ds.train_by_user[u].push_back(i);
  for (auto& v : ds.train_by_user) std::sort(v.begin(), v.end());
  rebuild_transpose(ds);
  ds.valid_item.assign(ds.num_users, -1);
  ds.test_item.assign(ds.num_users, -1);
  return ds;
}

InteractionDataset load_interactions_file(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file: " + path);
  return load_interactions(in, opts);
}

void leave_one_out_split(InteractionDataset& ds, std::uint64_t seed, int min_interactions) {
  if (min_interactions < 3) throw DataError("min_interactions must be >= 3");
  ds.valid_item.assign(ds.num_users, -1);
  ds.test_item.assign(ds.num_users, -1);
  for (int u = 0; u < ds.num_users; ++u) {
    auto& items = ds.train_by_user[u];
    if (static_cast<int>(items.size()) < min_interactions) continue;
    Rng rng = fork_stream(seed, "split", static_cast<std::uint64_t>(u));
    const std::size_t ti = rng.uniform_below(items.size());
    ds.test_item[u] = items[ti];
    items.erase(items.begin() + static_cast<std::ptrdiff_t>(ti));
    const std::size_t vi = rng.uniform_below(items.size());
    ds.valid_item[u] = items[vi];
    items.erase(items.begin() + static_cast<std::ptrdiff_t>(vi));
  }
  rebuild_transpose(ds);
  ds.split_done = true;
}

std::vector<int> sample_negatives(const InteractionDataset& ds, int user, int n, Rng& rng) {
  if (user < 0 || user >= ds.num_users) throw DataError("sample_negatives: user out of range");
  std::size_t n_observed = ds.train_by_user[user].size();
  if (ds.valid_item[user] >= 0) ++n_observed;
  if (ds.test_item[user] >= 0) ++n_observed;
  if (n_observed >= static_cast<std::size_t>(ds.num_items)) {
    throw DataError("sample_negatives: user " + std::to_string(user) +
                    " has interacted with every item");
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(out.size()) < n) {
    const int cand = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(ds.num_items)));
    if (!ds.observed(user, cand)) out.push_back(cand);
  }
  return out;
}

void save_split(const InteractionDataset& ds, const std::string& path) {
  if (!ds.split_done) throw DataError("save_split: dataset has no split");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file: " + path);
  for (int u = 0; u < ds.num_users; ++u) {
    if (ds.valid_item[u] < 0 && ds.test_item[u] < 0) continue;
    out << ds.user_raw[u] << '\t' << ds.item_raw[ds.valid_item[u]] << '\t'
        << ds.item_raw[ds.test_item[u]] << '\n';
  }
}

void load_split(InteractionDataset& ds, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file: " + path);

  // Start from the merged (unsplit) interactions.
  if (ds.split_done) {
    for (int u = 0; u < ds.num_users; ++u) {
      if (ds.valid_item[u] >= 0) ds.train_by_user[u].push_back(ds.valid_item[u]);
      if (ds.test_item[u] >= 0) ds.train_by_user[u].push_back(ds.test_item[u]);
      std::sort(ds.train_by_user[u].begin(), ds.train_by_user[u].end());
    }
  }
  ds.valid_item.assign(ds.num_users, -1);
  ds.test_item.assign(ds.num_users, -1);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ss(t);
    std::string user_id, valid_id, test_id;
    if (!std::getline(ss, user_id, '\t') || !std::getline(ss, valid_id, '\t') ||
        !std::getline(ss, test_id, '\t')) {
      throw DataError("split file parse error at line " + std::to_string(line_no));
    }
    auto uit = ds.user_index.find(trim(user_id));
    auto vit = ds.item_index.find(trim(valid_id));
    auto tit = ds.item_index.find(trim(test_id));
    if (uit == ds.user_index.end() || vit == ds.item_index.end() || tit == ds.item_index.end()) {
      throw DataError("split file line " + std::to_string(line_no) +
                      " references ids unknown to the dataset");
    }
    const int u = uit->second;
    auto& items = ds.train_by_user[u];
    for (int held : {vit->second, tit->second}) {
      auto pos = std::lower_bound(items.begin(), items.end(), held);
      if (pos == items.end() || *pos != held) {
        throw DataError("split file line " + std::to_string(line_no) +
                        " holds out a non-interaction");
      }
      items.erase(pos);
    }
    ds.valid_item[u] = vit->second;
    ds.test_item[u] = tit->second;
  }
  rebuild_transpose(ds);
  ds.split_done = true;
}

std::vector<Batch> make_batches(const InteractionDataset& ds, std::size_t batch_size,
                                int neg_ratio, Rng& shuffle_rng, Rng& negative_rng) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(ds.num_train_interactions());
  for (int u = 0; u < ds.num_users; ++u) {
    for (int i : ds.train_by_user[u]) pairs.emplace_back(u, i);
  }
  // Fisher-Yates with the explicit stream.
  for (std::size_t k = pairs.size(); k > 1; --k) {
    std::swap(pairs[k - 1], pairs[shuffle_rng.uniform_below(k)]);
  }

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    Batch b;
    b.side = Side::User;
    const std::size_t end = std::min(start + batch_size, pairs.size());
    for (std::size_t k = start; k < end; ++k) {
      b.anchors.push_back(pairs[k].first);
      b.positives.push_back(pairs[k].second);
      b.negatives.push_back(sample_negatives(ds, pairs[k].first, neg_ratio, negative_rng));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace dcd
