#include "dcd/synth.hpp"

#include "dcd/distill.hpp"
#include "dcd/rng.hpp"
#include "dcd/types.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace dcd {

InteractionDataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.num_users <= 0 || cfg.num_items <= 0 || cfg.rank <= 0) {
    throw std::invalid_argument("synth: users, items and rank must be positive");
  }
  if (cfg.interactions_per_user > cfg.num_items) {
    throw std::invalid_argument("synth: interactions_per_user exceeds the catalog");
  }

  Mat users(cfg.num_users, cfg.rank);
  Mat items(cfg.num_items, cfg.rank);
  Rng ur = fork_stream(cfg.seed, "synth_users");
  Rng ir = fork_stream(cfg.seed, "synth_items");
  for (Eigen::Index r = 0; r < users.rows(); ++r) {
    for (Eigen::Index c = 0; c < users.cols(); ++c) users(r, c) = ur.normal();
  }
  for (Eigen::Index r = 0; r < items.rows(); ++r) {
    for (Eigen::Index c = 0; c < items.cols(); ++c) items(r, c) = ir.normal();
  }

  std::ostringstream buf;
  for (int u = 0; u < cfg.num_users; ++u) {
    const Vec pref = items * users.row(u).transpose();
    const double m = pref.maxCoeff();
    std::vector<double> w(static_cast<std::size_t>(cfg.num_items));
    for (int i = 0; i < cfg.num_items; ++i) {
      w[static_cast<std::size_t>(i)] = std::exp((pref(i) - m) / cfg.temperature);
    }
    Rng draw = fork_stream(cfg.seed, "synth_draw", static_cast<std::uint64_t>(u));
    for (int i : weighted_sample_without_replacement(w, cfg.interactions_per_user, draw)) {
      buf << 'u' << u << '\t' << 'i' << i << '\n';
    }
  }
  std::istringstream lines(buf.str());
  return load_interactions(lines);
}

void write_interactions(const InteractionDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write interactions file: " + path);
  for (int u = 0; u < ds.num_users; ++u) {
    for (int i : ds.train_by_user[u]) out << ds.user_raw[u] << '\t' << ds.item_raw[i] << '\n';
    if (ds.valid_item[u] >= 0) {
      out << ds.user_raw[u] << '\t' << ds.item_raw[ds.valid_item[u]] << '\n';
    }
    if (ds.test_item[u] >= 0) out << ds.user_raw[u] << '\t' << ds.item_raw[ds.test_item[u]] << '\n';
  }
}

}  // namespace dcd
