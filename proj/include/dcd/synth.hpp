#pragma once

#include "dcd/dataset.hpp"

#include <string>

namespace dcd {

// Low-rank synthetic preference world: latent factors for users and items,
// each user's observed interactions drawn without replacement with
// probability proportional to exp(preference / temperature).
struct SynthConfig {
  int num_users = 300;
  int num_items = 500;
  int rank = 8;
  int interactions_per_user = 20;
  double temperature = 1.0;
  std::uint64_t seed = 7;
};

InteractionDataset synth_dataset(const SynthConfig& cfg);

// Plain "user<TAB>item" dump of every interaction (train + held-out).
void write_interactions(const InteractionDataset& ds, const std::string& path);

}  // namespace dcd
