#pragma once

#include "dcd/dataset.hpp"
#include "dcd/models.hpp"
#include "dcd/rng.hpp"
#include "dcd/types.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <sstream>
#include <vector>

namespace dcd::test {

// Direct product evaluation of the relaxed permutation probability, kept
// deliberately naive: it is the oracle the stabilized implementation is
// checked against.
inline double brute_force_relaxed_log_prob(const Vec& head, const Vec& tail) {
  double logp = 0.0;
  for (Eigen::Index k = 0; k < head.size(); ++k) {
    double denom = 0.0;
    for (Eigen::Index i = k; i < head.size(); ++i) denom += std::exp(head(i));
    for (Eigen::Index j = 0; j < tail.size(); ++j) denom += std::exp(tail(j));
    logp += std::log(std::exp(head(k)) / denom);
  }
  return logp;
}

// Central finite differences over every parameter entry; returns the worst
// relative error against the analytic buffer. loss_fn must be pure in p.
template <typename LossFn>
double fd_max_rel_error(ModelParams& p, const GradientBuffer& analytic, LossFn&& loss_fn,
                        double h = 1e-5) {
  auto refs = tensor_refs(p);
  double worst = 0.0;
  for (std::size_t t = 0; t < refs.size(); ++t) {
    Mat& mat = *refs[t].mat;
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      for (Eigen::Index c = 0; c < mat.cols(); ++c) {
        const double orig = mat(r, c);
        mat(r, c) = orig + h;
        const double lp = loss_fn(p);
        mat(r, c) = orig - h;
        const double lm = loss_fn(p);
        mat(r, c) = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = analytic.tensors[t].g(r, c);
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

// Small random implicit-feedback world; every user keeps at least one
// unobserved item.
inline InteractionDataset random_dataset(Rng& rng, int max_users = 6, int max_items = 8) {
  const int num_users = 2 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(max_users - 1)));
  const int num_items = 3 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(max_items - 2)));
  std::ostringstream buf;
  for (int u = 0; u < num_users; ++u) {
    const int n_obs = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(num_items - 1)));
    std::vector<int> items(static_cast<std::size_t>(num_items));
    for (int i = 0; i < num_items; ++i) items[static_cast<std::size_t>(i)] = i;
    for (std::size_t k = items.size(); k > 1; --k) {
      std::swap(items[k - 1], items[rng.uniform_below(k)]);
    }
    for (int k = 0; k < n_obs; ++k) buf << 'u' << u << ",i" << items[static_cast<std::size_t>(k)] << '\n';
  }
  // Guarantee every item id exists (dense catalog).
  for (int i = 0; i < num_items; ++i) buf << "u0,i" << i << '\n';
  std::istringstream in(buf.str());
  InteractionDataset ds = load_interactions(in);
  // u0 now interacts with everything; give it an unobserved item again.
  auto& first = ds.train_by_user[0];
  if (static_cast<int>(first.size()) == ds.num_items) {
    const int drop = first.back();
    first.pop_back();
    auto& t = ds.train_by_item[drop];
    t.erase(std::find(t.begin(), t.end(), 0));
  }
  return ds;
}

// Chi-square goodness-of-fit p-value for observed counts vs expected probs.
inline double chi_square_gof_pvalue(const std::vector<long>& counts,
                                    const std::vector<double>& probs) {
  long total = 0;
  for (long c : counts) total += c;
  double stat = 0.0;
  std::size_t dof = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double expected = probs[k] * static_cast<double>(total);
    if (expected <= 0.0) continue;
    const double d = static_cast<double>(counts[k]) - expected;
    stat += d * d / expected;
    ++dof;
  }
  boost::math::chi_squared dist(static_cast<double>(dof - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace dcd::test
