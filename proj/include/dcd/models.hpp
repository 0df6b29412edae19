#pragma once

#include "dcd/dataset.hpp"
#include "dcd/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dcd {

enum class ModelKind { BPR, NeuMF };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from(const std::string& name);

// Learnable parameters of a scorer S(u, i).
//
// BPR: dot(user_emb[u], item_emb[i]) plus optional per-user/per-item biases.
// NeuMF: GMF branch (gmf_user[u] . gmf_item[i] elementwise) concatenated with
// an MLP tower over [user_emb[u]; item_emb[i]] (widths 2d -> d -> d/2, ReLU),
// projected to a scalar by w_out. No output bias.
struct ModelParams {
  ModelKind kind = ModelKind::BPR;
  int num_users = 0;
  int num_items = 0;
  int dim = 0;
  bool use_bias = false;  // BPR only

  Mat user_emb, item_emb;    // n x d, m x d (NeuMF: MLP tower embeddings)
  Mat user_bias, item_bias;  // n x 1, m x 1 when use_bias
  Mat gmf_user, gmf_item;    // NeuMF only, n x d, m x d
  Mat w1, b1, w2, b2, w_out; // NeuMF tower: h1 x 2d, h1 x 1, h2 x h1, h2 x 1, 1 x (d + h2)

  int mlp_h1() const { return dim; }
  int mlp_h2() const { return dim / 2 > 0 ? dim / 2 : 1; }

  std::size_t num_parameters() const;
};

// Stable tensor enumeration (Adam state, checkpoints, finite differences all
// rely on this order).
struct TensorRef {
  std::string name;
  Mat* mat;
  bool row_sparse;  // true for embedding-style tables updated row-wise
};
std::vector<TensorRef> tensor_refs(ModelParams& p);

ModelParams init_params(ModelKind kind, int num_users, int num_items, int dim,
                        std::uint64_t seed, double init_std = 0.01, bool use_bias = false);

void check_matches(const ModelParams& p, const InteractionDataset& ds);

double score(const ModelParams& p, int user, int item);

// Scores of many candidates against one anchor. side == User scores
// S(anchor, c); side == Item scores S(c, anchor).
Vec score_candidates(const ModelParams& p, Side side, int anchor, const std::vector<int>& candidates);

// Per-tensor gradient accumulator. Embedding tables track which rows were
// touched so the optimizer can skip the rest.
struct GradTensor {
  Mat g;
  bool dense = false;  // small tensors: every entry participates
  std::vector<int> touched;
  std::vector<char> mask;

  void touch(int row) {
    if (!mask[static_cast<std::size_t>(row)]) {
      mask[static_cast<std::size_t>(row)] = 1;
      touched.push_back(row);
    }
  }
  void clear();
};

struct GradientBuffer {
  std::vector<GradTensor> tensors;  // parallel to tensor_refs()

  void clear();
  void add_scaled(const GradientBuffer& other, double scale);
};

GradientBuffer make_grad_buffer(ModelParams& p);

// Chain rule through S(u, i): adds coef * dS/dtheta into the buffer.
void accumulate_score_grad(const ModelParams& p, int user, int item, double coef,
                           GradientBuffer& grads);

struct LossResult {
  double value = 0.0;
};

// Base recommendation loss L_RS.
// BPR: mean over (positive, negative) pairs of -log sigmoid(S(u,i+) - S(u,i-)).
// NeuMF: mean binary cross-entropy with logits, positives labeled 1 and
// sampled negatives labeled 0.
double base_loss(const ModelParams& p, const Batch& batch, GradientBuffer& grads);

// Test/debug helper: plain gradient-descent step theta -= lr * g over touched rows.
void apply_sgd(ModelParams& p, const GradientBuffer& grads, double lr);

bool all_finite(const ModelParams& p);

// ---- Adam ----

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double l2 = 0.0;  // added to the gradient as l2 * theta before the moment update
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  std::vector<Mat> m, v;  // parallel to tensor_refs()
};

AdamState make_adam_state(ModelParams& p, const AdamConfig& cfg);

// Bias-corrected Adam over the touched rows only. Throws NumericalError
// naming the tensor when a gradient entry is not finite.
void adam_step(ModelParams& p, AdamState& state, const GradientBuffer& grads);

// ---- Checkpoints ----
// Binary container: magic + JSON header (kind, dims, tensor shapes, seed,
// optional Adam hyperparameters) followed by raw row-major doubles.

struct Checkpoint {
  ModelParams params;
  std::optional<AdamState> adam;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& p,
                     const AdamState* adam = nullptr, std::uint64_t seed = 0);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dcd
