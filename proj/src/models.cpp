#include "dcd/models.hpp"

#include "dcd/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dcd {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

void fill_normal(Mat& m, Rng& rng, double std_dev) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal() * std_dev;
  }
}

void fill_xavier_uniform(Mat& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
  }
}

ModelParams allocate(ModelKind kind, int num_users, int num_items, int dim, bool use_bias) {
  if (dim <= 0) throw std::invalid_argument("embedding dim must be positive");
  if (num_users <= 0 || num_items <= 0) {
    throw std::invalid_argument("model needs at least one user and one item");
  }
  ModelParams p;
  p.kind = kind;
  p.num_users = num_users;
  p.num_items = num_items;
  p.dim = dim;
  p.use_bias = kind == ModelKind::BPR && use_bias;
  p.user_emb = Mat::Zero(num_users, dim);
  p.item_emb = Mat::Zero(num_items, dim);
  if (p.use_bias) {
    p.user_bias = Mat::Zero(num_users, 1);
    p.item_bias = Mat::Zero(num_items, 1);
  }
  if (kind == ModelKind::NeuMF) {
    const int h1 = p.mlp_h1(), h2 = p.mlp_h2();
    p.gmf_user = Mat::Zero(num_users, dim);
    p.gmf_item = Mat::Zero(num_items, dim);
    p.w1 = Mat::Zero(h1, 2 * dim);
    p.b1 = Mat::Zero(h1, 1);
    p.w2 = Mat::Zero(h2, h1);
    p.b2 = Mat::Zero(h2, 1);
    p.w_out = Mat::Zero(1, dim + h2);
  }
  return p;
}

// NeuMF forward pass with the intermediates the backward pass needs.
struct NeuMFForward {
  Vec gmf;      // d
  Vec z0;       // 2d
  Vec a1, z1;   // h1
  Vec a2, z2;   // h2
  double out = 0.0;
};

NeuMFForward neumf_forward(const ModelParams& p, int u, int i) {
  NeuMFForward f;
  const int d = p.dim, h2 = p.mlp_h2();
  f.gmf = (p.gmf_user.row(u).array() * p.gmf_item.row(i).array()).transpose();
  f.z0.resize(2 * d);
  f.z0.head(d) = p.user_emb.row(u).transpose();
  f.z0.tail(d) = p.item_emb.row(i).transpose();
  f.a1 = p.w1 * f.z0 + p.b1.col(0);
  f.z1 = f.a1.cwiseMax(0.0);
  f.a2 = p.w2 * f.z1 + p.b2.col(0);
  f.z2 = f.a2.cwiseMax(0.0);
  f.out = p.w_out.row(0).head(d).dot(f.gmf) + p.w_out.row(0).tail(h2).dot(f.z2);
  return f;
}

// Tensor indices, fixed per kind (see tensor_refs).
constexpr int kUserEmb = 0;
constexpr int kItemEmb = 1;
constexpr int kUserBias = 2;  // BPR with bias
constexpr int kItemBias = 3;
constexpr int kGmfUser = 2;  // NeuMF
constexpr int kGmfItem = 3;
constexpr int kW1 = 4;
constexpr int kB1 = 5;
constexpr int kW2 = 6;
constexpr int kB2 = 7;
constexpr int kWOut = 8;

}  // namespace

const char* model_kind_name(ModelKind k) { return k == ModelKind::BPR ? "bpr" : "neumf"; }

ModelKind model_kind_from(const std::string& name) {
  if (name == "bpr") return ModelKind::BPR;
  if (name == "neumf") return ModelKind::NeuMF;
  throw std::invalid_argument("unknown model kind: " + name + " (expected bpr|neumf)");
}

std::size_t ModelParams::num_parameters() const {
  std::size_t n = 0;
  for (const auto& t : tensor_refs(const_cast<ModelParams&>(*this))) {
    n += static_cast<std::size_t>(t.mat->size());
  }
  return n;
}

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  std::vector<TensorRef> refs;
  refs.push_back({"user_emb", &p.user_emb, true});
  refs.push_back({"item_emb", &p.item_emb, true});
  if (p.use_bias) {
    refs.push_back({"user_bias", &p.user_bias, true});
    refs.push_back({"item_bias", &p.item_bias, true});
  }
  if (p.kind == ModelKind::NeuMF) {
    refs.push_back({"gmf_user", &p.gmf_user, true});
    refs.push_back({"gmf_item", &p.gmf_item, true});
    refs.push_back({"w1", &p.w1, false});
    refs.push_back({"b1", &p.b1, false});
    refs.push_back({"w2", &p.w2, false});
    refs.push_back({"b2", &p.b2, false});
    refs.push_back({"w_out", &p.w_out, false});
  }
  return refs;
}

ModelParams init_params(ModelKind kind, int num_users, int num_items, int dim,
                        std::uint64_t seed, double init_std, bool use_bias) {
  ModelParams p = allocate(kind, num_users, num_items, dim, use_bias);
  auto refs = tensor_refs(p);
  for (std::size_t t = 0; t < refs.size(); ++t) {
    Rng rng = fork_stream(seed, "init", t);
    const std::string& name = refs[t].name;
    if (name == "user_emb" || name == "item_emb" || name == "gmf_user" || name == "gmf_item") {
      fill_normal(*refs[t].mat, rng, init_std);
    } else if (name == "w1" || name == "w2" || name == "w_out") {
      fill_xavier_uniform(*refs[t].mat, rng);
    }
    // biases stay zero
  }
  return p;
}

void check_matches(const ModelParams& p, const InteractionDataset& ds) {
  if (p.num_users != ds.num_users || p.num_items != ds.num_items) {
    throw DataError("checkpoint dimensions (" + std::to_string(p.num_users) + " users, " +
                    std::to_string(p.num_items) + " items) do not match dataset (" +
                    std::to_string(ds.num_users) + ", " + std::to_string(ds.num_items) + ")");
  }
}

double score(const ModelParams& p, int user, int item) {
  if (user < 0 || user >= p.num_users || item < 0 || item >= p.num_items) {
    throw std::invalid_argument("score: id out of range");
  }
  if (p.kind == ModelKind::BPR) {
    double s = p.user_emb.row(user).dot(p.item_emb.row(item));
    if (p.use_bias) s += p.user_bias(user, 0) + p.item_bias(item, 0);
    return s;
  }
  return neumf_forward(p, user, item).out;
}

Vec score_candidates(const ModelParams& p, Side side, int anchor,
                     const std::vector<int>& candidates) {
  Vec out(static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const int u = side == Side::User ? anchor : candidates[k];
    const int i = side == Side::User ? candidates[k] : anchor;
    out(static_cast<Eigen::Index>(k)) = score(p, u, i);
  }
  return out;
}

void GradTensor::clear() {
  if (dense) {
    g.setZero();
    return;
  }
  for (int r : touched) g.row(r).setZero();
  for (int r : touched) mask[static_cast<std::size_t>(r)] = 0;
  touched.clear();
}

void GradientBuffer::clear() {
  for (auto& t : tensors) t.clear();
}

void GradientBuffer::add_scaled(const GradientBuffer& other, double scale) {
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const GradTensor& src = other.tensors[t];
    GradTensor& dst = tensors[t];
    if (src.dense) {
      dst.g += scale * src.g;
    } else {
      for (int r : src.touched) {
        dst.g.row(r) += scale * src.g.row(r);
        dst.touch(r);
      }
    }
  }
}

GradientBuffer make_grad_buffer(ModelParams& p) {
  GradientBuffer buf;
  for (const auto& ref : tensor_refs(p)) {
    GradTensor t;
    t.g = Mat::Zero(ref.mat->rows(), ref.mat->cols());
    t.dense = !ref.row_sparse;
    if (!t.dense) t.mask.assign(static_cast<std::size_t>(ref.mat->rows()), 0);
    buf.tensors.push_back(std::move(t));
  }
  return buf;
}

void accumulate_score_grad(const ModelParams& p, int user, int item, double coef,
                           GradientBuffer& grads) {
  auto& g = grads.tensors;
  if (p.kind == ModelKind::BPR) {
    g[kUserEmb].g.row(user) += coef * p.item_emb.row(item);
    g[kUserEmb].touch(user);
    g[kItemEmb].g.row(item) += coef * p.user_emb.row(user);
    g[kItemEmb].touch(item);
    if (p.use_bias) {
      g[kUserBias].g(user, 0) += coef;
      g[kUserBias].touch(user);
      g[kItemBias].g(item, 0) += coef;
      g[kItemBias].touch(item);
    }
    return;
  }

  const int d = p.dim, h2 = p.mlp_h2();
  const NeuMFForward f = neumf_forward(p, user, item);

  // GMF branch.
  const Vec dgmf = coef * p.w_out.row(0).head(d).transpose();
  g[kGmfUser].g.row(user) += (dgmf.array() * p.gmf_item.row(item).transpose().array()).matrix().transpose();
  g[kGmfUser].touch(user);
  g[kGmfItem].g.row(item) += (dgmf.array() * p.gmf_user.row(user).transpose().array()).matrix().transpose();
  g[kGmfItem].touch(item);

  // MLP branch.
  const Vec dz2 = coef * p.w_out.row(0).tail(h2).transpose();
  const Vec d2 = (f.a2.array() > 0.0).select(dz2, 0.0);
  g[kW2].g += d2 * f.z1.transpose();
  g[kB2].g.col(0) += d2;
  const Vec back1 = p.w2.transpose() * d2;
  const Vec d1 = (f.a1.array() > 0.0).select(back1, 0.0);
  g[kW1].g += d1 * f.z0.transpose();
  g[kB1].g.col(0) += d1;
  const Vec dz0 = p.w1.transpose() * d1;
  g[kUserEmb].g.row(user) += dz0.head(d).transpose();
  g[kUserEmb].touch(user);
  g[kItemEmb].g.row(item) += dz0.tail(d).transpose();
  g[kItemEmb].touch(item);

  // Output projection.
  g[kWOut].g.row(0).head(d) += coef * f.gmf.transpose();
  g[kWOut].g.row(0).tail(h2) += coef * f.z2.transpose();
}

double base_loss(const ModelParams& p, const Batch& batch, GradientBuffer& grads) {
  if (batch.size() == 0) throw std::invalid_argument("base_loss: empty batch");
  double loss = 0.0;

  if (p.kind == ModelKind::BPR) {
    std::size_t n_pairs = 0;
    for (const auto& negs : batch.negatives) n_pairs += negs.size();
    if (n_pairs == 0) throw std::invalid_argument("base_loss: batch has no negatives");
    const double scale = 1.0 / static_cast<double>(n_pairs);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const int u = batch.anchors[r], pos = batch.positives[r];
      const double s_pos = score(p, u, pos);
      for (int neg : batch.negatives[r]) {
        const double x = s_pos - score(p, u, neg);
        loss += scale * softplus(-x);
        const double dx = scale * (sigmoid(x) - 1.0);  // d(-log sigmoid(x))/dx
        accumulate_score_grad(p, u, pos, dx, grads);
        accumulate_score_grad(p, u, neg, -dx, grads);
      }
    }
    return loss;
  }

  // NeuMF: pointwise BCE on logits.
  std::size_t n_examples = batch.size();
  for (const auto& negs : batch.negatives) n_examples += negs.size();
  const double scale = 1.0 / static_cast<double>(n_examples);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const int u = batch.anchors[r];
    const double s_pos = score(p, u, batch.positives[r]);
    loss += scale * softplus(-s_pos);
    accumulate_score_grad(p, u, batch.positives[r], scale * (sigmoid(s_pos) - 1.0), grads);
    for (int neg : batch.negatives[r]) {
      const double s_neg = score(p, u, neg);
      loss += scale * softplus(s_neg);
      accumulate_score_grad(p, u, neg, scale * sigmoid(s_neg), grads);
    }
  }
  return loss;
}

void apply_sgd(ModelParams& p, const GradientBuffer& grads, double lr) {
  auto refs = tensor_refs(p);
  for (std::size_t t = 0; t < refs.size(); ++t) {
    const GradTensor& gt = grads.tensors[t];
    if (gt.dense) {
      *refs[t].mat -= lr * gt.g;
    } else {
      for (int r : gt.touched) refs[t].mat->row(r) -= lr * gt.g.row(r);
    }
  }
}

bool all_finite(const ModelParams& p) {
  for (const auto& ref : tensor_refs(const_cast<ModelParams&>(p))) {
    if (!ref.mat->allFinite()) return false;
  }
  return true;
}

AdamState make_adam_state(ModelParams& p, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  for (const auto& ref : tensor_refs(p)) {
    s.m.push_back(Mat::Zero(ref.mat->rows(), ref.mat->cols()));
    s.v.push_back(Mat::Zero(ref.mat->rows(), ref.mat->cols()));
  }
  return s;
}

void adam_step(ModelParams& p, AdamState& state, const GradientBuffer& grads) {
  auto refs = tensor_refs(p);
  if (refs.size() != grads.tensors.size() || refs.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: gradient/state shape mismatch");
  }
  ++state.step;
  const AdamConfig& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  for (std::size_t t = 0; t < refs.size(); ++t) {
    Mat& theta = *refs[t].mat;
    Mat& m = state.m[t];
    Mat& v = state.v[t];
    const GradTensor& gt = grads.tensors[t];

    auto update_row = [&](int r) {
      for (Eigen::Index col = 0; col < theta.cols(); ++col) {
        double g = gt.g(r, col);
        if (!std::isfinite(g)) {
          throw NumericalError("non-finite gradient in tensor '" + refs[t].name + "'");
        }
        g += c.l2 * theta(r, col);
        m(r, col) = c.beta1 * m(r, col) + (1.0 - c.beta1) * g;
        v(r, col) = c.beta2 * v(r, col) + (1.0 - c.beta2) * g * g;
        const double mhat = m(r, col) / bc1;
        const double vhat = v(r, col) / bc2;
        theta(r, col) -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
      }
    };

    if (gt.dense) {
      for (Eigen::Index r = 0; r < theta.rows(); ++r) update_row(static_cast<int>(r));
    } else {
      std::vector<int> rows = gt.touched;
      std::sort(rows.begin(), rows.end());
      for (int r : rows) update_row(r);
    }
  }
}

// ---- Checkpoints ----

namespace {
constexpr char kMagic[8] = {'D', 'C', 'D', 'C', 'K', 'P', 'T', '\n'};
constexpr int kFormatVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& p, const AdamState* adam,
                     std::uint64_t seed) {
  auto refs = tensor_refs(const_cast<ModelParams&>(p));
  nlohmann::json header;
  header["format"] = "dcd-checkpoint";
  header["version"] = kFormatVersion;
  header["kind"] = model_kind_name(p.kind);
  header["num_users"] = p.num_users;
  header["num_items"] = p.num_items;
  header["dim"] = p.dim;
  header["use_bias"] = p.use_bias;
  header["seed"] = seed;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& ref : refs) {
    tensors.push_back({{"name", ref.name}, {"rows", ref.mat->rows()}, {"cols", ref.mat->cols()}});
  }
  header["tensors"] = tensors;
  if (adam != nullptr) {
    header["adam"] = {{"step", adam->step},
                      {"learning_rate", adam->cfg.learning_rate},
                      {"beta1", adam->cfg.beta1},
                      {"beta2", adam->cfg.beta2},
                      {"eps", adam->cfg.eps},
                      {"l2", adam->cfg.l2}};
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::string hdr = header.dump();
  const std::uint64_t len = hdr.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  auto write_mat = [&out](const Mat& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  };
  for (const auto& ref : refs) write_mat(*ref.mat);
  if (adam != nullptr) {
    for (const auto& m : adam->m) write_mat(m);
    for (const auto& v : adam->v) write_mat(v);
  }
  if (!out) throw DataError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a dcd checkpoint: " + path);
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hdr(len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint header: " + path);

  nlohmann::json header = nlohmann::json::parse(hdr, nullptr, false);
  if (header.is_discarded()) throw DataError("corrupt checkpoint header: " + path);
  if (header.value("version", -1) != kFormatVersion) {
    throw DataError("unsupported checkpoint version in " + path);
  }

  Checkpoint ck;
  ck.seed = header.value("seed", std::uint64_t{0});
  ck.params = allocate(model_kind_from(header.at("kind")), header.at("num_users"),
                       header.at("num_items"), header.at("dim"), header.value("use_bias", false));
  auto refs = tensor_refs(ck.params);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != refs.size()) throw DataError("checkpoint tensor list mismatch: " + path);
  auto read_mat = [&in, &path](Mat& m) {
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    if (!in) throw DataError("truncated checkpoint tensors: " + path);
  };
  for (std::size_t t = 0; t < refs.size(); ++t) {
    const auto& meta = tensors[t];
    if (meta.at("name") != refs[t].name || meta.at("rows") != refs[t].mat->rows() ||
        meta.at("cols") != refs[t].mat->cols()) {
      throw DataError("checkpoint tensor '" + std::string(meta.at("name")) +
                      "' has unexpected shape: " + path);
    }
    read_mat(*refs[t].mat);
  }
  if (header.contains("adam")) {
    const auto& a = header.at("adam");
    AdamConfig cfg;
    cfg.learning_rate = a.at("learning_rate");
    cfg.beta1 = a.at("beta1");
    cfg.beta2 = a.at("beta2");
    cfg.eps = a.at("eps");
    cfg.l2 = a.at("l2");
    AdamState st = make_adam_state(ck.params, cfg);
    st.step = a.at("step");
    for (auto& m : st.m) read_mat(m);
    for (auto& v : st.v) read_mat(v);
    ck.adam = std::move(st);
  }
  return ck;
}

}  // namespace dcd
