#include "dcd/trainer.hpp"

#include "dcd/eval.hpp"
#include "dcd/ranking.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

namespace dcd {

Method method_from(const std::string& name) {
  if (name == "student") return Method::Student;
  if (name == "rrd") return Method::RRD;
  if (name == "dcd") return Method::DCD;
  throw std::invalid_argument("unknown method: " + name + " (expected student|rrd|dcd)");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Student: return "student";
    case Method::RRD: return "rrd";
    case Method::DCD: return "dcd";
  }
  return "?";
}

Ablation ablation_from(const std::string& name) {
  if (name == "full") return Ablation::Full;
  if (name == "no_correction") return Ablation::NoCorrection;
  if (name == "no_item_side") return Ablation::NoItemSide;
  if (name == "no_user_side") return Ablation::NoUserSide;
  if (name == "no_sampling") return Ablation::NoSampling;
  throw std::invalid_argument(
      "unknown ablation mode: " + name +
      " (expected full|no_correction|no_item_side|no_user_side|no_sampling)");
}

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoCorrection: return "no_correction";
    case Ablation::NoItemSide: return "no_item_side";
    case Ablation::NoUserSide: return "no_user_side";
    case Ablation::NoSampling: return "no_sampling";
  }
  return "?";
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  require(teacher_dim > 0, "teacher_dim must be positive");
  require(student_dim > 0, "student_dim must be positive");
  require(epochs > 0, "epochs must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(l2 >= 0.0, "l2 must be non-negative");
  require(lambda_rrd >= 0.0, "lambda_rrd must be non-negative");
  require(lambda_ucd >= 0.0, "lambda_ucd must be non-negative");
  require(lambda_icd >= 0.0, "lambda_icd must be non-negative");
  require(mu > 0.0, "mu must be positive");
  require(m > 0, "m must be positive");
  require(rrd_k > 0, "rrd_k must be positive");
  require(rrd_l >= 0, "rrd_l must be non-negative");
  require(resample_period >= 1, "resample_period must be >= 1");
  require(patience >= 1, "patience must be >= 1");
  require(eval_every >= 1, "eval_every must be >= 1");
  require(neg_ratio >= 1, "neg_ratio must be >= 1");
  require(init_std > 0.0, "init_std must be positive");
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "model",        "teacher_dim", "student_dim",  "epochs",
      "batch_size",   "learning_rate", "l2",         "lambda_rrd",
      "lambda_ucd",   "lambda_icd",  "mu",           "m",
      "t_teacher",    "t_student",   "n_random",     "rrd_k",
      "rrd_l",        "rrd_exhaustive_tail", "resample_period", "ablation",
      "seed",         "patience",    "eval_every",   "neg_ratio",
      "init_std",     "use_bias"};
  return keys;
}

}  // namespace

void set_config_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "model") cfg.model = model_kind_from(value);
    else if (key == "teacher_dim") cfg.teacher_dim = std::stoi(value);
    else if (key == "student_dim") cfg.student_dim = std::stoi(value);
    else if (key == "epochs") cfg.epochs = std::stoi(value);
    else if (key == "batch_size") cfg.batch_size = std::stoi(value);
    else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
    else if (key == "l2") cfg.l2 = std::stod(value);
    else if (key == "lambda_rrd") cfg.lambda_rrd = std::stod(value);
    else if (key == "lambda_ucd") cfg.lambda_ucd = std::stod(value);
    else if (key == "lambda_icd") cfg.lambda_icd = std::stod(value);
    else if (key == "mu") cfg.mu = std::stod(value);
    else if (key == "m") cfg.m = std::stoi(value);
    else if (key == "t_teacher") cfg.t_teacher = std::stoi(value);
    else if (key == "t_student") cfg.t_student = std::stoi(value);
    else if (key == "n_random") cfg.n_random = std::stoi(value);
    else if (key == "rrd_k") cfg.rrd_k = std::stoi(value);
    else if (key == "rrd_l") cfg.rrd_l = std::stoi(value);
    else if (key == "rrd_exhaustive_tail") cfg.rrd_exhaustive_tail = parse_bool(value);
    else if (key == "resample_period") cfg.resample_period = std::stoi(value);
    else if (key == "ablation") cfg.ablation = ablation_from(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "patience") cfg.patience = std::stoi(value);
    else if (key == "eval_every") cfg.eval_every = std::stoi(value);
    else if (key == "neg_ratio") cfg.neg_ratio = std::stoi(value);
    else if (key == "init_std") cfg.init_std = std::stod(value);
    else if (key == "use_bias") cfg.use_bias = parse_bool(value);
    else throw std::invalid_argument("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': cannot parse value '" + value + "'");
  }
}

TrainConfig load_config(std::istream& in) {
  TrainConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    std::string probe = line;
    probe.erase(std::remove_if(probe.begin(), probe.end(), ::isspace), probe.end());
    if (probe.empty()) continue;
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    }
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    set_config_key(cfg, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  return load_config(in);
}

void apply_env_overrides(TrainConfig& cfg, const std::string& prefix) {
  for (const std::string& key : config_keys()) {
    std::string env = prefix;
    for (char c : key) env += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(env.c_str())) set_config_key(cfg, key, v);
  }
}

std::map<std::string, std::string> config_snapshot(const TrainConfig& cfg) {
  auto fmt = [](double x) {
    std::ostringstream ss;
    ss.precision(17);
    ss << x;
    return ss.str();
  };
  std::map<std::string, std::string> snap;
  snap["model"] = model_kind_name(cfg.model);
  snap["teacher_dim"] = std::to_string(cfg.teacher_dim);
  snap["student_dim"] = std::to_string(cfg.student_dim);
  snap["epochs"] = std::to_string(cfg.epochs);
  snap["batch_size"] = std::to_string(cfg.batch_size);
  snap["learning_rate"] = fmt(cfg.learning_rate);
  snap["l2"] = fmt(cfg.l2);
  snap["lambda_rrd"] = fmt(cfg.lambda_rrd);
  snap["lambda_ucd"] = fmt(cfg.lambda_ucd);
  snap["lambda_icd"] = fmt(cfg.lambda_icd);
  snap["mu"] = fmt(cfg.mu);
  snap["m"] = std::to_string(cfg.m);
  snap["t_teacher"] = std::to_string(cfg.t_teacher);
  snap["t_student"] = std::to_string(cfg.t_student);
  snap["n_random"] = std::to_string(cfg.n_random);
  snap["rrd_k"] = std::to_string(cfg.rrd_k);
  snap["rrd_l"] = std::to_string(cfg.rrd_l);
  snap["rrd_exhaustive_tail"] = cfg.rrd_exhaustive_tail ? "true" : "false";
  snap["resample_period"] = std::to_string(cfg.resample_period);
  snap["ablation"] = ablation_name(cfg.ablation);
  snap["seed"] = std::to_string(cfg.seed);
  snap["patience"] = std::to_string(cfg.patience);
  snap["eval_every"] = std::to_string(cfg.eval_every);
  snap["neg_ratio"] = std::to_string(cfg.neg_ratio);
  snap["init_std"] = fmt(cfg.init_std);
  snap["use_bias"] = cfg.use_bias ? "true" : "false";
  return snap;
}

void write_train_log(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,loss_rs,loss_rrd,loss_ucd,loss_icd,total,valid_h5,valid_m5,seconds\n";
  out.setf(std::ios::fixed);
  out.precision(6);
  for (const EpochLog& e : log) {
    out << e.epoch << ',' << e.loss_rs << ',' << e.loss_rrd << ',' << e.loss_ucd << ','
        << e.loss_icd << ',' << e.total << ',' << e.valid_h5 << ',' << e.valid_m5 << ','
        << e.seconds << '\n';
  }
}

namespace {

std::uint64_t derive_seed(std::uint64_t master, const char* label) {
  return fork_stream(master, label).next_u64();
}

// The per-loss switchboard after method/ablation collapsing.
struct Objective {
  double lambda_rrd = 0.0;
  double lambda_ucd = 0.0;
  double lambda_icd = 0.0;
  bool corrections = false;       // UCD/ICD use discrepancy samples
  bool static_item_rrd = false;   // no_correction: item-side RRD instead of ICD
  bool static_user_rrd = false;   // no_correction: user-side RRD instead of UCD
  bool deterministic_sampling = false;
};

Objective make_objective(const TrainConfig& cfg, Method method) {
  Objective o;
  if (method == Method::Student) return o;
  o.lambda_rrd = cfg.lambda_rrd;
  if (method == Method::RRD) return o;

  o.lambda_ucd = cfg.lambda_ucd;
  o.lambda_icd = cfg.lambda_icd;
  o.corrections = true;
  switch (cfg.ablation) {
    case Ablation::Full:
      break;
    case Ablation::NoCorrection:
      // Same dual-side ranking supervision, but on the static teacher
      // targets: user-side RRD in the UCD slot, item-side RRD in the ICD slot.
      o.corrections = false;
      o.static_user_rrd = true;
      o.static_item_rrd = true;
      break;
    case Ablation::NoItemSide:
      o.lambda_icd = 0.0;
      break;
    case Ablation::NoUserSide:
      o.lambda_ucd = 0.0;
      break;
    case Ablation::NoSampling:
      o.deterministic_sampling = true;
      break;
  }
  if (o.lambda_ucd == 0.0 && o.lambda_icd == 0.0) {
    o.corrections = false;
    o.static_user_rrd = false;
    o.static_item_rrd = false;
  }
  return o;
}

std::vector<int> distinct_sorted(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

TrainResult train_model(const InteractionDataset& ds, const ModelParams* teacher,
                        const TrainConfig& cfg, Method method, int dim, const char* init_label) {
  cfg.validate();
  if (!ds.split_done) throw DataError("training requires a split dataset");
  if (method != Method::Student && teacher == nullptr) {
    throw std::invalid_argument("distillation methods need a teacher");
  }
  if (teacher != nullptr) check_matches(*teacher, ds);

  const Objective obj = make_objective(cfg, method);
  using clock = std::chrono::steady_clock;

  ModelParams params = init_params(cfg.model, ds.num_users, ds.num_items, dim,
                                   derive_seed(cfg.seed, init_label), cfg.init_std, cfg.use_bias);
  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  adam_cfg.l2 = cfg.l2;
  AdamState adam = make_adam_state(params, adam_cfg);

  GradientBuffer total_grads = make_grad_buffer(params);
  GradientBuffer part_grads = make_grad_buffer(params);

  RRDTargets user_targets, item_targets;
  std::uint64_t user_targets_hash = 0, item_targets_hash = 0;
  if (obj.lambda_rrd > 0.0 || obj.static_user_rrd) {
    RRDConfig rc{cfg.rrd_k, cfg.rrd_l, cfg.rrd_exhaustive_tail};
    user_targets = build_rrd_targets(*teacher, ds, rc, derive_seed(cfg.seed, "rrd"), Side::User);
    user_targets_hash = targets_hash(user_targets);
  }
  if (obj.static_item_rrd) {
    RRDConfig rc{cfg.rrd_k, cfg.rrd_l, cfg.rrd_exhaustive_tail};
    item_targets = build_rrd_targets(*teacher, ds, rc, derive_seed(cfg.seed, "rrd"), Side::Item);
    item_targets_hash = targets_hash(item_targets);
  }

  CorrectionConfig corr_cfg;
  corr_cfg.mu = cfg.mu;
  corr_cfg.m_budget = cfg.m;
  corr_cfg.pool = PoolConfig{cfg.t_teacher, cfg.t_student, cfg.n_random};
  corr_cfg.deterministic = obj.deterministic_sampling;
  CorrectionSamples user_samples, item_samples;

  TrainResult result;
  ModelParams best = params;
  int evals_since_best = 0;
  bool stopped = false;

  for (int epoch = 0; epoch < cfg.epochs && !stopped; ++epoch) {
    const auto t0 = clock::now();

    if (obj.corrections && epoch % cfg.resample_period == 0) {
      const std::uint64_t s = derive_seed(cfg.seed, "resample");
      if (obj.lambda_ucd > 0.0) {
        user_samples = build_correction_samples(ds, *teacher, params, Side::User, corr_cfg, s, epoch);
      }
      if (obj.lambda_icd > 0.0) {
        item_samples = build_correction_samples(ds, *teacher, params, Side::Item, corr_cfg, s, epoch);
      }
    }

    Rng shuffle_rng = fork_stream(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    Rng neg_rng = fork_stream(cfg.seed, "negatives", static_cast<std::uint64_t>(epoch));
    const std::vector<Batch> batches =
        make_batches(ds, static_cast<std::size_t>(cfg.batch_size), cfg.neg_ratio, shuffle_rng, neg_rng);

    EpochLog e;
    e.epoch = epoch;
    for (const Batch& batch : batches) {
      total_grads.clear();

      part_grads.clear();
      const double l_rs = base_loss(params, batch, part_grads);
      total_grads.add_scaled(part_grads, 1.0);

      double l_rrd = 0.0, l_ucd = 0.0, l_icd = 0.0;
      if (obj.lambda_rrd > 0.0) {
        part_grads.clear();
        l_rrd = rrd_loss(params, user_targets, batch.anchors, part_grads);
        total_grads.add_scaled(part_grads, obj.lambda_rrd);
      }
      if (obj.lambda_ucd > 0.0) {
        part_grads.clear();
        l_ucd = obj.static_user_rrd
                    ? rrd_loss(params, user_targets, batch.anchors, part_grads)
                    : ucd_loss(params, user_samples, batch.anchors, part_grads);
        total_grads.add_scaled(part_grads, obj.lambda_ucd);
      }
      if (obj.lambda_icd > 0.0) {
        const std::vector<int> batch_items = distinct_sorted(batch.positives);
        part_grads.clear();
        l_icd = obj.static_item_rrd
                    ? rrd_loss(params, item_targets, batch_items, part_grads)
                    : icd_loss(params, item_samples, batch_items, part_grads);
        total_grads.add_scaled(part_grads, obj.lambda_icd);
      }

      const double total = l_rs + obj.lambda_rrd * l_rrd + obj.lambda_ucd * l_ucd +
                           obj.lambda_icd * l_icd;
      if (!std::isfinite(total)) {
        throw NumericalError("training diverged (non-finite loss) at epoch " +
                             std::to_string(epoch));
      }
      adam_step(params, adam, total_grads);

      e.loss_rs += l_rs;
      e.loss_rrd += l_rrd;
      e.loss_ucd += l_ucd;
      e.loss_icd += l_icd;
      e.total += total;
    }
    const double nb = static_cast<double>(std::max<std::size_t>(batches.size(), 1));
    e.loss_rs /= nb;
    e.loss_rrd /= nb;
    e.loss_ucd /= nb;
    e.loss_icd /= nb;
    e.total /= nb;
    e.rrd_hash = user_targets_hash ^ item_targets_hash;
    e.ucd_hash = samples_hash(user_samples);
    e.icd_hash = samples_hash(item_samples);

    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs - 1) {
      const MetricReport rep = evaluate_model(params, ds, {5}, EvalTarget::Valid);
      e.valid_h5 = rep.mean_hit(5);
      e.valid_m5 = rep.mean_mrr(5);
      if (e.valid_h5 > result.best_valid_h5) {
        result.best_valid_h5 = e.valid_h5;
        result.best_epoch = epoch;
        best = params;
        evals_since_best = 0;
      } else if (++evals_since_best >= cfg.patience) {
        stopped = true;
      }
    }
    e.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    result.log.push_back(e);
  }

  if (!all_finite(best)) throw NumericalError("trained parameters contain non-finite values");
  result.params = std::move(best);
  return result;
}

}  // namespace

TrainResult train_teacher(const InteractionDataset& ds, const TrainConfig& cfg) {
  return train_model(ds, nullptr, cfg, Method::Student, cfg.teacher_dim, "teacher-init");
}

TrainResult distill_student(const InteractionDataset& ds, const ModelParams& teacher,
                            const TrainConfig& cfg, Method method) {
  return train_model(ds, &teacher, cfg, method, cfg.student_dim, "student-init");
}

std::map<std::string, TrainResult> run_ablation(const InteractionDataset& ds,
                                                const ModelParams& teacher,
                                                const TrainConfig& cfg) {
  std::map<std::string, TrainResult> out;
  for (Ablation a : {Ablation::Full, Ablation::NoCorrection, Ablation::NoItemSide,
                     Ablation::NoUserSide, Ablation::NoSampling}) {
    TrainConfig c = cfg;
    c.ablation = a;
    out.emplace(ablation_name(a), distill_student(ds, teacher, c, Method::DCD));
  }
  return out;
}

}  // namespace dcd
