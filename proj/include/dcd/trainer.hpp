#pragma once

#include "dcd/dataset.hpp"
#include "dcd/distill.hpp"
#include "dcd/models.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace dcd {

enum class Method { Student, RRD, DCD };
enum class Ablation { Full, NoCorrection, NoItemSide, NoUserSide, NoSampling };

Method method_from(const std::string& name);
const char* method_name(Method m);
Ablation ablation_from(const std::string& name);
const char* ablation_name(Ablation a);

// Every knob of a run. Field names double as the config-file keys.
struct TrainConfig {
  ModelKind model = ModelKind::BPR;
  int teacher_dim = 200;
  int student_dim = 20;
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 0.01;
  double l2 = 1e-4;
  double lambda_rrd = 0.1;
  double lambda_ucd = 0.01;
  double lambda_icd = 0.01;
  double mu = 1e-3;
  int m = 40;  // correction budget per side
  int t_teacher = 100;
  int t_student = 100;
  int n_random = 100;
  int rrd_k = 40;
  int rrd_l = 40;
  bool rrd_exhaustive_tail = false;
  int resample_period = 5;
  Ablation ablation = Ablation::Full;
  std::uint64_t seed = 0;
  int patience = 20;
  int eval_every = 1;
  int neg_ratio = 1;
  double init_std = 0.01;
  bool use_bias = false;

  void validate() const;  // throws std::invalid_argument naming the field
};

// key = value assignment; throws std::invalid_argument naming an unknown key.
void set_config_key(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig load_config(std::istream& in);
TrainConfig load_config_file(const std::string& path);
// DCD_<KEY> environment variables override any config key.
void apply_env_overrides(TrainConfig& cfg, const std::string& prefix = "DCD_");
// Byte-exact re-runnable snapshot, keyed by field name.
std::map<std::string, std::string> config_snapshot(const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double loss_rs = 0.0;
  double loss_rrd = 0.0;
  double loss_ucd = 0.0;
  double loss_icd = 0.0;
  double total = 0.0;
  double valid_h5 = -1.0;  // -1 when not evaluated this epoch
  double valid_m5 = -1.0;
  double seconds = 0.0;
  // Snapshot hashes, for auditing that RRD targets stay fixed while
  // correction samples move only at resample epochs.
  std::uint64_t rrd_hash = 0;
  std::uint64_t ucd_hash = 0;
  std::uint64_t icd_hash = 0;
};

struct TrainResult {
  ModelParams params;  // best validation checkpoint
  std::vector<EpochLog> log;
  int best_epoch = -1;
  double best_valid_h5 = -1.0;
};

void write_train_log(std::ostream& out, const std::vector<EpochLog>& log);

// Teacher: base loss only, Adam, early stopping on validation H@5.
TrainResult train_teacher(const InteractionDataset& ds, const TrainConfig& cfg);

// Student: L_RS + lambda_rrd L_RRD + lambda_ucd L_UCD + lambda_icd L_ICD,
// with the method/ablation switches collapsing terms. RRD targets are built
// once; correction samples refresh every resample_period epochs.
TrainResult distill_student(const InteractionDataset& ds, const ModelParams& teacher,
                            const TrainConfig& cfg, Method method);

// One full-method run plus the four ablations, same seed.
std::map<std::string, TrainResult> run_ablation(const InteractionDataset& ds,
                                                const ModelParams& teacher,
                                                const TrainConfig& cfg);

}  // namespace dcd
