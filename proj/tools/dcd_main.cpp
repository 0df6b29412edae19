#include "dcd/dataset.hpp"
#include "dcd/distill.hpp"
#include "dcd/eval.hpp"
#include "dcd/manifest.hpp"
#include "dcd/models.hpp"
#include "dcd/synth.hpp"
#include "dcd/trainer.hpp"
#include "dcd/types.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace dcd;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory: " + out);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Shared option bundle for the training-style commands.
struct RunArgs {
  std::string data;
  std::string split;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_run_options(CLI::App* cmd, RunArgs& args, bool need_split) {
  cmd->add_option("--data", args.data, "interactions file (tsv/csv)")->required();
  auto* split = cmd->add_option("--split", args.split, "split sidecar file");
  if (need_split) split->required();
  cmd->add_option("--config", args.config, "key = value config file");
  cmd->add_option("--seed", args.seed, "master seed (overrides config)")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--out", args.out, "output directory")->required();
}

TrainConfig resolve_config(const RunArgs& args) {
  TrainConfig cfg;
  if (!args.config.empty()) cfg = load_config_file(args.config);
  apply_env_overrides(cfg);
  if (args.seed_set) cfg.seed = args.seed;
  cfg.validate();
  return cfg;
}

InteractionDataset load_split_dataset(const RunArgs& args) {
  InteractionDataset ds = load_interactions_file(args.data);
  load_split(ds, args.split);
  return ds;
}

void write_log_file(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path);
  write_train_log(out, log);
}

MetricReport report_for(const ModelParams& params, const InteractionDataset& ds,
                        const std::vector<int>& ns, const std::string& method,
                        std::uint64_t seed) {
  MetricReport rep = evaluate_model(params, ds, ns);
  rep.method = method;
  rep.seed = seed;
  return rep;
}

int cmd_synth(const std::string& out, const SynthConfig& scfg) {
  Timer timer;
  ensure_out_dir(out);
  InteractionDataset ds = synth_dataset(scfg);
  const std::string data_path = join(out, "interactions.tsv");
  write_interactions(ds, data_path);

  RunManifest m;
  m.command = "synth";
  m.seed = scfg.seed;
  m.dataset_fingerprint = ds.fingerprint();
  m.config = {{"users", std::to_string(scfg.num_users)},
              {"items", std::to_string(scfg.num_items)},
              {"rank", std::to_string(scfg.rank)},
              {"per_user", std::to_string(scfg.interactions_per_user)},
              {"temperature", std::to_string(scfg.temperature)},
              {"seed", std::to_string(scfg.seed)}};
  m.reports = {data_path};
  m.wall_seconds = timer.seconds();
  save_manifest(m, join(out, "manifest.json"));
  std::cout << "synth: " << ds.num_users << " users, " << ds.num_items << " items, "
            << ds.num_train_interactions() << " interactions -> " << data_path << "\n";
  return 0;
}

int cmd_ingest(const std::string& data, const std::string& out, const LoadOptions& opts) {
  Timer timer;
  ensure_out_dir(out);
  InteractionDataset ds = load_interactions_file(data, opts);
  const std::string data_path = join(out, "interactions.tsv");
  write_interactions(ds, data_path);

  nlohmann::json stats = {{"num_users", ds.num_users},
                          {"num_items", ds.num_items},
                          {"num_interactions", ds.num_train_interactions()},
                          {"fingerprint", ds.fingerprint()}};
  std::ofstream stats_out(join(out, "stats.json"));
  stats_out << stats.dump(2) << '\n';

  RunManifest m;
  m.command = "ingest";
  m.dataset_fingerprint = ds.fingerprint();
  m.inputs = {data};
  m.reports = {data_path, join(out, "stats.json")};
  m.wall_seconds = timer.seconds();
  save_manifest(m, join(out, "manifest.json"));
  std::cout << "ingest: " << ds.num_users << " users, " << ds.num_items << " items, "
            << ds.num_train_interactions() << " interactions\n";
  return 0;
}

int cmd_split(const std::string& data, const std::string& out, std::uint64_t seed,
              int min_interactions) {
  Timer timer;
  ensure_out_dir(out);
  InteractionDataset ds = load_interactions_file(data);
  leave_one_out_split(ds, seed, min_interactions);
  const std::string split_path = join(out, "split.tsv");
  save_split(ds, split_path);

  int split_users = 0;
  for (int u = 0; u < ds.num_users; ++u) split_users += ds.test_item[u] >= 0 ? 1 : 0;

  RunManifest m;
  m.command = "split";
  m.seed = seed;
  m.dataset_fingerprint = ds.fingerprint();
  m.config = {{"min_interactions", std::to_string(min_interactions)},
              {"seed", std::to_string(seed)}};
  m.inputs = {data};
  m.reports = {split_path};
  m.wall_seconds = timer.seconds();
  save_manifest(m, join(out, "manifest.json"));
  std::cout << "split: " << split_users << " of " << ds.num_users
            << " users hold out one valid + one test item -> " << split_path << "\n";
  return 0;
}

int cmd_train_teacher(const RunArgs& args) {
  Timer timer;
  ensure_out_dir(args.out);
  const TrainConfig cfg = resolve_config(args);
  InteractionDataset ds = load_split_dataset(args);

  TrainResult res = train_teacher(ds, cfg);
  const std::string ckpt = join(args.out, "teacher.ckpt");
  save_checkpoint(ckpt, res.params, nullptr, cfg.seed);
  const std::string log_path = join(args.out, "train_log.csv");
  write_log_file(log_path, res.log);

  RunManifest m;
  m.command = "train-teacher";
  m.seed = cfg.seed;
  m.config = config_snapshot(cfg);
  m.dataset_fingerprint = ds.fingerprint();
  m.inputs = {args.data, args.split};
  m.checkpoints = {ckpt};
  m.logs = {log_path};
  m.wall_seconds = timer.seconds();
  save_manifest(m, join(args.out, "manifest.json"));
  std::cout << "teacher: best valid H@5 " << res.best_valid_h5 << " at epoch " << res.best_epoch
            << " -> " << ckpt << "\n";
  return 0;
}

int cmd_distill(const RunArgs& args, const std::string& teacher_path, const std::string& method_s,
                const std::string& ablation_s, bool dump_samples) {
  Timer timer;
  ensure_out_dir(args.out);
  TrainConfig cfg = resolve_config(args);
  if (!ablation_s.empty()) cfg.ablation = ablation_from(ablation_s);
  const Method method = method_from(method_s);
  InteractionDataset ds = load_split_dataset(args);

  Checkpoint teacher = load_checkpoint(teacher_path);
  check_matches(teacher.params, ds);

  TrainResult res = distill_student(ds, teacher.params, cfg, method);
  const std::string ckpt = join(args.out, "student.ckpt");
  save_checkpoint(ckpt, res.params, nullptr, cfg.seed);
  const std::string log_path = join(args.out, "train_log.csv");
  write_log_file(log_path, res.log);

  RunManifest m;
  m.command = "distill";
  m.seed = cfg.seed;
  m.config = config_snapshot(cfg);
  m.config["method"] = method_s;
  m.dataset_fingerprint = ds.fingerprint();
  m.inputs = {args.data, args.split, teacher_path};
  m.checkpoints = {ckpt};
  m.logs = {log_path};

  if (dump_samples) {
    CorrectionConfig corr;
    corr.mu = cfg.mu;
    corr.m_budget = cfg.m;
    corr.pool = PoolConfig{cfg.t_teacher, cfg.t_student, cfg.n_random};
    corr.deterministic = cfg.ablation == Ablation::NoSampling;
    for (Side side : {Side::User, Side::Item}) {
      CorrectionSamples samples = build_correction_samples(
          ds, teacher.params, res.params, side, corr, fork_stream(cfg.seed, "resample").next_u64(), 0);
      const std::string dump_path =
          join(args.out, std::string("samples_") + side_name(side) + ".txt");
      std::ofstream dump(dump_path);
      dump_correction_samples(dump, ds, samples);
      m.logs.push_back(dump_path);
    }
  }
  m.wall_seconds = timer.seconds();
  save_manifest(m, join(args.out, "manifest.json"));
  std::cout << "distill(" << method_s << "," << ablation_name(cfg.ablation) << "): best valid H@5 "
            << res.best_valid_h5 << " at epoch " << res.best_epoch << " -> " << ckpt << "\n";
  return 0;
}

int cmd_evaluate(const RunArgs& args, const std::string& model_path,
                 const std::string& teacher_path, const std::string& compare_path,
                 const std::string& metric_ns, const std::string& method_label) {
  Timer timer;
  ensure_out_dir(args.out);
  InteractionDataset ds = load_split_dataset(args);
  Checkpoint model = load_checkpoint(model_path);
  check_matches(model.params, ds);

  std::vector<int> ns;
  {
    std::stringstream ss(metric_ns);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) ns.push_back(std::stoi(tok));
    }
    if (ns.empty()) throw std::invalid_argument("--metric-n: no values given");
  }

  MetricReport rep = report_for(model.params, ds, ns, method_label, model.seed);

  if (!teacher_path.empty()) {
    Checkpoint teacher = load_checkpoint(teacher_path);
    check_matches(teacher.params, ds);
    rep.extras["discrepancy_user"] =
        avg_rank_discrepancy(teacher.params, model.params, ds, Side::User);
    rep.extras["discrepancy_item"] =
        avg_rank_discrepancy(teacher.params, model.params, ds, Side::Item);
  }
  if (!compare_path.empty()) {
    const MetricReport other = load_report(compare_path);
    if (other.dataset_fingerprint != rep.dataset_fingerprint) {
      throw DataError("--compare: reports were produced on different dataset splits");
    }
    for (int n : ns) {
      const std::string key = "H@" + std::to_string(n);
      if (other.hit.count(n)) rep.extras["p_value_" + key] = paired_ttest(rep, other, key).p;
    }
  }

  const std::string json_path = join(args.out, "report.json");
  const std::string csv_path = join(args.out, "report.csv");
  save_report(rep, json_path, csv_path);

  RunManifest m;
  m.command = "evaluate";
  m.seed = model.seed;
  m.dataset_fingerprint = ds.fingerprint();
  m.inputs = {args.data, args.split, model_path};
  if (!teacher_path.empty()) m.inputs.push_back(teacher_path);
  if (!compare_path.empty()) m.inputs.push_back(compare_path);
  m.reports = {json_path, csv_path};
  m.wall_seconds = timer.seconds();
  save_manifest(m, join(args.out, "manifest.json"));

  std::cout << "evaluate(" << method_label << "):";
  for (int n : ns) {
    std::cout << " H@" << n << "=" << rep.mean_hit(n) << " M@" << n << "=" << rep.mean_mrr(n);
  }
  for (const auto& [k, v] : rep.extras) std::cout << ' ' << k << '=' << v;
  std::cout << "\n";
  return 0;
}

int cmd_ablate(const RunArgs& args, const std::string& teacher_path) {
  Timer timer;
  ensure_out_dir(args.out);
  const TrainConfig cfg = resolve_config(args);
  InteractionDataset ds = load_split_dataset(args);
  Checkpoint teacher = load_checkpoint(teacher_path);
  check_matches(teacher.params, ds);

  RunManifest m;
  m.command = "ablate";
  m.seed = cfg.seed;
  m.config = config_snapshot(cfg);
  m.dataset_fingerprint = ds.fingerprint();
  m.inputs = {args.data, args.split, teacher_path};

  const std::string table_path = join(args.out, "ablation.tsv");
  std::ofstream table(table_path);
  table << "mode\tH@5\tM@5\tH@10\tM@10\n";
  std::cout << "mode\tH@5\tM@5\tH@10\tM@10\n";

  for (const auto& [mode, res] : run_ablation(ds, teacher.params, cfg)) {
    const std::string mode_dir = join(args.out, mode);
    ensure_out_dir(mode_dir);
    const std::string ckpt = join(mode_dir, "student.ckpt");
    save_checkpoint(ckpt, res.params, nullptr, cfg.seed);
    write_log_file(join(mode_dir, "train_log.csv"), res.log);
    MetricReport rep = report_for(res.params, ds, {5, 10}, "dcd/" + mode, cfg.seed);
    save_report(rep, join(mode_dir, "report.json"), join(mode_dir, "report.csv"));
    m.checkpoints.push_back(ckpt);
    m.reports.push_back(join(mode_dir, "report.json"));
    m.logs.push_back(join(mode_dir, "train_log.csv"));

    char row[256];
    std::snprintf(row, sizeof(row), "%s\t%.4f\t%.4f\t%.4f\t%.4f", mode.c_str(), rep.mean_hit(5),
                  rep.mean_mrr(5), rep.mean_hit(10), rep.mean_mrr(10));
    table << row << '\n';
    std::cout << row << "\n";
  }
  m.reports.push_back(table_path);
  m.wall_seconds = timer.seconds();
  save_manifest(m, join(args.out, "manifest.json"));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dcd: ranking-distillation toolkit for top-N recommenders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  // synth
  SynthConfig scfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic low-rank dataset");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--users", scfg.num_users);
  synth->add_option("--items", scfg.num_items);
  synth->add_option("--rank", scfg.rank);
  synth->add_option("--per-user", scfg.interactions_per_user);
  synth->add_option("--temperature", scfg.temperature);
  synth->add_option("--seed", scfg.seed);

  // ingest
  std::string ingest_data, ingest_out, ingest_delim = "auto";
  LoadOptions load_opts;
  auto* ingest = app.add_subcommand("ingest", "normalize an interaction log");
  ingest->add_option("--data", ingest_data)->required();
  ingest->add_option("--out", ingest_out)->required();
  ingest->add_option("--delimiter", ingest_delim, "auto|comma|tab");
  ingest->add_option("--min-user-count", load_opts.min_user_count);
  ingest->add_option("--min-item-count", load_opts.min_item_count);

  // split
  std::string split_data, split_out;
  std::uint64_t split_seed = 0;
  int min_interactions = 3;
  auto* split = app.add_subcommand("split", "leave-one-out split (one valid + one test per user)");
  split->add_option("--data", split_data)->required();
  split->add_option("--out", split_out)->required();
  split->add_option("--seed", split_seed);
  split->add_option("--min-interactions", min_interactions);

  // train-teacher
  RunArgs teacher_args;
  auto* teach = app.add_subcommand("train-teacher", "train the teacher on the base loss");
  add_run_options(teach, teacher_args, true);

  // distill
  RunArgs distill_args;
  std::string teacher_path, method = "dcd", ablation;
  bool dump_samples = false;
  auto* dist = app.add_subcommand("distill", "train a student (student|rrd|dcd)");
  add_run_options(dist, distill_args, true);
  dist->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  dist->add_option("--method", method, "student|rrd|dcd");
  dist->add_option("--ablation", ablation,
                   "full|no_correction|no_item_side|no_user_side|no_sampling");
  dist->add_flag("--dump-samples", dump_samples, "write correction-sample dumps");

  // evaluate
  RunArgs eval_args;
  std::string eval_model, eval_teacher, eval_compare, metric_ns = "5,10", method_label = "model";
  auto* ev = app.add_subcommand("evaluate", "leave-one-out metrics for a checkpoint");
  add_run_options(ev, eval_args, true);
  ev->add_option("--model", eval_model, "checkpoint to evaluate")->required();
  ev->add_option("--teacher", eval_teacher, "teacher checkpoint for discrepancy diagnostics");
  ev->add_option("--compare", eval_compare, "report.json to compare against (paired t-test)");
  ev->add_option("--metric-n", metric_ns, "comma-separated N list");
  ev->add_option("--method", method_label, "method label for the report");

  // ablate
  RunArgs ablate_args;
  std::string ablate_teacher;
  auto* ab = app.add_subcommand("ablate", "run every ablation mode and tabulate");
  add_run_options(ab, ablate_args, true);
  ab->add_option("--teacher", ablate_teacher, "teacher checkpoint")->required();

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(synth_out, scfg);
    if (ingest->parsed()) {
      if (ingest_delim == "comma") load_opts.delimiter = ',';
      else if (ingest_delim == "tab") load_opts.delimiter = '\t';
      else if (ingest_delim != "auto") {
        throw std::invalid_argument("--delimiter must be auto, comma or tab");
      }
      return cmd_ingest(ingest_data, ingest_out, load_opts);
    }
    if (split->parsed()) return cmd_split(split_data, split_out, split_seed, min_interactions);
    if (teach->parsed()) return cmd_train_teacher(teacher_args);
    if (dist->parsed()) return cmd_distill(distill_args, teacher_path, method, ablation, dump_samples);
    if (ev->parsed()) {
      return cmd_evaluate(eval_args, eval_model, eval_teacher, eval_compare, metric_ns, method_label);
    }
    if (ab->parsed()) return cmd_ablate(ablate_args, ablate_teacher);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
