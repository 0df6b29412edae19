#include "dcd/manifest.hpp"
#include "dcd/rng.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const std::string kBin = DCD_BIN;

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("dcd_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args, const std::string& stderr_to = "") {
  std::string cmd = kBin + " " + args + " >/dev/null";
  cmd += stderr_to.empty() ? " 2>/dev/null" : " 2>" + stderr_to;
  const int status = std::system(cmd.c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t file_hash(const std::string& path) {
  const std::string bytes = slurp(path);
  return dcd::fnv1a(bytes.data(), bytes.size());
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

// One shared tiny world per suite run: synth + split + quick teacher.
const Sandbox& world() {
  static Sandbox sb = [] {
    Sandbox s;
    REQUIRE(run("synth --out " + s.path("data") + " --users 25 --items 40 --rank 3 --per-user 8"
                " --seed 5") == 0);
    REQUIRE(run("split --data " + s.path("data/interactions.tsv") + " --out " + s.path("sp") +
                " --seed 5") == 0);
    write_file(s.path("cfg.txt"),
               "teacher_dim = 8\nstudent_dim = 3\nepochs = 4\nbatch_size = 32\n"
               "learning_rate = 0.05\npatience = 50\nrrd_k = 5\nrrd_l = 5\nm = 5\n"
               "t_teacher = 10\nt_student = 10\nn_random = 10\nresample_period = 2\n");
    REQUIRE(run("train-teacher --data " + s.path("data/interactions.tsv") + " --split " +
                s.path("sp/split.tsv") + " --config " + s.path("cfg.txt") + " --seed 1 --out " +
                s.path("teacher")) == 0);
    return s;
  }();
  return sb;
}

std::string common_args(const Sandbox& s) {
  return "--data " + s.path("data/interactions.tsv") + " --split " + s.path("sp/split.tsv") +
         " --config " + s.path("cfg.txt");
}

}  // namespace

TEST_CASE("synth and split are byte-deterministic") {
  const Sandbox& s = world();
  REQUIRE(run("synth --out " + s.path("data2") + " --users 25 --items 40 --rank 3 --per-user 8"
              " --seed 5") == 0);
  CHECK(slurp(s.path("data/interactions.tsv")) == slurp(s.path("data2/interactions.tsv")));

  REQUIRE(run("split --data " + s.path("data/interactions.tsv") + " --out " + s.path("sp2") +
              " --seed 5") == 0);
  CHECK(slurp(s.path("sp/split.tsv")) == slurp(s.path("sp2/split.tsv")));
}

TEST_CASE("ingest reports the documented counts and dedupes") {
  const Sandbox& s = world();
  write_file(s.path("tiny.csv"), "u1,iA\nu1,iB\nu2,iA\nu1,iA\n");
  REQUIRE(run("ingest --data " + s.path("tiny.csv") + " --out " + s.path("ing")) == 0);
  const std::string stats = slurp(s.path("ing/stats.json"));
  CHECK(stats.find("\"num_users\": 2") != std::string::npos);
  CHECK(stats.find("\"num_items\": 2") != std::string::npos);
  CHECK(stats.find("\"num_interactions\": 3") != std::string::npos);
}

TEST_CASE("teacher manifest lists exactly one checkpoint and re-runs identically") {
  const Sandbox& s = world();
  const dcd::RunManifest m = dcd::load_manifest(s.path("teacher/manifest.json"));
  CHECK(m.command == "train-teacher");
  REQUIRE(m.checkpoints.size() == 1);
  CHECK(fs::exists(m.checkpoints[0]));
  CHECK(!m.dataset_fingerprint.empty());
  CHECK(m.config.at("seed") == "1");

  REQUIRE(run("train-teacher " + common_args(s) + " --seed 1 --out " + s.path("teacher2")) == 0);
  CHECK(file_hash(s.path("teacher/teacher.ckpt")) == file_hash(s.path("teacher2/teacher.ckpt")));
}

TEST_CASE("method flags map onto the objective") {
  const Sandbox& s = world();
  REQUIRE(run("distill " + common_args(s) + " --teacher " + s.path("teacher/teacher.ckpt") +
              " --seed 2 --method student --out " + s.path("st")) == 0);
  // Pure student: every distillation column in the log is zero.
  std::ifstream log(s.path("st/train_log.csv"));
  std::string line;
  std::getline(log, line);  // header
  while (std::getline(log, line)) {
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    CHECK(std::stod(cols[2]) == 0.0);
    CHECK(std::stod(cols[3]) == 0.0);
    CHECK(std::stod(cols[4]) == 0.0);
  }

  REQUIRE(run("distill " + common_args(s) + " --teacher " + s.path("teacher/teacher.ckpt") +
              " --seed 2 --method dcd --ablation no_sampling --dump-samples --out " +
              s.path("ns")) == 0);
  CHECK(fs::exists(s.path("ns/samples_user.txt")));
  CHECK(fs::exists(s.path("ns/samples_item.txt")));
  CHECK(!slurp(s.path("ns/samples_user.txt")).empty());
}

TEST_CASE("evaluate writes reports and guards split fingerprints") {
  const Sandbox& s = world();
  REQUIRE(run("evaluate " + common_args(s) + " --model " + s.path("teacher/teacher.ckpt") +
              " --teacher " + s.path("teacher/teacher.ckpt") + " --method teacher --out " +
              s.path("ev")) == 0);
  const std::string report = slurp(s.path("ev/report.json"));
  CHECK(report.find("H@5") != std::string::npos);
  CHECK(report.find("M@10") != std::string::npos);
  // Teacher against itself: both discrepancy diagnostics are exactly zero.
  CHECK(report.find("\"discrepancy_user\": 0.0") != std::string::npos);
  CHECK(report.find("\"discrepancy_item\": 0.0") != std::string::npos);

  // A report produced under a different split must be rejected.
  REQUIRE(run("split --data " + s.path("data/interactions.tsv") + " --out " + s.path("sp3") +
              " --seed 99") == 0);
  const int code = run("evaluate --data " + s.path("data/interactions.tsv") + " --split " +
                       s.path("sp3/split.tsv") + " --model " + s.path("teacher/teacher.ckpt") +
                       " --compare " + s.path("ev/report.json") + " --out " + s.path("ev2"),
                       s.path("err.txt"));
  CHECK(code == 2);
  CHECK(slurp(s.path("err.txt")).find("split") != std::string::npos);
}

TEST_CASE("usage errors exit with code 1 and name the problem") {
  const Sandbox& s = world();
  CHECK(run("distill --data x --split y --out z") == 1);  // missing --teacher
  CHECK(run("nonsense-command") == 1);

  write_file(s.path("bad.cfg"), "learning_rte = 0.1\n");
  const int code = run("train-teacher --data " + s.path("data/interactions.tsv") + " --split " +
                       s.path("sp/split.tsv") + " --config " + s.path("bad.cfg") + " --out " +
                       s.path("bad"), s.path("err2.txt"));
  CHECK(code == 1);
  CHECK(slurp(s.path("err2.txt")).find("learning_rte") != std::string::npos);

  CHECK(run("evaluate " + common_args(s) + " --model does-not-exist.ckpt --out " +
            s.path("missing")) == 2);
}

TEST_CASE("environment variables override config keys") {
  const Sandbox& s = world();
  setenv("DCD_EPOCHS", "2", 1);
  REQUIRE(run("distill " + common_args(s) + " --teacher " + s.path("teacher/teacher.ckpt") +
              " --seed 3 --method rrd --out " + s.path("envrun")) == 0);
  unsetenv("DCD_EPOCHS");
  std::ifstream log(s.path("envrun/train_log.csv"));
  std::string line;
  int rows = 0;
  std::getline(log, line);
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 2);
  const dcd::RunManifest m = dcd::load_manifest(s.path("envrun/manifest.json"));
  CHECK(m.config.at("epochs") == "2");
}

TEST_CASE("ablate emits the comparison table across all modes") {
  const Sandbox& s = world();
  write_file(s.path("fast.cfg"),
             "teacher_dim = 8\nstudent_dim = 3\nepochs = 2\nbatch_size = 32\n"
             "learning_rate = 0.05\npatience = 50\nrrd_k = 4\nrrd_l = 4\nm = 4\n"
             "t_teacher = 8\nt_student = 8\nn_random = 8\nresample_period = 2\n");
  REQUIRE(run("ablate --data " + s.path("data/interactions.tsv") + " --split " +
              s.path("sp/split.tsv") + " --config " + s.path("fast.cfg") + " --teacher " +
              s.path("teacher/teacher.ckpt") + " --seed 4 --out " + s.path("ab")) == 0);
  const std::string table = slurp(s.path("ab/ablation.tsv"));
  for (const char* mode : {"full", "no_correction", "no_item_side", "no_user_side", "no_sampling"}) {
    CHECK(table.find(mode) != std::string::npos);
    CHECK(fs::exists(s.path(std::string("ab/") + mode + "/report.json")));
  }
}
