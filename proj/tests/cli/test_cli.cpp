#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mvdr/mvdr.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "mvdr_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Result run(const std::string& args, const std::string& env = "") {
  const auto out = scratch() / "stdout.txt";
  const auto err = scratch() / "stderr.txt";
  const std::string cmd = env + " " MVDR_CLI_PATH " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Small workload + index shared by the tests below.
const fs::path& workload() {
  static const fs::path dir = [] {
    const auto d = scratch() / "work";
    REQUIRE(run("synth --docs 200 --doc-len 6 --queries 10 --query-len 4 --dim 16 --clusters 4 --out-dir " +
                d.string()).code == 0);
    REQUIRE(run("build --corpus " + (d / "corpus.mvec").string() + " --index " + (d / "index.ivpq").string() +
                " --partitions 16 --subquantizers 4 --codebook-size 32 --train-fraction 0.5").code == 0);
    return d;
  }();
  return dir;
}

std::string inputs() {
  const auto& d = workload();
  return " --corpus " + (d / "corpus.mvec").string() + " --index " + (d / "index.ivpq").string() + " --queries " +
         (d / "queries.mvec").string();
}

}  // namespace

TEST_CASE("synth writes a workload and is deterministic", "[cli]") {
  const auto a = scratch() / "syn_a";
  const auto b = scratch() / "syn_b";
  REQUIRE(run("synth --docs 50 --out-dir " + a.string()).code == 0);
  REQUIRE(run("synth --docs 50 --out-dir " + b.string()).code == 0);
  for (const char* f : {"corpus.mvec", "corpus.tsv", "queries.mvec", "queries.tsv", "qrels.txt"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto one = scratch() / "syn_one";
  REQUIRE(run("synth --docs 30 --queries 2 --clusters 1 --out-dir " + one.string()).code == 0);
  const auto qrels = mvdr::eval::read_qrels(one / "qrels.txt");
  CHECK(qrels.relevant_count("Q0") == 30);
  CHECK(qrels.relevant_count("Q1") == 30);
}

TEST_CASE("build prints statistics and reports usage errors", "[cli]") {
  const auto& d = workload();
  const auto r = run("build --corpus " + (d / "corpus.mvec").string() + " --index " + (scratch() / "b.ivpq").string() +
                     " --partitions 16 --subquantizers 4 --codebook-size 32 --train-fraction 0.5");
  CHECK(r.code == 0);
  CHECK(r.out.find("L=16") != std::string::npos);
  CHECK(r.out.find("bytes") != std::string::npos);

  const auto missing = run("build --index " + (scratch() / "x.ivpq").string());
  CHECK(missing.code == 2);
  CHECK(missing.err.find("--corpus") != std::string::npos);

  const auto too_few = run("build --corpus " + (d / "corpus.mvec").string() + " --index " +
                           (scratch() / "x.ivpq").string() + " --partitions 5000");
  CHECK(too_few.code == 1);
  CHECK(too_few.err.rfind("error:", 0) == 0);
  CHECK(std::count(too_few.err.begin(), too_few.err.end(), '\n') == 1);
}

TEST_CASE("search flag rules", "[cli]") {
  const auto run_out = " --run-out " + (scratch() / "s.run").string();
  CHECK(run("search" + inputs() + " --strategy kprime --k 200" + run_out).code == 2);
  CHECK(run("search" + inputs() + " --strategy maxsim" + run_out).code == 2);
  CHECK(run("search" + inputs() + " --strategy maxsim --k 20 --no-cut" + run_out).code == 2);
  CHECK(run("search" + inputs() + " --strategy bogus --k 20" + run_out).code == 2);
  CHECK(run("search" + inputs() + " --strategy maxsim --no-cut --nprobe 4" + run_out).code == 0);
}

TEST_CASE("search writes a run and timings", "[cli]") {
  const auto run_path = scratch() / "k.run";
  const auto timings = scratch() / "k.csv";
  const auto r = run("search" + inputs() + " --strategy kprime --kprime 100 --nprobe 4 --depth 5 --run-out " +
                     run_path.string() + " --timings-out " + timings.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.empty());
  const auto parsed = mvdr::eval::read_run(run_path);
  CHECK(parsed.queries.size() == 10);
  for (const auto& q : parsed.queries) CHECK(q.entries.size() == 5);
  const auto csv = slurp(timings);
  CHECK(csv.rfind("qid,stage1_ms,stage2_ms,candidates\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 11);

  const auto maxsim = scratch() / "m.run";
  REQUIRE(run("search" + inputs() + " --strategy maxsim --k 20 --nprobe 4 --run-out " + maxsim.string()).code == 0);
  for (const auto& q : mvdr::eval::read_run(maxsim).queries) CHECK(q.entries.size() == 20);
}

TEST_CASE("firststage writes approximate rankings", "[cli]") {
  const auto path = scratch() / "fs.run";
  REQUIRE(run("firststage" + inputs() + " --strategy maxsim --k 1 --nprobe 4 --run-out " + path.string()).code == 0);
  const auto parsed = mvdr::eval::read_run(path);
  CHECK(parsed.queries.size() == 10);
  for (const auto& q : parsed.queries) CHECK(q.entries.size() == 1);
  CHECK(run("firststage" + inputs() + " --strategy kprime --run-out " + path.string()).code == 2);
}

TEST_CASE("evaluate", "[cli]") {
  const auto& d = workload();
  const auto path = scratch() / "e.run";
  REQUIRE(run("search" + inputs() + " --kprime 200 --nprobe 16 --run-out " + path.string()).code == 0);
  const auto qrels = (d / "qrels.txt").string();

  const auto r = run("evaluate --run " + path.string() + " --qrels " + qrels);
  REQUIRE(r.code == 0);
  for (const char* m : {"mrr\tall\t", "ndcg10\tall\t", "map\tall\t", "recall\tall\t"}) {
    CHECK(r.out.find(m) != std::string::npos);
  }

  const auto same = run("evaluate --run " + path.string() + " --qrels " + qrels + " --baseline-run " + path.string());
  REQUIRE(same.code == 0);
  std::istringstream lines(same.out);
  std::string line;
  int tests = 0;
  while (std::getline(lines, line)) {
    if (line.find("\tttest\t") == std::string::npos) continue;
    ++tests;
    CHECK(line.find("p_raw=1") != std::string::npos);
  }
  CHECK(tests == 4);

  const auto bad = run("evaluate --run " + path.string() + " --qrels " + qrels + " --metrics mrr,p@5");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("ndcg10") != std::string::npos);
}

TEST_CASE("evaluate reproduces hand-computed fixtures", "[cli]") {
  const auto run_path = scratch() / "fixture.run";
  const auto qrels_path = scratch() / "fixture.qrels";
  std::ofstream(run_path) << "q1 Q0 r1 1 3 t\nq1 Q0 n 2 2 t\nq1 Q0 r2 3 1 t\n";
  std::ofstream(qrels_path) << "q1 0 r1 1\nq1 0 r2 1\nq1 0 n 0\n";
  const auto r = run("evaluate --run " + run_path.string() + " --qrels " + qrels_path.string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("ndcg10\tall\t0.919721") != std::string::npos);
  CHECK(r.out.find("mrr\tall\t1.000000") != std::string::npos);
  CHECK(r.out.find("map\tall\t0.833333") != std::string::npos);
}

TEST_CASE("sweep and correlate", "[cli]") {
  const auto& d = workload();
  const auto csv = scratch() / "sweep.csv";
  const auto r = run("sweep" + inputs() + " --qrels " + (d / "qrels.txt").string() +
                     " --strategy maxsim --grid 5,10:20:10 --kprime 200 --nprobe 16 --baseline-kprime 200 --out " +
                     csv.string());
  REQUIRE(r.code == 0);
  const auto text = slurp(csv);
  CHECK(text.rfind("k,mean_candidates,mrr,ndcg10,map,recall,p_adjusted,significant\n5,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK(run("sweep" + inputs() + " --qrels " + (d / "qrels.txt").string() + " --grid 1:x:2").code == 2);

  const auto a = scratch() / "ca.run";
  REQUIRE(run("search" + inputs() + " --kprime 100 --nprobe 4 --depth 20 --run-out " + a.string()).code == 0);
  const auto scatter = scratch() / "scatter.csv";
  const auto rho = scratch() / "rho.csv";
  const auto c = run("correlate --run-a " + a.string() + " --run-b " + a.string() + " --scatter-out " +
                     scatter.string() + " --rho-out " + rho.string());
  REQUIRE(c.code == 0);
  CHECK(slurp(scatter).rfind("qid,docno,rank_a,rank_b\n", 0) == 0);
  std::istringstream rows(slurp(rho));
  std::string line;
  std::getline(rows, line);
  CHECK(line == "qid,shared,rho");
  int n = 0;
  while (std::getline(rows, line)) {
    ++n;
    CHECK(std::stod(line.substr(line.rfind(',') + 1)) == 1.0);
  }
  CHECK(n == 10);

  const auto other = scratch() / "other.run";
  std::ofstream(other) << "Q0 Q0 nowhere 1 1 t\n";
  const auto disjoint = run("correlate --run-a " + a.string() + " --run-b " + other.string() + " --scatter-out " +
                            scatter.string());
  CHECK(disjoint.code == 0);
  CHECK(slurp(scatter) == "qid,docno,rank_a,rank_b\n");
  CHECK(disjoint.out.find("NA") != std::string::npos);
  CHECK(disjoint.err.find("warning") != std::string::npos);
}

TEST_CASE("search is deterministic across thread counts", "[cli]") {
  const auto a = scratch() / "t1.run";
  const auto b = scratch() / "t8.run";
  const std::string flags = inputs() + " --strategy maxsim --k 30 --kprime 100 --nprobe 4 --run-out ";
  REQUIRE(run("search" + flags + a.string(), "MAXSIM_THREADS=1").code == 0);
  REQUIRE(run("search" + flags + b.string(), "MAXSIM_THREADS=8").code == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("help exits cleanly", "[cli]") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code == 2);
  CHECK(run("nonsense").code == 2);
}
