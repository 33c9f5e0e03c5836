#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matext/csv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string binary_path() {
  const char* env = std::getenv("MATEXT_BIN");
  REQUIRE_MESSAGE(env != nullptr, "MATEXT_BIN must point at the command-line binary");
  return env;
}

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

CliResult run_cli(const std::string& args) {
  const std::string command = "\"" + binary_path() + "\" " + args + " 2>&1";
  CliResult result;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buffer[4096];
  while (std::size_t got = std::fread(buffer, 1, sizeof buffer, pipe))
    result.output.append(buffer, got);
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

/// Fresh working directory for one test's files.
fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("matext_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

/// The six-document instance whose model-assisted estimate is exactly 1.5.
void write_worked_example(const fs::path& dir) {
  matext::write_text_file((dir / "exp.csv").string(),
                          "id,arm,x0,human_score,coded\n"
                          "t1,1,0.1,2,1\n"
                          "t2,1,0.2,4,1\n"
                          "t3,1,0.3,,0\n"
                          "c1,0,0.4,,0\n"
                          "c2,0,0.5,2,1\n"
                          "c3,0,0.6,3,1\n");
  matext::write_text_file((dir / "preds.csv").string(),
                          "id,predicted_score\n"
                          "t1,1\nt2,3\nt3,5\nc1,2\nc2,2\nc3,2\n");
}

/// 24 documents, 6 coded per arm: enough for 2-fold cross-fitting.
void write_wide_example(const fs::path& dir) {
  std::string content = "id,arm,x0,x1,human_score,coded\n";
  // deterministic pseudo-features; scores follow x0 with an arm offset
  for (int i = 0; i < 24; ++i) {
    const int arm = i % 2;
    const double x0 = 0.37 * ((i * 7) % 11) - 1.8;
    const double x1 = 0.21 * ((i * 5) % 13) - 1.2;
    const bool coded = i < 12;
    const double y = 1.0 + 0.8 * x0 - 0.3 * x1 + 0.4 * arm + 0.05 * ((i * 3) % 7);
    content += "w" + std::to_string(i) + "," + std::to_string(arm) + "," +
               std::to_string(x0) + "," + std::to_string(x1) + "," +
               (coded ? std::to_string(y) : "") + "," + (coded ? "1" : "0") + "\n";
  }
  matext::write_text_file((dir / "wide.csv").string(), content);
}

}  // namespace

TEST_CASE("cli: invalid plan flags exit 2 naming the bound") {
  const auto dir = work_dir("badplan");
  const auto r = run_cli("--out " + q(dir / "x") + " plan --p 1.5");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("p") != std::string::npos);
  CHECK(r.output.find("(0,1)") != std::string::npos);
}

TEST_CASE("cli: empty sample request exits 2") {
  const auto dir = work_dir("badsample");
  write_worked_example(dir);
  const auto r = run_cli("--out " + q(dir / "s") + " sample --data " + q(dir / "exp.csv") +
                         " --n1 0 --n0 0");
  CHECK(r.exit_code == 2);
}

TEST_CASE("cli: plan solves the one-third coded fraction example") {
  const auto dir = work_dir("plan");
  const auto r = run_cli("--out " + q(dir / "plan") +
                         " plan --N 1361 --p 0.5305 --r2 0.62 --target-mdes 0.20");
  REQUIRE(r.exit_code == 0);
  const json report = json::parse(matext::read_text_file((dir / "plan.json").string()));
  REQUIRE(report.contains("required_fraction"));
  const double h = report["required_fraction"]["h"].get<double>();
  CHECK(report["required_fraction"]["feasible"].get<bool>());
  CHECK(h > 0.30);
  CHECK(h < 0.36);
  // manifest carries enough to re-run
  const json manifest = json::parse(matext::read_text_file((dir / "plan.manifest.json").string()));
  CHECK(manifest["command"] == "plan");
  CHECK(manifest["parameters"].contains("r2"));
}

TEST_CASE("cli: estimate reproduces the worked example through external predictions") {
  const auto dir = work_dir("estimate");
  write_worked_example(dir);
  const auto r = run_cli("--out " + q(dir / "est") + " estimate --data " + q(dir / "exp.csv") +
                         " --learner external --predictions " + q(dir / "preds.csv"));
  REQUIRE(r.exit_code == 0);
  const auto table = matext::read_csv((dir / "est.csv").string());
  const int method = table.require_col("method");
  const int tau = table.require_col("tau_hat");
  bool found = false;
  for (const auto& row : table.rows)
    if (row[method] == "model_assisted") {
      CHECK(row[tau] == "1.5");
      found = true;
    }
  CHECK(found);
}

TEST_CASE("cli: zero external predictions collapse model-assisted onto subset") {
  const auto dir = work_dir("zeros");
  write_worked_example(dir);
  matext::write_text_file((dir / "zeros.csv").string(),
                          "id,predicted_score\n"
                          "t1,0\nt2,0\nt3,0\nc1,0\nc2,0\nc3,0\n");
  const auto r = run_cli("--out " + q(dir / "est") + " estimate --data " + q(dir / "exp.csv") +
                         " --learner external --predictions " + q(dir / "zeros.csv"));
  REQUIRE(r.exit_code == 0);
  const auto table = matext::read_csv((dir / "est.csv").string());
  const int method = table.require_col("method");
  std::vector<std::string> subset_row, ma_row;
  for (const auto& row : table.rows) {
    if (row[method] == "subset") subset_row = row;
    if (row[method] == "model_assisted") ma_row = row;
  }
  REQUIRE_FALSE(subset_row.empty());
  REQUIRE_FALSE(ma_row.empty());
  // point estimates collapse bitwise; the variance formulas agree
  // algebraically but accumulate in different orders
  CHECK(subset_row[1] == ma_row[1]);
  for (const int c : {2, 3, 4})  // se, ci_lo, ci_hi
    CHECK(std::stod(subset_row[c]) == doctest::Approx(std::stod(ma_row[c])).epsilon(1e-12));
}

TEST_CASE("cli: same seed gives byte-identical outputs, learner runs end to end") {
  const auto dir = work_dir("repro");
  write_wide_example(dir);
  const std::string args = " estimate --data " + q(dir / "wide.csv") +
                           " --learner ridge --lambda 0.5 --K 2 --mode cv_departure";
  REQUIRE(run_cli("--seed 7 --out " + q(dir / "a") + args).exit_code == 0);
  REQUIRE(run_cli("--seed 7 --out " + q(dir / "b") + args).exit_code == 0);
  CHECK(matext::read_text_file((dir / "a.csv").string()) ==
        matext::read_text_file((dir / "b.csv").string()));
  CHECK(matext::read_text_file((dir / "a.json").string()) ==
        matext::read_text_file((dir / "b.json").string()));
}

TEST_CASE("cli: compare-learners labels outputs exploratory") {
  const auto dir = work_dir("compare");
  write_wide_example(dir);
  const auto r = run_cli("--seed 3 --out " + q(dir / "cmp") + " estimate --data " +
                         q(dir / "wide.csv") + " --compare-learners ridge,knn --k 2 --K 2");
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir / "cmp.ridge.csv"));
  CHECK(fs::exists(dir / "cmp.knn.csv"));
  CHECK(r.output.find("exploratory") != std::string::npos);
  const json report = json::parse(matext::read_text_file((dir / "cmp.ridge.json").string()));
  CHECK(report.contains("exploratory"));
}

TEST_CASE("cli: sample draw is stratified and seeded") {
  const auto dir = work_dir("sample");
  write_worked_example(dir);
  const auto r = run_cli("--seed 9 --out " + q(dir / "s") + " sample --data " +
                         q(dir / "exp.csv") + " --n1 2 --n0 1");
  REQUIRE(r.exit_code == 0);
  const auto table = matext::read_csv((dir / "s.csv").string());
  REQUIRE(table.rows.size() == 3);
  int treated = 0;
  const int arm = table.require_col("arm");
  for (const auto& row : table.rows) treated += row[arm] == "1" ? 1 : 0;
  CHECK(treated == 2);
}

TEST_CASE("cli: extract merge rejects orphans by name") {
  const auto dir = work_dir("extract");
  write_worked_example(dir);
  matext::write_text_file((dir / "texts.csv").string(),
                          "id,text\n"
                          "t1,Alpha beta.\nt2,Gamma.\nt3,Delta.\n"
                          "c1,Epsilon.\nc2,Zeta.\nc3,Eta theta.\n"
                          "zz9,Orphan row.\n");
  const auto bad = run_cli("--out " + q(dir / "f") + " extract --input " + q(dir / "texts.csv") +
                           " --merge " + q(dir / "exp.csv"));
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("zz9") != std::string::npos);

  matext::write_text_file((dir / "texts2.csv").string(),
                          "id,text\n"
                          "t1,Alpha beta.\nt2,Gamma.\nt3,Delta.\n"
                          "c1,Epsilon.\nc2,Zeta.\nc3,Eta theta.\n");
  const auto good = run_cli("--out " + q(dir / "f") + " extract --input " + q(dir / "texts2.csv") +
                            " --merge " + q(dir / "exp.csv"));
  REQUIRE(good.exit_code == 0);
  const auto merged = matext::read_csv((dir / "f.csv").string());
  CHECK(merged.require_col("txt_word_count") >= 0);
  CHECK(merged.rows.size() == 6);
}

TEST_CASE("cli: simulate smoke run writes a well-formed report") {
  const auto dir = work_dir("simulate");
  const auto r = run_cli("--seed 4 --out " + q(dir / "sim") +
                         " simulate --N 120 --signal 0.5 --n 40 --replications 2 --K 3");
  REQUIRE(r.exit_code == 0);
  const auto table = matext::read_csv((dir / "sim.csv").string());
  CHECK(table.rows.size() == 4);
  const json report = json::parse(matext::read_text_file((dir / "sim.json").string()));
  CHECK(report["rows"].size() == 4);
  for (const auto& row : report["rows"]) CHECK(row["replications"].get<int>() == 2);
  const json manifest = json::parse(matext::read_text_file((dir / "sim.manifest.json").string()));
  CHECK(manifest["seed"].get<int>() == 4);
  CHECK(manifest["parameters"]["conditions"].size() == 1);
}
