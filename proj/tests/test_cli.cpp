// End-to-end tests of the installed CLI binary (spawned as a subprocess).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const auto out_file = fs::temp_directory_path() / "deconf_cli_out.txt";
  const std::string cmd = std::string(DECONF_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WEXITSTATUS(raw);
  std::ifstream in(out_file);
  result.output.assign(std::istreambuf_iterator<char>(in), {});
  return result;
}

fs::path temp_dir(const char* tag) {
  auto dir = fs::temp_directory_path() / (std::string("deconf_cli_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("simulate, fit-factor, check, estimate pipeline via subcommands") {
  auto dir = temp_dir("pipe");
  auto r = run_cli("simulate --experiment two-med-one-cause --seed 3 --n 400 --out " +
                   dir.string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "exposures.csv"));
  CHECK(fs::exists(dir / "outcomes.csv"));
  CHECK(fs::exists(dir / "truth.csv"));

  const std::string cohort_args = " --exposures " + (dir / "exposures.csv").string() +
                                  " --outcomes " + (dir / "outcomes.csv").string();
  r = run_cli("fit-factor" + cohort_args + " --factor-model ppca --k 1 --seed 3 --out " +
              (dir / "fit.bin").string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "fit.bin"));

  r = run_cli("check --fit " + (dir / "fit.bin").string() + cohort_args + " --out " +
              (dir / "check.json").string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("pass") != std::string::npos);
  CHECK(fs::exists(dir / "check.json"));

  // a band nothing can satisfy exercises the failed-check exit code
  r = run_cli("check --fit " + (dir / "fit.bin").string() + cohort_args +
              " --check-band 0.000001,0.000002");
  CHECK(r.exit_code == 2);

  r = run_cli("estimate" + cohort_args + " --fit " + (dir / "fit.bin").string() +
              " --out " + dir.string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "effects.tsv"));
  CHECK(fs::exists(dir / "forest.svg"));
  CHECK(r.output.find("med2") != std::string::npos);

  r = run_cli("estimate" + cohort_args + " --truth " + (dir / "truth.csv").string() +
              " --factor-model oracle --out " + dir.string());
  CHECK(r.exit_code == 0);

  r = run_cli("estimate" + cohort_args + " --factor-model none --out " + dir.string());
  CHECK(r.exit_code == 0);
}

TEST_CASE("run and report work together and rerun byte-identically") {
  auto dir = temp_dir("run");
  const std::string base =
      "run --experiment two-med-no-cause --factor-model ppca --k 1 --n 300 "
      "--seeds 1,2 --out ";
  auto r = run_cli(base + (dir / "a").string());
  CHECK(r.exit_code == 0);
  r = run_cli(base + (dir / "b").string());
  CHECK(r.exit_code == 0);
  for (const char* rel : {"manifest.json", "effects_summary.tsv", "seed_1/effects.tsv",
                          "seed_2/forest.svg"})
    CHECK(slurp(dir / "a" / rel) == slurp(dir / "b" / rel));

  r = run_cli("report --in " + (dir / "a").string());
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("per-cause summary") != std::string::npos);
  CHECK(r.output.find("med1") != std::string::npos);
}

TEST_CASE("config files feed subcommands with flag overrides") {
  auto dir = temp_dir("cfg");
  {
    std::ofstream cfg(dir / "run.ini");
    cfg << "[run]\nexperiment=two-med-no-cause\nfactor-model=none\nn=250\nseeds=9\n";
  }
  auto r = run_cli("--config " + (dir / "run.ini").string() + " run --out " +
                   (dir / "out").string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "out" / "seed_9" / "effects.tsv"));
}

TEST_CASE("errors map to exit code 1 with a message") {
  auto r = run_cli("estimate --exposures /nonexistent.csv --outcomes /also-missing.csv "
                   "--out /tmp");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("error:") != std::string::npos);

  r = run_cli("run --experiment bogus --out /tmp/deconf_cli_bogus");
  CHECK(r.exit_code == 1);

  r = run_cli("definitely-not-a-subcommand");
  CHECK(r.exit_code != 0);
}

TEST_CASE("multi-med simulate writes the documented CSV schema") {
  auto dir = temp_dir("schema");
  auto r = run_cli("simulate --experiment multi-med --n 50 --n-causes 6 --seed 2 --out " +
                   dir.string());
  CHECK(r.exit_code == 0);
  const std::string expo = slurp(dir / "exposures.csv");
  CHECK(expo.rfind("patient_id,med1,med2,med3,med4,med5,med6", 0) == 0);
  const std::string outc = slurp(dir / "outcomes.csv");
  CHECK(outc.rfind("patient_id,outcome", 0) == 0);
  const std::string truth = slurp(dir / "truth.csv");
  CHECK(truth.rfind("label,true_effect,patient_id,confounder_1", 0) == 0);
}
