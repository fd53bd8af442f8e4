// Runs the installed CLI binary end to end and checks exit codes, JSON
// output, and the documented defaults.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#ifndef TANDA_CLI_PATH
#define TANDA_CLI_PATH "tanda"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int exit_code;
  std::string output;  // stdout only
};

RunResult run_cli(const std::string& args) {
  const std::string command =
      std::string(TANDA_CLI_PATH) + " " + args + " 2>/dev/null";
  std::array<char, 4096> buffer;
  std::string output;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (fgets(buffer.data(), buffer.size(), pipe) != nullptr) {
    output += buffer.data();
  }
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), output};
}

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / "tanda_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string write_file(const std::string& name, const std::string& content) {
  const auto path = temp_dir() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("cli: --version and --help succeed") {
  CHECK(run_cli("--version").exit_code == 0);
  const auto help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("evaluate") != std::string::npos);
}

TEST_CASE("cli: unknown flag exits 1 with usage text") {
  CHECK(run_cli("evaluate --no-such-flag a b").exit_code == 1);
  CHECK(run_cli("no-such-subcommand").exit_code == 1);
}

TEST_CASE("cli: evaluate emits a MetricReport json") {
  const auto data = write_file("eval.tsv",
                               "q1\twho did it\tthe butler did it\t1\n"
                               "q1\twho did it\tnobody knows\t0\n"
                               "q2\twhen was it\tin 1999\t1\n"
                               "q2\twhen was it\tno idea\t0\n");
  const auto scores = write_file("eval.scores", "0.9\n0.1\n0.2\n0.8\n");
  const auto result = run_cli("evaluate --mode clean " + data + " " + scores);
  REQUIRE(result.exit_code == 0);
  const auto j = json::parse(result.output);
  CHECK(j["n_questions"] == 2);
  CHECK(j["mode"] == "clean");
  CHECK(j["map"] == doctest::Approx(0.75));   // q1 perfect, q2 rank 2
  CHECK(j["mrr"] == doctest::Approx(0.75));
  CHECK(j["p_at_1"] == doctest::Approx(0.5));
}

TEST_CASE("cli: malformed data exits 2") {
  const auto bad = write_file("bad.tsv", "only\ttwo\n");
  const auto scores = write_file("none.scores", "");
  CHECK(run_cli("evaluate " + bad + " " + scores).exit_code == 2);
  CHECK(run_cli("stats /no/such/file.tsv").exit_code == 2);
}

TEST_CASE("cli: stats applies the mode filter") {
  const auto data = write_file("stats.tsv",
                               "q1\tq\ts\t1\nq1\tq\tt\t0\n"
                               "q2\tq\ts\t0\nq2\tq\tt\t0\n");
  const auto raw = json::parse(run_cli("stats " + data).output);
  CHECK(raw["n_questions"] == 2);
  CHECK(raw["n_pairs"] == 4);
  const auto clean =
      json::parse(run_cli("stats --mode clean " + data).output);
  CHECK(clean["n_questions"] == 1);
  CHECK(clean["n_pos"] == 1);
}

TEST_CASE("cli: train-tanda defaults match the documented recipe") {
  const auto j =
      json::parse(run_cli("train-tanda --print-config").output);
  CHECK(j["transfer"]["learning_rate"] == doctest::Approx(2e-5));
  CHECK(j["adapt"]["learning_rate"] == doctest::Approx(1e-6));
  CHECK(j["transfer"]["max_epochs"] == 9);
  CHECK(j["adapt"]["max_epochs"] == 3);
  CHECK(j["model"]["max_len"] == 128);
  CHECK(j["model"]["d_model"] == 64);
  CHECK(j["transfer"]["batch_size"] == 32);
}

TEST_CASE("cli: config file fills unset flags, explicit flags win") {
  const auto config = write_file("cfg.json", R"({
    "transfer": {"learning_rate": 0.125, "max_epochs": 4},
    "model": {"d_model": 32}
  })");
  const auto j = json::parse(
      run_cli("train-tanda --print-config --config " + config +
              " --transfer-epochs 6")
          .output);
  CHECK(j["transfer"]["learning_rate"] == doctest::Approx(0.125));
  CHECK(j["transfer"]["max_epochs"] == 6);  // flag overrides config
  CHECK(j["model"]["d_model"] == 32);
  CHECK(j["adapt"]["learning_rate"] == doctest::Approx(1e-6));  // default
}

TEST_CASE("cli: inject-noise writes output and manifest") {
  std::string tsv;
  for (int i = 0; i < 40; ++i) {
    tsv += "q" + std::to_string(i / 4) + "\tquestion text\tsentence " +
           std::to_string(i) + "\t" + (i % 2 ? "1" : "0") + "\n";
  }
  const auto data = write_file("noise_in.tsv", tsv);
  const auto out = (temp_dir() / "noise_out.tsv").string();
  const auto manifest = (temp_dir() / "noise_manifest.json").string();
  const auto result =
      run_cli("inject-noise --fraction 0.25 --seed 7 " + data + " " + out +
              " --manifest " + manifest);
  REQUIRE(result.exit_code == 0);
  const auto j = json::parse(result.output);
  CHECK(j["n_flipped"] == 10);
  const auto m = json::parse(std::ifstream(manifest));
  CHECK(m["flipped_indices"].size() == 10);

  // rerun is byte-identical
  const auto out2 = (temp_dir() / "noise_out2.tsv").string();
  run_cli("inject-noise --fraction 0.25 --seed 7 " + data + " " + out2);
  std::ifstream a(out), b(out2);
  std::string text_a((std::istreambuf_iterator<char>(a)), {});
  std::string text_b((std::istreambuf_iterator<char>(b)), {});
  CHECK(text_a == text_b);
  CHECK(text_a != tsv);
}

TEST_CASE("cli: build-asnq and binarize chain on the fixture") {
  const std::string fixture =
      std::string(TANDA_TEST_DATA_DIR) + "/nq_fixture.jsonl";
  const auto asnq_out = (temp_dir() / "asnq.tsv").string();
  const auto result = run_cli("build-asnq " + fixture + " " + asnq_out);
  REQUIRE(result.exit_code == 0);
  const auto stats = json::parse(result.output);
  CHECK(stats["label_counts"]["4"] == 2);

  const auto as2_out = (temp_dir() / "asnq_binary.tsv").string();
  const auto bin =
      run_cli("binarize " + asnq_out + " " + as2_out + " --negatives 2,3");
  REQUIRE(bin.exit_code == 0);
  const auto bin_stats = json::parse(bin.output);
  CHECK(bin_stats["n_pos"] == 2);
  CHECK(bin_stats["n_pairs"] == 6);  // labels 2,3,4 kept

  CHECK(run_cli("binarize " + asnq_out + " " + as2_out + " --negatives 9")
            .exit_code == 1);
}

TEST_CASE("cli: synth then train-ft smoke run with manifest") {
  const auto dir = (temp_dir() / "synth_smoke").string();
  const auto synth = run_cli("synth --out-dir " + dir +
                             " --n 80 --candidates 4 --vocab-size 64 "
                             "--signal 6 --seed 3");
  REQUIRE(synth.exit_code == 0);
  const auto j = json::parse(synth.output);
  CHECK(j["transfer_train"]["n_questions"] == 80);

  const auto run_dir = (temp_dir() / "ft_smoke").string();
  const auto ft = run_cli(
      "train-ft --train " + dir + "/target_train.tsv --dev " + dir +
      "/target_dev.tsv --out-dir " + run_dir +
      " --d-model 16 --blocks 1 --heads 2 --max-len 16 --lr 1e-3 --epochs 1");
  REQUIRE(ft.exit_code == 0);
  const auto result = json::parse(ft.output);
  CHECK(result["result"]["best_epoch"] == 1);
  CHECK(fs::exists(run_dir + "/model.ckpt"));
  CHECK(fs::exists(run_dir + "/curve.csv"));
  CHECK(fs::exists(run_dir + "/manifest.json"));

  const auto manifest = json::parse(std::ifstream(run_dir + "/manifest.json"));
  CHECK(manifest["command"] == "train-ft");
  CHECK(manifest["config"]["train"]["learning_rate"] == doctest::Approx(1e-3));
  CHECK(manifest["inputs"].size() == 2);

  // stability-report over the result json
  const auto stab = run_cli("stability-report " + run_dir + "/result.json");
  CHECK(stab.exit_code == 0);
  CHECK(json::parse(stab.output)["entries"].size() == 1);
}

TEST_CASE("cli: grad-check exits 3 when the tolerance is impossible") {
  CHECK(run_cli("grad-check --tolerance 0 --batch 1 --vocab 20").exit_code == 3);
  CHECK(run_cli("grad-check --tolerance 1 --batch 1 --vocab 20 --no-mlm")
            .exit_code == 0);
}
