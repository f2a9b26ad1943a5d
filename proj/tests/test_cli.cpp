#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bcib/cli.hpp"

using namespace bcib;

namespace {

int cli(const std::vector<std::string>& args, std::string* captured = nullptr) {
  std::vector<const char*> argv = {"bcib"};
  for (const std::string& a : args) argv.push_back(a.c_str());

  std::ostringstream out;
  std::streambuf* old_cout = std::cout.rdbuf(out.rdbuf());
  std::streambuf* old_cerr = std::cerr.rdbuf(out.rdbuf());
  int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_cout);
  std::cerr.rdbuf(old_cerr);
  if (captured) *captured = out.str();
  return code;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  os << content;
}

struct TmpDir {
  std::string path;
  explicit TmpDir(const std::string& name) : path("tmp_cli/" + name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
};

}  // namespace

TEST_CASE("usage errors exit 2, help exits 0") {
  CHECK(cli({}) == 2);                       // a subcommand is required
  CHECK(cli({"frobnicate"}) == 2);           // unknown subcommand
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({"train", "--help"}) == 0);
  CHECK(cli({"train"}) == 2);                // --data is required
  CHECK(cli({"gen-data", "--demos", "0"}) == 2);
  CHECK(cli({"gen-data", "--env", "mars"}) == 2);
  CHECK(cli({"gen-data", "--bogus-flag"}) == 2);
}

TEST_CASE("gen-data writes a deterministic dataset and prints a summary") {
  TmpDir tmp("gen");
  std::string out;
  int code = cli({"gen-data", "--env", "reach", "--noise-dims", "2", "--demos", "4",
                  "--seed", "3", "--out", tmp.path},
                 &out);
  CHECK(code == 0);
  CHECK(out.find("# effective config: gen-data") != std::string::npos);
  CHECK(out.find("wrote 4 demos") != std::string::npos);

  std::string file = tmp.path + "/reach_n2_d4_s3.jsonl";
  REQUIRE(std::filesystem::exists(file));
  std::string first = read_file(file);

  CHECK(cli({"gen-data", "--env", "reach", "--noise-dims", "2", "--demos", "4",
             "--seed", "3", "--out", tmp.path}) == 0);
  CHECK(read_file(file) == first);
}

TEST_CASE("train then eval round-trips a checkpoint; mismatched env is refused") {
  TmpDir tmp("train");
  REQUIRE(cli({"gen-data", "--env", "reach", "--noise-dims", "2", "--demos", "4",
               "--seed", "0", "--out", tmp.path}) == 0);
  std::string data = tmp.path + "/reach_n2_d4_s0.jsonl";

  std::string out;
  int code = cli({"train", "--data", data, "--epochs", "2", "--lr", "1e-3",
                  "--eval-episodes", "2", "--tau", "2", "--embed-obs", "4",
                  "--embed-state", "3", "--embed-lang", "2", "--latent-dim", "4",
                  "--mlp-layers", "2", "--mlp-hidden", "8", "--head-hidden", "8",
                  "--out", tmp.path},
                 &out);
  CHECK(code == 0);
  CHECK(out.find("final: bc_loss=") != std::string::npos);
  CHECK(out.find("selected_epoch=") != std::string::npos);
  REQUIRE(std::filesystem::exists(tmp.path + "/policy.ckpt"));
  REQUIRE(std::filesystem::exists(tmp.path + "/report.csv"));

  CHECK(cli({"eval", "--ckpt", tmp.path + "/policy.ckpt", "--env", "reach",
             "--noise-dims", "2", "--episodes", "2", "--out", tmp.path}) == 0);
  CHECK(std::filesystem::exists(tmp.path + "/eval.csv"));

  // same checkpoint against an env with different obs arity: validation error
  CHECK(cli({"eval", "--ckpt", tmp.path + "/policy.ckpt", "--env", "reach",
             "--noise-dims", "5", "--episodes", "2", "--out", tmp.path}) == 2);
}

TEST_CASE("eval --expert reports a perfect scripted run") {
  TmpDir tmp("expert");
  std::string out;
  int code = cli({"eval", "--expert", "--env", "pick_place", "--episodes", "4",
                  "--out", tmp.path},
                 &out);
  CHECK(code == 0);
  CHECK(out.find("success_rate=1 (4/4)") != std::string::npos);
}

TEST_CASE("estimate-mi validates the gaussian spec and converges on an easy case") {
  TmpDir tmp("mi");
  CHECK(cli({"estimate-mi", "--gaussian", "1.5", "1", "--out", tmp.path}) == 2);
  CHECK(cli({"estimate-mi", "--gaussian", "0.5", "2.7", "--out", tmp.path}) == 2);

  std::string out;
  int code = cli({"estimate-mi", "--gaussian", "0.8", "1", "--steps", "300",
                  "--batch", "128", "--out", tmp.path},
                 &out);
  CHECK(code == 0);
  CHECK(out.find("estimate=") != std::string::npos);
  CHECK(out.find("oracle=0.51082562376599083") != std::string::npos);
}

TEST_CASE("config files drive a run, flags override, junk is rejected") {
  TmpDir tmp("cfg");
  write_file(tmp.path + "/gen.toml",
             "[gen-data]\nenv = \"reach\"\ndemos = 3\nnoise-dims = 2\nseed = 7\n");

  std::string out;
  int code = cli({"gen-data", "--config", tmp.path + "/gen.toml", "--out", tmp.path},
                 &out);
  CHECK(code == 0);
  CHECK(out.find("demos=3") != std::string::npos);
  CHECK(std::filesystem::exists(tmp.path + "/reach_n2_d3_s7.jsonl"));

  // a command-line flag wins over the file value
  code = cli({"gen-data", "--config", tmp.path + "/gen.toml", "--demos", "5",
              "--out", tmp.path},
             &out);
  CHECK(code == 0);
  CHECK(out.find("demos=5") != std::string::npos);

  write_file(tmp.path + "/junk_key.toml", "[gen-data]\nbogus = 1\n");
  CHECK(cli({"gen-data", "--config", tmp.path + "/junk_key.toml"}) == 2);

  write_file(tmp.path + "/junk_section.toml", "[warp-drive]\nx = 1\n");
  CHECK(cli({"gen-data", "--config", tmp.path + "/junk_section.toml"}) == 2);

  write_file(tmp.path + "/flat.toml", "demos = 3\n");
  CHECK(cli({"gen-data", "--config", tmp.path + "/flat.toml"}) == 2);

  // keys for a subcommand other than the one being run are refused
  write_file(tmp.path + "/cross.toml", "[gen-data]\ndemos = 3\n[train]\nepochs = 9\n");
  CHECK(cli({"gen-data", "--config", tmp.path + "/cross.toml"}, &out) == 2);
  CHECK(out.find("[train]") != std::string::npos);

  CHECK(cli({"gen-data", "--config", tmp.path + "/missing.toml"}) == 2);
}

TEST_CASE("the effective-config echo reproduces the run byte for byte") {
  TmpDir tmp("echo");
  std::string first;
  REQUIRE(cli({"gen-data", "--env", "reach", "--noise-dims", "1", "--demos", "3",
               "--seed", "11", "--out", tmp.path},
              &first) == 0);

  // cut the echoed block (section header through last key line) into a file
  std::istringstream is(first);
  std::string line, block;
  bool in_block = false;
  while (std::getline(is, line)) {
    if (line == "[gen-data]") in_block = true;
    if (in_block) {
      if (line.find("wrote") == 0) break;
      block += line + "\n";
    }
  }
  REQUIRE(!block.empty());
  write_file(tmp.path + "/echo.toml", block);
  std::string first_bytes = read_file(tmp.path + "/reach_n1_d3_s11.jsonl");

  std::string second;
  REQUIRE(cli({"gen-data", "--config", tmp.path + "/echo.toml"}, &second) == 0);
  // identical effective config and identical dataset bytes
  CHECK(second.find(block) != std::string::npos);
  CHECK(read_file(tmp.path + "/reach_n1_d3_s11.jsonl") == first_bytes);
}

TEST_CASE("BCIB_OUT provides the default output directory") {
  TmpDir tmp("envvar");
  std::string abs = std::filesystem::absolute(tmp.path).string();
  setenv("BCIB_OUT", abs.c_str(), 1);
  int code = cli({"gen-data", "--env", "reach", "--demos", "2", "--seed", "1"});
  unsetenv("BCIB_OUT");
  CHECK(code == 0);
  CHECK(std::filesystem::exists(tmp.path + "/reach_n0_d2_s1.jsonl"));
}

TEST_CASE("sweep runs from a config file, resumes, and parallel output matches") {
  TmpDir tmp("sweep");
  REQUIRE(cli({"gen-data", "--env", "reach", "--noise-dims", "2", "--demos", "4",
               "--seed", "0", "--out", tmp.path}) == 0);
  std::string data = tmp.path + "/reach_n2_d4_s0.jsonl";

  std::string common =
      "data = \"" + data + "\"\nvalues = \"0,1e-3\"\nseeds = 1\nepochs = 1\n"
      "eval-episodes = 2\nprobe-steps = 10\ntau = 2\nembed-obs = 4\n"
      "embed-state = 3\nembed-lang = 2\nlatent-dim = 4\nmlp-layers = 2\n"
      "mlp-hidden = 8\nhead-hidden = 8\nlr = 1e-3\n";
  write_file(tmp.path + "/sweep.toml", "[sweep]\n" + common + "out = \"" +
                                           tmp.path + "/seq\"\n");
  std::filesystem::create_directories(tmp.path + "/seq");

  std::string out;
  CHECK(cli({"sweep", "--config", tmp.path + "/sweep.toml"}, &out) == 0);
  REQUIRE(std::filesystem::exists(tmp.path + "/seq/sweep_beta.csv"));
  REQUIRE(std::filesystem::exists(tmp.path + "/seq/sweep_beta.svg"));
  std::string sequential = read_file(tmp.path + "/seq/sweep_beta.csv");

  // the same sweep with --jobs 2 lands on byte-identical artifacts
  write_file(tmp.path + "/sweep_par.toml", "[sweep]\n" + common + "out = \"" +
                                               tmp.path + "/par\"\n");
  std::filesystem::create_directories(tmp.path + "/par");
  CHECK(cli({"sweep", "--config", tmp.path + "/sweep_par.toml", "--jobs", "2"}) == 0);
  CHECK(read_file(tmp.path + "/par/sweep_beta.csv") == sequential);

  // resume: completed cells are skipped
  CHECK(cli({"sweep", "--config", tmp.path + "/sweep.toml"}, &out) == 0);
  CHECK(out.find("resume") != std::string::npos);
  CHECK(read_file(tmp.path + "/seq/sweep_beta.csv") == sequential);

  CHECK(cli({"sweep", "--data", data, "--values", "1,2", "--axis", "orbit"}) == 2);
}

TEST_CASE("selfcheck passes fast mode, rejects junk ops, fails on injected faults") {
  std::string out;
  CHECK(cli({"selfcheck", "--fast"}, &out) == 0);
  CHECK(out.find("selfcheck:") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);

  CHECK(cli({"selfcheck", "--fast", "--corrupt-op", "warp_core"}) == 2);

  CHECK(cli({"selfcheck", "--fast", "--corrupt-op", "op_matmul"}, &out) == 3);
  CHECK(out.find("FAIL op_matmul") != std::string::npos);

  CHECK(cli({"selfcheck", "--fast", "--corrupt-op", "dv_constant"}, &out) == 3);
  CHECK(out.find("FAIL dv_constant") != std::string::npos);
}
