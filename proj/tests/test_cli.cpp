#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "mpgvae/config.hpp"

using Catch::Approx;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string scratch_root() {
  static std::string root = [] {
    char tmpl[] = "/tmp/mpgvae_cli_XXXXXX";
    char* p = mkdtemp(tmpl);
    REQUIRE(p != nullptr);
    return std::string(p);
  }();
  return root;
}

std::string scratch_dir(const std::string& name) {
  const std::string dir = scratch_root() + "/" + name;
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << content;
}

// Runs the CLI through /bin/sh; `env` is a space-separated VAR=value prefix.
RunResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const std::string tag = scratch_root() + "/cap" + std::to_string(counter++);
  const std::string cmd =
      env + (env.empty() ? "" : " ") + MPGVAE_CLI_PATH + " " + args + " >" + tag + ".out 2>" +
      tag + ".err";
  const int rc = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(tag + ".out");
  r.err = slurp(tag + ".err");
  return r;
}

std::string tiny_config(int epochs, bool conditional = false, std::uint64_t seed = 11) {
  std::string s;
  s += "enc_embed=8\nenc_widths=8,16\ngraph_vec=32\nlatent=6\ns2s_steps=2\n";
  s += "dec_read_in=8\ndec_widths=8,8\nbatch_size=16\nlearning_rate=0.002\n";
  s += "epochs=" + std::to_string(epochs) + "\nkl_warmup=2\n";
  s += "seed=" + std::to_string(seed) + "\n";
  if (conditional) s += "conditional=1\n";
  return s;
}

std::string corpus_slice(const std::string& dir, int n) {
  const std::string src = std::string(MPGVAE_SOURCE_DIR) + "/data/corpus_5k.smi";
  const std::string dst = dir + "/train.smi";
  std::ifstream in(src);
  REQUIRE(in.good());
  std::string out, line;
  for (int i = 0; i < n && std::getline(in, line); ++i) out += line + "\n";
  spit(dst, out);
  return dst;
}

bool file_exists(const std::string& path) { return std::ifstream(path).good(); }

}  // namespace

TEST_CASE("config parser round-trips the echo text") {
  mpgvae::TrainConfig cfg;
  cfg.enc_widths = {8, 16};
  cfg.graph_vec = 32;
  cfg.lr = 1e-8;  // stresses the float formatting
  cfg.conditional = true;
  const mpgvae::TrainConfig back = mpgvae::parse_train_config(cfg.echo());
  REQUIRE(back.echo() == cfg.echo());
  REQUIRE(back.lr == cfg.lr);
  REQUIRE(back.conditional);

  REQUIRE_THROWS_AS(mpgvae::parse_train_config("epochs=3\nepochs=4\n"), mpgvae::ConfigError);
  REQUIRE_THROWS_AS(mpgvae::parse_train_config("epochs three\n"), mpgvae::ConfigError);
  REQUIRE_THROWS_AS(mpgvae::parse_train_config("epochs=x\n"), mpgvae::ConfigError);
  try {
    mpgvae::parse_train_config("lr_rate=0.1\n");
    FAIL("expected ConfigError");
  } catch (const mpgvae::ConfigError& e) {
    REQUIRE(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
}

TEST_CASE("cli train writes per-epoch checkpoints, log, and chart") {
  const std::string dir = scratch_dir("train_smoke");
  spit(dir + "/smoke.cfg", tiny_config(5));
  const std::string data = corpus_slice(dir, 50);

  const RunResult r = run_cli("train --config " + dir + "/smoke.cfg --data " + data + " --out " +
                                  dir + "/run",
                              "MPGVAE_STUB_TIMER=1");
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  for (int e = 1; e <= 5; ++e) {
    char name[48];
    std::snprintf(name, sizeof(name), "/run/ckpt_epoch_%03d.bin", e);
    REQUIRE(file_exists(dir + name));
  }
  REQUIRE(file_exists(dir + "/run/ckpt.bin"));
  const std::string log = slurp(dir + "/run/train_log.csv");
  REQUIRE(log.rfind("epoch,recon,kl,beta,total,wall_seconds\n", 0) == 0);
  REQUIRE(std::count(log.begin(), log.end(), '\n') == 6);
  REQUIRE(slurp(dir + "/run/loss_curve.svg").rfind("<svg", 0) == 0);

  SECTION("identical seed reruns are byte-identical") {
    const RunResult r2 = run_cli("train --config " + dir + "/smoke.cfg --data " + data +
                                     " --out " + dir + "/run2",
                                 "MPGVAE_STUB_TIMER=1");
    REQUIRE(r2.code == 0);
    REQUIRE(slurp(dir + "/run2/train_log.csv") == log);
    REQUIRE(slurp(dir + "/run2/ckpt.bin") == slurp(dir + "/run/ckpt.bin"));
  }
}

TEST_CASE("cli train error paths") {
  const std::string dir = scratch_dir("train_err");
  spit(dir + "/ok.cfg", tiny_config(1));

  SECTION("missing data file names the path and exits 3") {
    const RunResult r =
        run_cli("train --config " + dir + "/ok.cfg --data " + dir + "/nope.smi --out " + dir);
    REQUIRE(r.code == 3);
    REQUIRE(r.err.find(dir + "/nope.smi") != std::string::npos);
  }
  SECTION("unknown config key exits 2 with a suggestion") {
    spit(dir + "/bad.cfg", "lr_rate=0.1\n");
    const std::string data = corpus_slice(dir, 5);
    const RunResult r =
        run_cli("train --config " + dir + "/bad.cfg --data " + data + " --out " + dir);
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("lr_rate") != std::string::npos);
    REQUIRE(r.err.find("learning_rate") != std::string::npos);
  }
  SECTION("missing config file exits 2") {
    const RunResult r =
        run_cli("train --config " + dir + "/absent.cfg --data x --out " + dir);
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("absent.cfg") != std::string::npos);
  }
  SECTION("bad precision env exits 2") {
    const RunResult r = run_cli("gradcheck", "MPGVAE_PRECISION=f16");
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("MPGVAE_PRECISION") != std::string::npos);
  }
}

TEST_CASE("cli sample determinism and edge cases") {
  const std::string dir = scratch_dir("sample");
  spit(dir + "/cfg", tiny_config(2));
  const std::string data = corpus_slice(dir, 30);
  REQUIRE(run_cli("train --config " + dir + "/cfg --data " + data + " --out " + dir + "/run",
                  "MPGVAE_STUB_TIMER=1")
              .code == 0);
  const std::string ckpt = dir + "/run/ckpt.bin";

  SECTION("same seed twice is byte-identical; different seed differs") {
    REQUIRE(run_cli("sample --ckpt " + ckpt + " --n 150 --seed 9 --out " + dir + "/a").code == 0);
    REQUIRE(run_cli("sample --ckpt " + ckpt + " --n 150 --seed 9 --out " + dir + "/b").code == 0);
    REQUIRE(slurp(dir + "/a/samples.smi") == slurp(dir + "/b/samples.smi"));
    REQUIRE(slurp(dir + "/a/samples.csv") == slurp(dir + "/b/samples.csv"));
    REQUIRE(run_cli("sample --ckpt " + ckpt + " --n 150 --seed 10 --out " + dir + "/c").code == 0);
    REQUIRE(slurp(dir + "/c/samples.csv") != slurp(dir + "/a/samples.csv"));
    const std::string smi = slurp(dir + "/a/samples.smi");
    REQUIRE(std::count(smi.begin(), smi.end(), '\n') == 150);
  }
  SECTION("stochastic realization mode is still seed-deterministic") {
    REQUIRE(run_cli("sample --ckpt " + ckpt + " --n 60 --seed 4 --mode sample --out " + dir +
                    "/sa")
                .code == 0);
    REQUIRE(run_cli("sample --ckpt " + ckpt + " --n 60 --seed 4 --mode sample --out " + dir +
                    "/sb")
                .code == 0);
    REQUIRE(slurp(dir + "/sa/samples.csv") == slurp(dir + "/sb/samples.csv"));
  }
  SECTION("n=0 writes empty outputs and exits 0") {
    const RunResult r = run_cli("sample --ckpt " + ckpt + " --n 0 --out " + dir + "/z");
    REQUIRE(r.code == 0);
    REQUIRE(slurp(dir + "/z/samples.smi").empty());
    REQUIRE(slurp(dir + "/z/samples.csv") ==
            "index,valid,connected,canonical_hash,repaired_edges\n");
  }
  SECTION("corrupt checkpoint exits 4") {
    spit(dir + "/junk.bin", "not a checkpoint");
    REQUIRE(run_cli("sample --ckpt " + dir + "/junk.bin --n 3 --out " + dir + "/j").code == 4);
    REQUIRE(run_cli("sample --ckpt " + dir + "/gone.bin --n 3 --out " + dir + "/j").code == 4);
  }
  SECTION("truncated checkpoint exits 4") {
    const std::string whole = slurp(ckpt);
    spit(dir + "/trunc.bin", whole.substr(0, whole.size() / 2));
    REQUIRE(run_cli("sample --ckpt " + dir + "/trunc.bin --n 3 --out " + dir + "/t").code == 4);
  }
  SECTION("label flag is rejected on a non-conditional checkpoint") {
    const RunResult r =
        run_cli("sample --ckpt " + ckpt + " --label 2,1,0,0 --n 3 --out " + dir + "/l");
    REQUIRE(r.code == 2);
  }
  SECTION("float32 precision works against a float64 checkpoint") {
    const RunResult r = run_cli("sample --ckpt " + ckpt + " --n 20 --seed 3 --out " + dir + "/f",
                                "MPGVAE_PRECISION=f32");
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    const std::string smi = slurp(dir + "/f/samples.smi");
    REQUIRE(std::count(smi.begin(), smi.end(), '\n') == 20);
  }
}

TEST_CASE("cli sample with a conditional checkpoint") {
  const std::string dir = scratch_dir("cond");
  spit(dir + "/cfg", tiny_config(2, true));
  const std::string data = corpus_slice(dir, 30);
  REQUIRE(run_cli("train --config " + dir + "/cfg --data " + data + " --out " + dir + "/run",
                  "MPGVAE_STUB_TIMER=1")
              .code == 0);
  const std::string ckpt = dir + "/run/ckpt.bin";

  REQUIRE(run_cli("sample --ckpt " + ckpt + " --n 5 --out " + dir + "/no_label").code == 2);
  REQUIRE(run_cli("sample --ckpt " + ckpt + " --label 9,9,9,9 --n 5 --out " + dir + "/big")
              .code == 2);
  REQUIRE(run_cli("sample --ckpt " + ckpt + " --label 2,1,1,0 --n 5 --out " + dir + "/ok")
              .code == 0);
  const std::string smi = slurp(dir + "/ok/samples.smi");
  REQUIRE(std::count(smi.begin(), smi.end(), '\n') == 5);
}

TEST_CASE("cli eval matches a hand-counted fixture") {
  const std::string dir = scratch_dir("eval_fixture");
  // training set: five known molecules
  spit(dir + "/train.smi", "CCO\nCCN\nc1ccccc1\nCC(=O)O\nC1CC1\n");
  // ten samples, hand-tallied:
  //   1 CCO          valid, known
  //   2 OCC          valid, duplicate class of CCO, known
  //   3 CCN          valid, known
  //   4 CC(C)C       valid, novel
  //   5 CC(C)C       valid, duplicate class of 4, novel
  //   6 FC(F)F       valid, novel
  //   7 C1CC1        valid, known
  //   8 XYZ          parse failure
  //   9 C(=O)(=O)=O  parses but carbon exceeds valence 4: invalid
  //  10 (blank)      placeholder, invalid
  spit(dir + "/samples.smi", "CCO\nOCC\nCCN\nCC(C)C\nCC(C)C\nFC(F)F\nC1CC1\nXYZ\nC(=O)(=O)=O\n\n");

  const RunResult r = run_cli("eval --data " + dir + "/samples.smi --train-data " + dir +
                              "/train.smi --out " + dir + "/out");
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  REQUIRE(slurp(dir + "/out/report.csv") ==
          "metric,value,count_numerator,count_denominator\n"
          "valid,0.700000,7,10\n"
          "unique,0.714286,5,7\n"
          "novel,0.428571,3,7\n"
          "num,2.000000,2,10\n"
          "parsed,0.800000,8,10\n");
  REQUIRE(slurp(dir + "/out/stats.csv") ==
          "category,mean\n"
          "atom_C,2.375000\n"
          "atom_N,0.125000\n"
          "atom_O,0.625000\n"
          "atom_F,0.375000\n"
          "bond_single,2.250000\n"
          "bond_double,0.375000\n"
          "bond_triple,0.000000\n"
          "rings,0.125000\n");
  REQUIRE(slurp(dir + "/out/stats.svg").rfind("<svg", 0) == 0);

  SECTION("rerun is byte-identical") {
    REQUIRE(run_cli("eval --data " + dir + "/samples.smi --train-data " + dir +
                    "/train.smi --out " + dir + "/out2")
                .code == 0);
    REQUIRE(slurp(dir + "/out2/report.csv") == slurp(dir + "/out/report.csv"));
  }
}

TEST_CASE("cli eval edge cases") {
  const std::string dir = scratch_dir("eval_edge");
  spit(dir + "/train.smi", "CCO\nCCN\nCC(C)O\n");

  SECTION("samples equal to the training file are never novel") {
    const RunResult r = run_cli("eval --data " + dir + "/train.smi --train-data " + dir +
                                "/train.smi --out " + dir + "/same");
    REQUIRE(r.code == 0);
    REQUIRE(slurp(dir + "/same/report.csv").find("novel,0.000000,0,3\n") != std::string::npos);
  }
  SECTION("empty samples file exits 5") {
    spit(dir + "/empty.smi", "");
    REQUIRE(run_cli("eval --data " + dir + "/empty.smi --train-data " + dir +
                    "/train.smi --out " + dir + "/e")
                .code == 5);
  }
  SECTION("samples that all fail to parse exit 5") {
    spit(dir + "/junk.smi", "xx\nyy\nzz\n");
    REQUIRE(run_cli("eval --data " + dir + "/junk.smi --train-data " + dir + "/train.smi --out " +
                    dir + "/j")
                .code == 5);
  }
  SECTION("missing training file exits 3") {
    spit(dir + "/s.smi", "CCO\n");
    REQUIRE(run_cli("eval --data " + dir + "/s.smi --train-data " + dir + "/gone.smi --out " +
                    dir + "/g")
                .code == 3);
  }
}

TEST_CASE("cli gradcheck") {
  const RunResult pass = run_cli("gradcheck --seed 13");
  CAPTURE(pass.out, pass.err);
  REQUIRE(pass.code == 0);
  REQUIRE(pass.out.find("elbo_end_to_end") != std::string::npos);
  REQUIRE(pass.out.find("FAIL") == std::string::npos);

  const RunResult again = run_cli("gradcheck --seed 13");
  REQUIRE(again.out == pass.out);

  const RunResult fault = run_cli("gradcheck --seed 13 --inject-fault");
  REQUIRE(fault.code == 1);
  REQUIRE(fault.out.find("fault_injection") != std::string::npos);
  REQUIRE(fault.err.find("fault_injection") != std::string::npos);
}

TEST_CASE("cli inspect") {
  const std::string dir = scratch_dir("inspect");
  spit(dir + "/d.smi", "CCO\nbad(\nC1CC1\n");
  const RunResult r = run_cli("inspect --data " + dir + "/d.smi");
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("parsed 2/3") != std::string::npos);
  REQUIRE(r.out.find("line 2") != std::string::npos);

  REQUIRE(run_cli("inspect --data " + dir + "/missing.smi").code == 3);
  spit(dir + "/empty.smi", "");
  REQUIRE(run_cli("inspect --data " + dir + "/empty.smi").code == 5);
}

TEST_CASE("cli rejects unknown subcommands and flags") {
  REQUIRE(run_cli("frobnicate").code == 2);
  REQUIRE(run_cli("sample --ckpt x --n -3 --out y").code == 2);
  REQUIRE(run_cli("").code == 2);  // a subcommand is required
}
