// End-to-end checks of the command-line surface: exit codes, determinism,
// and file outputs.
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"

namespace fs = std::filesystem;
using testutil::check;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;
};

CmdResult run(const std::string& args) {
  const std::string cmd = std::string(AVCN_CLI_PATH) + " " + args + " 2>/dev/null";
  std::array<char, 4096> buf{};
  CmdResult res;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return res;
  while (fgets(buf.data(), buf.size(), pipe) != nullptr) res.out += buf.data();
  const int status = pclose(pipe);
  res.exit_code = WEXITSTATUS(status);
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

const fs::path dir = fs::temp_directory_path() / "avcn_test_cli";

void test_synth_cmd() {
  fs::remove_all(dir);
  CmdResult r = run("synth-data --out " + (dir / "a").string() +
                    " --num-items 8 --speakers 2 --duration 0.3 --seed 5");
  check(r.exit_code == 0, "synth-data exits 0");
  check(r.out.find("\"items\":8") != std::string::npos, "synth-data reports 8 items");
  check(fs::exists(dir / "a" / "train.jsonl"), "manifest written");

  // inverted range is a config error
  CmdResult bad = run("synth-data --out " + (dir / "bad").string() + " --tir-range 5,-5");
  check(bad.exit_code == 2, "inverted tir-range exits 2");

  // byte-equal manifests under the same seed
  CmdResult r2 = run("synth-data --out " + (dir / "b").string() +
                     " --num-items 8 --speakers 2 --duration 0.3 --seed 5");
  check(r2.exit_code == 0, "second synth-data exits 0");
  check(slurp(dir / "a" / "train.jsonl") == slurp(dir / "b" / "train.jsonl"),
        "same seed gives byte-equal manifests");
}

void test_info_cmd() {
  CmdResult r = run("info");
  check(r.exit_code == 0, "info exits 0");
  check(r.out.find("\"parameters\":") != std::string::npos, "info prints the parameter count");
  // default config sits in the expected band
  const size_t pos = r.out.find("\"parameters\":");
  const long long n = std::atoll(r.out.c_str() + pos + 13);
  check(n >= 9400000 && n <= 12800000, "info parameter count in the expected band");

  CmdResult miss = run("info --config /nonexistent.json");
  check(miss.exit_code == 2, "missing config exits 2");
}

void test_train_eval_separate() {
  // tiny model config for a 2-step smoke train
  const fs::path cfg_path = dir / "toy.json";
  {
    std::ofstream os(cfg_path);
    os << R"({
  "model": {"blocks": 1, "hidden": 8, "bottleneck": 2, "ffn_hidden": 16, "heads": 2,
            "attn_embed": 1, "win_length": 64, "hop": 32, "speakers": 2,
            "vtcn_blocks": 1, "visual_dim": 16, "pe_max_frames": 256},
  "train": {"max_epochs": 2, "warmup_epochs": 1, "batch_size": 2, "seed": 3}
})";
  }
  CmdResult synth = run("synth-data --out " + (dir / "data").string() +
                        " --num-items 2 --speakers 2 --duration 0.2 --seed 11" +
                        " --config " + cfg_path.string());
  check(synth.exit_code == 0, "corpus for training built");
  // visual_dim must match the model; rebuild with the config's data defaults
  fs::remove_all(dir / "data");
  {
    std::ofstream os(cfg_path, std::ios::trunc);
    os << R"({
  "model": {"blocks": 1, "hidden": 8, "bottleneck": 2, "ffn_hidden": 16, "heads": 2,
            "attn_embed": 1, "win_length": 64, "hop": 32, "speakers": 2,
            "vtcn_blocks": 1, "visual_dim": 16, "pe_max_frames": 256},
  "train": {"max_epochs": 2, "warmup_epochs": 1, "batch_size": 2, "seed": 3},
  "data": {"num_items": 2, "speakers": 2, "duration_s": 0.2, "visual_dim": 16,
           "master_seed": 11, "out_dir": ")" << (dir / "data").string() << R"("}
})";
  }
  CmdResult synth2 = run("synth-data --config " + cfg_path.string());
  check(synth2.exit_code == 0, "corpus from config file built");

  CmdResult tr = run("train --config " + cfg_path.string() + " --data " + (dir / "data").string() +
                     " --out " + (dir / "run").string());
  check(tr.exit_code == 0, "train exits 0");
  check(fs::exists(dir / "run" / "best.ckpt"), "training saved a best checkpoint");

  CmdResult ev = run("eval --checkpoint " + (dir / "run" / "best.ckpt").string() + " --manifest " +
                     (dir / "data" / "train.jsonl").string() + " --report " +
                     (dir / "report.jsonl").string());
  check(ev.exit_code == 0, "eval exits 0");
  check(fs::exists(dir / "report.jsonl"), "eval wrote the report");
  check(ev.out.find("\"aggregate\":true") != std::string::npos, "eval prints the aggregate");

  CmdResult orc = run("eval --oracle --manifest " + (dir / "data" / "train.jsonl").string());
  check(orc.exit_code == 0, "oracle eval exits 0");
  const size_t pos = orc.out.find("\"mean_si_sdr_i\":");
  check(pos != std::string::npos && std::atof(orc.out.c_str() + pos + 16) > 60.0,
        "oracle eval reports > 60 dB improvement");

  // separate: two embedding streams give exactly two wavs of mixture length
  CmdResult sep = run("separate --checkpoint " + (dir / "run" / "best.ckpt").string() +
                      " --mixture " + (dir / "data" / "wav" / "train_00000_mix.wav").string() +
                      " --embeddings " + (dir / "data" / "emb" / "train_00000_s0.aveb").string() +
                      " " + (dir / "data" / "emb" / "train_00000_s1.aveb").string() +
                      " --out-dir " + (dir / "sep").string());
  check(sep.exit_code == 0, "separate exits 0");
  check(fs::exists(dir / "sep" / "sep_0.wav") && fs::exists(dir / "sep" / "sep_1.wav"),
        "separate writes one wav per stream");
  check(fs::file_size(dir / "sep" / "sep_0.wav") == fs::file_size(dir / "data" / "wav" / "train_00000_mix.wav"),
        "estimates have the mixture length");

  // wrong stream count is a config error
  CmdResult sep_bad = run("separate --checkpoint " + (dir / "run" / "best.ckpt").string() +
                          " --mixture " + (dir / "data" / "wav" / "train_00000_mix.wav").string() +
                          " --embeddings " + (dir / "data" / "emb" / "train_00000_s0.aveb").string() +
                          " --out-dir " + (dir / "sep2").string());
  check(sep_bad.exit_code == 2, "wrong embedding count exits 2");

  // info on the checkpoint echoes the embedded config
  CmdResult info = run("info --checkpoint " + (dir / "run" / "best.ckpt").string());
  check(info.exit_code == 0 && info.out.find("\"hidden\":8") != std::string::npos,
        "info echoes the checkpoint config");
}

}  // namespace

int main() {
  test_synth_cmd();
  test_info_cmd();
  test_train_eval_separate();
  std::error_code ec;
  fs::remove_all(dir, ec);
  return testutil::summary("test_cli");
}
