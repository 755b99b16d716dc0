// Scheduler semantics, optimizer sanity, resume reproducibility and the
// evaluation driver.
#include <cmath>
#include <filesystem>
#include <fstream>

#include "avcn/config.hpp"
#include "avcn/train.hpp"
#include "test_util.hpp"

using namespace avcn;
using testutil::check;
using testutil::check_close;

namespace fs = std::filesystem;

namespace {

void test_lr_schedule() {
  TrainConfig cfg;
  TrainerState st;
  st.current_lr = cfg.lr_max;

  check_close(lr_at(0, st, cfg), 1e-6, 1e-18, "epoch 0 starts at lr_min");
  check_close(lr_at(10, st, cfg), 1e-3, 1e-15, "epoch 10 reaches lr_max");
  check_close(lr_at(5, st, cfg), 1e-6 + (1e-3 - 1e-6) * 0.5, 1e-12, "half-warmup point");

  // monotone nondecreasing warmup
  double prev = -1.0;
  bool monotone = true;
  for (int e = 0; e <= 10; ++e) {
    const double lr = lr_at(e, st, cfg);
    if (lr < prev) monotone = false;
    prev = lr;
  }
  check(monotone, "warmup curve is monotone nondecreasing");

  // plateau: three stagnant post-warmup epochs multiply the rate by 0.9
  TrainerState s2;
  s2.best_val_loss = std::numeric_limits<double>::infinity();
  s2.current_lr = cfg.lr_max;
  schedule_epoch_end(10, 1.0, cfg, s2);  // improvement (from inf)
  schedule_epoch_end(11, 1.0, cfg, s2);
  schedule_epoch_end(12, 1.0, cfg, s2);
  check_close(s2.current_lr, 1e-3, 1e-15, "rate unchanged after two stagnant epochs");
  schedule_epoch_end(13, 1.0, cfg, s2);
  check_close(s2.current_lr, 9e-4, 1e-15, "rate x0.9 after the third stagnant epoch");
  schedule_epoch_end(14, 1.0, cfg, s2);
  schedule_epoch_end(15, 1.0, cfg, s2);
  schedule_epoch_end(16, 1.0, cfg, s2);
  check_close(s2.current_lr, 8.1e-4, 1e-15, "second plateau reduces again");

  // early stop fires after exactly early_stop_patience stagnant epochs
  TrainerState s3;
  s3.best_val_loss = std::numeric_limits<double>::infinity();
  s3.current_lr = cfg.lr_max;
  int stop_epoch = -1;
  for (int e = 0; e < 50; ++e) {
    if (schedule_epoch_end(e, 1.0, cfg, s3)) {
      stop_epoch = e;
      break;
    }
  }
  check(stop_epoch == 10, "constant loss stops after exactly 10 stagnant epochs");
  check(s3.epochs_since_best == cfg.early_stop_patience, "stagnation counter at the limit");

  // the rate never decays below lr_min
  TrainerState s4;
  s4.best_val_loss = std::numeric_limits<double>::infinity();
  s4.current_lr = 2e-6;
  TrainConfig c4 = cfg;
  c4.early_stop_patience = 1000;
  for (int e = 10; e < 200; ++e) schedule_epoch_end(e, 1.0, c4, s4);
  check(s4.current_lr >= c4.lr_min, "plateau decay floors at lr_min");
}

ModelConfig toy_model() {
  ModelConfig m;
  m.blocks = 1;
  m.hidden = 8;
  m.bottleneck = 2;
  m.ffn_hidden = 16;
  m.heads = 2;
  m.attn_embed = 1;
  m.win_length = 64;
  m.hop = 32;
  m.speakers = 2;
  m.vtcn_blocks = 1;
  m.visual_dim = 16;
  m.pe_max_frames = 256;
  return m;
}

CorpusConfig toy_corpus(const std::string& dir) {
  CorpusConfig c;
  c.out_dir = dir;
  c.num_items = 2;
  c.speakers = 2;
  c.duration_s = 0.2;
  c.master_seed = 99;
  c.visual_dim = 16;
  return c;
}

void test_adam_step_descends() {
  const fs::path dir = fs::temp_directory_path() / "avcn_test_train_a";
  fs::remove_all(dir);
  MixtureManifest man = build_corpus(toy_corpus(dir.string()));
  std::vector<CorpusItem> items = load_items(man);

  Separator model;
  model.init(toy_model(), 31);
  ParamList params;
  model.collect(params);
  Adam adam;
  adam.init(params);

  const StftConfig sc = model.cfg.stft();
  Rng rng(1);
  auto frozen_loss = [&]() {
    Rng r = rng;  // frozen PE chunk
    std::vector<Waveform> est = model.forward_train(items[0].mixture, items[0].embeddings, r);
    return item_loss(est, items[0].sources, sc, 1.0, 1.0, nullptr).total;
  };

  const double before = frozen_loss();
  model.zero_grads();
  Rng r = rng;
  std::vector<Waveform> est = model.forward_train(items[0].mixture, items[0].embeddings, r);
  std::vector<std::vector<double>> grad;
  item_loss(est, items[0].sources, sc, 1.0, 1.0, &grad);
  model.backward_train(grad);
  adam.step(params, 1e-5);
  const double after = frozen_loss();
  check(after < before, "one small Adam step decreases the frozen-batch loss");

  fs::remove_all(dir);
}

void test_train_loop_and_resume() {
  const fs::path dir = fs::temp_directory_path() / "avcn_test_train_b";
  fs::remove_all(dir);
  MixtureManifest man = build_corpus(toy_corpus((dir / "data").string()));

  TrainConfig tc;
  tc.max_epochs = 4;
  tc.warmup_epochs = 2;
  tc.batch_size = 2;
  tc.seed = 7;

  // uninterrupted 4-epoch run
  Separator model_a;
  model_a.init(toy_model(), 5);
  TrainResult full = train(model_a, man, man, tc, (dir / "run_a").string());
  check(static_cast<int>(full.history.size()) == 4, "uninterrupted run does 4 epochs");
  check(fs::exists(dir / "run_a" / "history.csv"), "history csv written");
  check(fs::exists(dir / "run_a" / "best.ckpt") && fs::exists(dir / "run_a" / "last.ckpt"),
        "checkpoints written");

  // history csv columns
  {
    std::ifstream is(dir / "run_a" / "history.csv");
    std::string head;
    std::getline(is, head);
    check(head == "epoch,train_loss,val_loss,lr", "history header columns");
  }

  // 3-epoch run, then resume for the 4th: losses match the uninterrupted run
  TrainConfig tc3 = tc;
  tc3.max_epochs = 3;
  Separator model_b;
  model_b.init(toy_model(), 5);
  TrainResult part = train(model_b, man, man, tc3, (dir / "run_b").string());
  check(static_cast<int>(part.history.size()) == 3, "partial run does 3 epochs");
  check_close(part.history[2].train_loss, full.history[2].train_loss, 0.0,
              "same-seed runs agree bit-exactly up to the break");

  Separator model_c;
  TrainResult rest = train(model_c, man, man, tc, (dir / "run_c").string(),
                           (fs::path(dir / "run_b") / "last.ckpt").string());
  check(static_cast<int>(rest.history.size()) == 1, "resumed run does the remaining epoch");
  check(rest.history[0].epoch == 3, "resumed run continues at epoch 3");
  check_close(rest.history[0].train_loss, full.history[3].train_loss, 0.0,
              "resume reproduces the uninterrupted epoch loss exactly");

  fs::remove_all(dir);
}

void test_evaluate() {
  const fs::path dir = fs::temp_directory_path() / "avcn_test_train_c";
  fs::remove_all(dir);
  CorpusConfig cc = toy_corpus((dir / "data").string());
  cc.num_items = 3;
  MixtureManifest man = build_corpus(cc);

  // identity model: estimates are copies of the mixture
  SepFn identity = [](const Waveform& mix, const std::vector<VisualEmbeddingSequence>& emb) {
    return std::vector<Waveform>(emb.size(), mix);
  };
  MetricReport rep_id = evaluate(identity, man);
  check_close(rep_id.mean_si_sdr_i, 0.0, 1e-9, "identity model scores zero improvement");

  // oracle model: estimates are the true sources
  std::vector<CorpusItem> items = load_items(man);
  SepFn oracle = [&items](const Waveform& mix,
                          const std::vector<VisualEmbeddingSequence>&) -> std::vector<Waveform> {
    for (const CorpusItem& it : items)
      if (it.mixture.samples == mix.samples) return it.sources;
    throw std::runtime_error("oracle: unknown mixture");
  };
  MetricReport rep_or = evaluate(oracle, man);
  check(rep_or.mean_si_sdr_i > 60.0, "oracle model exceeds 60 dB improvement");

  // aggregates match recomputation from the per-utterance lines
  double mean = 0.0;
  for (const auto& u : rep_or.utterances) mean += u.si_sdr_i;
  mean /= static_cast<double>(rep_or.utterances.size());
  check_close(rep_or.mean_si_sdr_i, mean, 1e-12, "aggregate equals the recomputed mean");

  // a missing file yields an error record but the run continues
  MixtureManifest broken = man;
  broken.items[1].mixture = "wav/does_not_exist.wav";
  MetricReport rep_err = evaluate(identity, broken);
  int errors = 0;
  for (const auto& u : rep_err.utterances)
    if (!std::isfinite(u.si_sdr)) ++errors;
  check(errors == 1 && rep_err.utterances.size() == 3, "missing file recorded, run continued");

  fs::remove_all(dir);
}

void test_config_round_trip() {
  const fs::path dir = fs::temp_directory_path() / "avcn_test_train_d";
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "ok.json");
    os << R"({"model": {"blocks": 3, "hidden": 16}, "train": {"seed": 9}, "data": {"num_items": 4}})";
  }
  RunConfig cfg = load_run_config((dir / "ok.json").string());
  check(cfg.model.blocks == 3 && cfg.model.hidden == 16 && cfg.train.seed == 9 &&
            cfg.data.num_items == 4,
        "config values land in the right sections");
  {
    std::ofstream os(dir / "bad.json");
    os << R"({"model": {"blocks": 3, "hidden_size": 16}})";
  }
  testutil::check_throws([&] { load_run_config((dir / "bad.json").string()); },
                         "unknown keys rejected");
  {
    std::ofstream os(dir / "bad2.json");
    os << R"({"train": {"precision": "half"}})";
  }
  testutil::check_throws([&] { load_run_config((dir / "bad2.json").string()); },
                         "unsupported precision rejected");
  fs::remove_all(dir);
}

}  // namespace

int main() {
  test_lr_schedule();
  test_adam_step_descends();
  test_train_loop_and_resume();
  test_evaluate();
  test_config_round_trip();
  return testutil::summary("test_train");
}
