// Command-line surface: corpus synthesis, training, evaluation, separation
// and config/checkpoint inspection. stdout carries machine-readable results,
// stderr diagnostics. Exit codes: 0 ok, 2 config error, 3 I/O error,
// 4 numeric abort.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "avcn/checkpoint.hpp"
#include "avcn/config.hpp"
#include "avcn/train.hpp"
#include "avcn/wav_io.hpp"

namespace fs = std::filesystem;
using namespace avcn;

namespace {

std::pair<double, double> parse_range(const std::string& text, const char* what) {
  const size_t comma = text.find(',');
  if (comma == std::string::npos)
    throw ConfigError(std::string("expected 'lo,hi' for ") + what);
  try {
    const double lo = std::stod(text.substr(0, comma));
    const double hi = std::stod(text.substr(comma + 1));
    if (lo > hi) throw ConfigError(std::string(what) + ": inverted range '" + text + "'");
    return {lo, hi};
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(std::string("cannot parse range for ") + what + ": '" + text + "'");
  }
}

int cmd_synth_data(const std::string& config_path, const std::string& out, uint64_t seed,
                   bool seed_set, int num_items, int speakers, const std::string& tir_range,
                   const std::string& snr_range, const std::string& split, double duration) {
  RunConfig cfg = load_run_config(config_path);
  if (!out.empty()) cfg.data.out_dir = out;
  if (seed_set) cfg.data.master_seed = seed;
  if (num_items > 0) cfg.data.num_items = num_items;
  if (speakers > 0) cfg.data.speakers = speakers;
  if (duration > 0.0) cfg.data.duration_s = duration;
  if (!split.empty()) cfg.data.split = split;
  if (!tir_range.empty())
    std::tie(cfg.data.tir_min, cfg.data.tir_max) = parse_range(tir_range, "--tir-range");
  if (!snr_range.empty()) {
    std::tie(cfg.data.snr_min, cfg.data.snr_max) = parse_range(snr_range, "--snr-range");
    cfg.data.with_noise = true;
  }
  if (cfg.data.out_dir.empty()) throw ConfigError("synth-data: --out (or data.out_dir) required");

  const MixtureManifest manifest = build_corpus(cfg.data);
  std::cout << "{\"split\":\"" << manifest.split << "\",\"items\":" << manifest.items.size()
            << ",\"manifest\":\"" << (fs::path(cfg.data.out_dir) / (cfg.data.split + ".jsonl")).string()
            << "\"}\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
  RunConfig cfg = load_run_config(config_path);
  if (data_dir.empty() || out_dir.empty()) throw ConfigError("train: --data and --out required");

  const std::string train_path = (fs::path(data_dir) / "train.jsonl").string();
  const std::string val_path = (fs::path(data_dir) / "val.jsonl").string();
  MixtureManifest train_manifest = read_manifest(train_path);
  MixtureManifest val_manifest =
      fs::exists(val_path) ? read_manifest(val_path) : train_manifest;

  Separator model;
  model.init(cfg.model, cfg.train.seed);
  std::cerr << "training: " << model.count_parameters() << " parameters, "
            << train_manifest.items.size() << " train items\n";
  const TrainResult result = train(model, train_manifest, val_manifest, cfg.train, out_dir);
  std::cout << "{\"epochs\":" << result.history.size() << ",\"steps\":" << result.steps
            << ",\"best_val_loss\":" << result.state.best_val_loss << ",\"best_checkpoint\":\""
            << result.best_checkpoint << "\"}\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path,
             const std::string& report_path, const std::string& export_dir, bool oracle) {
  const MixtureManifest manifest = read_manifest(manifest_path);

  SepFn fn;
  Separator model;
  if (oracle) {
    // debugging aid: the manifest sources themselves as estimates
    const fs::path base(manifest.base_dir);
    fn = [&manifest, base](const Waveform& mixture,
                           const std::vector<VisualEmbeddingSequence>&) -> std::vector<Waveform> {
      for (const ManifestItem& mi : manifest.items) {
        const Waveform m = read_wav((base / mi.mixture).string());
        if (m.samples == mixture.samples) {
          std::vector<Waveform> srcs;
          for (const std::string& s : mi.sources) srcs.push_back(read_wav((base / s).string()));
          return srcs;
        }
      }
      throw std::runtime_error("oracle eval: mixture not found in manifest");
    };
  } else {
    if (ckpt_path.empty()) throw ConfigError("eval: --checkpoint required (or --oracle)");
    load_checkpoint(ckpt_path, model);
    fn = [&model](const Waveform& mixture, const std::vector<VisualEmbeddingSequence>& emb) {
      return model.separate(mixture, emb);
    };
  }

  MetricReport report = evaluate(fn, manifest, export_dir);
  report.finalize();
  const std::string jsonl = report.to_jsonl();
  if (!report_path.empty()) {
    std::ofstream os(report_path);
    if (!os) throw std::runtime_error("eval: cannot write " + report_path);
    os << jsonl;
  }
  std::cout << jsonl;
  return 0;
}

int cmd_separate(const std::string& ckpt_path, const std::string& mixture_path,
                 const std::vector<std::string>& embedding_paths, const std::string& out_dir) {
  Separator model;
  load_checkpoint(ckpt_path, model);
  const Waveform mixture = read_wav(mixture_path);
  std::vector<VisualEmbeddingSequence> embeddings;
  for (const std::string& p : embedding_paths) embeddings.push_back(load_embeddings(p));
  if (static_cast<int>(embeddings.size()) != model.cfg.speakers)
    throw ConfigError("separate: model expects " + std::to_string(model.cfg.speakers) +
                      " embedding streams, got " + std::to_string(embeddings.size()));

  fs::create_directories(out_dir);
  const std::vector<Waveform> estimates = model.separate(mixture, embeddings);
  // output order follows the embedding stream order
  for (size_t c = 0; c < estimates.size(); ++c) {
    const std::string path = (fs::path(out_dir) / ("sep_" + std::to_string(c) + ".wav")).string();
    write_wav(path, estimates[c], WavFormat::float32);
    std::cout << path << "\n";
  }
  return 0;
}

int cmd_info(const std::string& config_path, const std::string& ckpt_path) {
  ModelConfig mc;
  if (!ckpt_path.empty()) {
    mc = peek_checkpoint_config(ckpt_path);
  } else {
    mc = load_run_config(config_path).model;
  }
  Separator model;
  model.init(mc, 0);
  std::cout << "{\"model\":" << model_config_to_json(mc)
            << ",\"bins\":" << mc.bins() << ",\"attn_embed\":" << mc.embed()
            << ",\"parameters\":" << model.count_parameters() << "}\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audiovisual speech separator (complex spectral mapping)"};
  app.require_subcommand(1);

  std::string config_path, out, split, tir_range, snr_range, data_dir, out_dir, ckpt_path,
      manifest_path, report_path, export_dir, mixture_path;
  std::vector<std::string> embedding_paths;
  uint64_t seed = 0;
  int num_items = 0, speakers = 0;
  double duration = 0.0;
  bool oracle = false;

  CLI::App* synth = app.add_subcommand("synth-data", "build a synthetic corpus");
  synth->add_option("--config", config_path);
  synth->add_option("--out", out);
  CLI::Option* seed_opt = synth->add_option("--seed", seed);
  synth->add_option("--num-items", num_items);
  synth->add_option("--speakers", speakers);
  synth->add_option("--tir-range", tir_range, "lo,hi in dB");
  synth->add_option("--snr-range", snr_range, "lo,hi in dB; enables background noise");
  synth->add_option("--split", split);
  synth->add_option("--duration", duration, "utterance length in seconds");

  CLI::App* tr = app.add_subcommand("train", "train on a corpus directory");
  tr->add_option("--config", config_path);
  tr->add_option("--data", data_dir)->required();
  tr->add_option("--out", out_dir)->required();

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  ev->add_option("--checkpoint", ckpt_path);
  ev->add_option("--manifest", manifest_path)->required();
  ev->add_option("--report", report_path);
  ev->add_option("--export-dir", export_dir);
  ev->add_flag("--oracle", oracle, "score the reference sources (debugging aid)");

  CLI::App* sep = app.add_subcommand("separate", "separate one mixture");
  sep->add_option("--checkpoint", ckpt_path)->required();
  sep->add_option("--mixture", mixture_path)->required();
  sep->add_option("--embeddings", embedding_paths)->required();
  sep->add_option("--out-dir", out_dir)->required();

  CLI::App* info = app.add_subcommand("info", "print config echo and parameter count");
  info->add_option("--config", config_path);
  info->add_option("--checkpoint", ckpt_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed())
      return cmd_synth_data(config_path, out, seed, seed_opt->count() > 0, num_items, speakers,
                            tir_range, snr_range, split, duration);
    if (tr->parsed()) return cmd_train(config_path, data_dir, out_dir);
    if (ev->parsed()) return cmd_eval(ckpt_path, manifest_path, report_path, export_dir, oracle);
    if (sep->parsed()) return cmd_separate(ckpt_path, mixture_path, embedding_paths, out_dir);
    if (info->parsed()) return cmd_info(config_path, ckpt_path);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
