#include "avcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "avcn/wav_io.hpp"

namespace fs = std::filesystem;

namespace avcn {

void TrainConfig::validate() const {
  if (!(lr_min > 0.0 && lr_min < lr_max)) throw std::invalid_argument("train config: need 0 < lr_min < lr_max");
  if (plateau_factor <= 0.0 || plateau_factor >= 1.0)
    throw std::invalid_argument("train config: plateau_factor must be in (0,1)");
  if (warmup_epochs < 0 || plateau_patience < 1 || early_stop_patience < 1 || batch_size < 1 ||
      max_epochs < 1 || max_steps < 0)
    throw std::invalid_argument("train config: bad counts");
  if (precision != "double" && precision != "single")
    throw std::invalid_argument("train config: precision must be double or single");
}

double lr_at(int epoch, const TrainerState& state, const TrainConfig& cfg) {
  if (epoch < cfg.warmup_epochs) {
    const double frac = static_cast<double>(epoch) / cfg.warmup_epochs;
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * 0.5 * (1.0 - std::cos(M_PI * frac));
  }
  return state.current_lr;
}

bool schedule_epoch_end(int epoch, double val_loss, const TrainConfig& cfg, TrainerState& state) {
  if (state.epoch == 0 && epoch == 0) state.current_lr = cfg.lr_max;
  state.epoch = epoch + 1;
  const bool improved = val_loss < state.best_val_loss;
  if (improved) {
    state.best_val_loss = val_loss;
    state.epochs_since_best = 0;
    state.plateau_bad_epochs = 0;
  } else {
    state.epochs_since_best += 1;
    if (epoch >= cfg.warmup_epochs) {
      state.plateau_bad_epochs += 1;
      if (state.plateau_bad_epochs >= cfg.plateau_patience) {
        state.current_lr = std::max(cfg.lr_min, state.current_lr * cfg.plateau_factor);
        state.plateau_bad_epochs = 0;
      }
    }
  }
  return state.epochs_since_best >= cfg.early_stop_patience;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("history: cannot write " + path);
  os << "epoch,train_loss,val_loss,lr\n";
  os.precision(12);
  for (const EpochRecord& r : history)
    os << r.epoch << "," << r.train_loss << "," << r.val_loss << "," << r.lr << "\n";
}

// ---------------------------------------------------------------------------
// Adam

void Adam::init(const ParamList& params) {
  t = 0;
  m.clear();
  v.clear();
  for (const ParamRef& p : params) {
    if (!p.learnable) continue;
    m.emplace_back(p.value->shape);
    v.emplace_back(p.value->shape);
  }
}

void Adam::step(const ParamList& params, double lr) {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  size_t idx = 0;
  for (const ParamRef& p : params) {
    if (!p.learnable) continue;
    Tensor& mm = m[idx];
    Tensor& vv = v[idx];
    ++idx;
    for (size_t i = 0; i < p.value->v.size(); ++i) {
      const double g = p.grad->v[i];
      mm.v[i] = beta1 * mm.v[i] + (1.0 - beta1) * g;
      vv.v[i] = beta2 * vv.v[i] + (1.0 - beta2) * g * g;
      const double mhat = mm.v[i] / bc1;
      const double vhat = vv.v[i] / bc2;
      p.value->v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// data plumbing

std::vector<CorpusItem> load_items(const MixtureManifest& manifest) {
  std::vector<CorpusItem> items;
  items.reserve(manifest.items.size());
  const fs::path base(manifest.base_dir);
  for (const ManifestItem& mi : manifest.items) {
    CorpusItem item;
    item.id = mi.id;
    item.mixture = read_wav((base / mi.mixture).string());
    for (const std::string& s : mi.sources) item.sources.push_back(read_wav((base / s).string()));
    for (const std::string& e : mi.embeddings)
      item.embeddings.push_back(load_embeddings((base / e).string()));
    items.push_back(std::move(item));
  }
  return items;
}

LossReport item_loss(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets,
                     const StftConfig& stft_cfg, double mag_weight, double sisdr_weight,
                     std::vector<std::vector<double>>* grad) {
  const size_t c = estimates.size();
  std::vector<std::vector<double>> est_w(c), tgt_w(c);
  std::vector<ComplexSpectrogram> est_s(c), tgt_s(c);
  for (size_t i = 0; i < c; ++i) {
    est_w[i] = estimates[i].samples;
    tgt_w[i] = targets[i].samples;
    tgt_w[i].resize(est_w[i].size(), 0.0);
    est_s[i] = stft({est_w[i], estimates[i].sample_rate}, stft_cfg);
    tgt_s[i] = stft({tgt_w[i], estimates[i].sample_rate}, stft_cfg);
  }

  LossReport rep;
  std::vector<ComplexSpectrogram> mag_grad;
  std::vector<std::vector<double>> sisdr_grad;
  rep.mag = loss_mag(est_s, tgt_s, grad != nullptr ? &mag_grad : nullptr);
  rep.sisdr = loss_sisdr(est_w, tgt_w, grad != nullptr ? &sisdr_grad : nullptr);
  rep.total = mag_weight * rep.mag + sisdr_weight * rep.sisdr;

  if (grad != nullptr) {
    grad->assign(c, {});
    for (size_t i = 0; i < c; ++i) {
      std::vector<double> g =
          stft_adjoint(mag_grad[i], stft_cfg, static_cast<int64_t>(est_w[i].size()));
      for (size_t k = 0; k < g.size(); ++k)
        g[k] = mag_weight * g[k] + sisdr_weight * sisdr_grad[i][k];
      (*grad)[i] = std::move(g);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// train loop

namespace {

void snap_to_single(const ParamList& params) {
  for (const ParamRef& p : params) {
    if (!p.learnable) continue;
    for (double& w : p.value->v) w = static_cast<double>(static_cast<float>(w));
  }
}

double eval_loss(Separator& model, const std::vector<CorpusItem>& items, const TrainConfig& cfg) {
  double total = 0.0;
  for (const CorpusItem& item : items) {
    std::vector<Waveform> est = model.separate(item.mixture, item.embeddings);
    total += item_loss(est, item.sources, model.cfg.stft(), cfg.mag_weight, cfg.sisdr_weight,
                       nullptr)
                 .total;
  }
  return items.empty() ? 0.0 : total / static_cast<double>(items.size());
}

double grad_norm(const ParamList& params) {
  double s = 0.0;
  for (const ParamRef& p : params) {
    if (!p.learnable) continue;
    for (double g : p.grad->v) s += g * g;
  }
  return std::sqrt(s);
}

}  // namespace

TrainResult train(Separator& model, const MixtureManifest& train_manifest,
                  const MixtureManifest& val_manifest, const TrainConfig& cfg,
                  const std::string& out_dir, const std::string& resume_checkpoint) {
  cfg.validate();
  fs::create_directories(out_dir);

  std::vector<CorpusItem> train_items = load_items(train_manifest);
  std::vector<CorpusItem> val_items = load_items(val_manifest);
  if (train_items.empty()) throw std::invalid_argument("train: empty training manifest");

  TrainResult result;
  result.state.best_val_loss = std::numeric_limits<double>::infinity();
  result.state.current_lr = cfg.lr_max;
  result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
  result.last_checkpoint = (fs::path(out_dir) / "last.ckpt").string();

  Rng model_rng(derive_seed(cfg.seed, 0xa11ce));
  int start_epoch = 0;

  std::optional<LoadedCheckpoint> resumed;
  if (!resume_checkpoint.empty()) {
    resumed = load_checkpoint(resume_checkpoint, model);
    if (!resumed->trainer.has_value())
      throw std::invalid_argument("train: checkpoint has no trainer state to resume from");
    result.state = *resumed->trainer;
    result.steps = result.state.step;
    start_epoch = result.state.epoch;
    model_rng.deserialize(result.state.rng_state);
  }

  ParamList params;
  model.collect(params);
  Adam adam;
  adam.init(params);
  if (resumed.has_value()) {
    adam.t = resumed->trainer->adam_t;
    size_t idx = 0;
    for (const ParamRef& p : params) {
      if (!p.learnable) continue;
      auto mit = resumed->extra.find("adam.m." + p.name);
      auto vit = resumed->extra.find("adam.v." + p.name);
      if (mit == resumed->extra.end() || vit == resumed->extra.end())
        throw std::invalid_argument("train: checkpoint lacks optimizer state for " + p.name);
      adam.m[idx] = mit->second;
      adam.v[idx] = vit->second;
      ++idx;
    }
  }
  if (cfg.precision == "single") snap_to_single(params);

  auto save = [&](const std::string& path) {
    TrainerState ts = result.state;
    ts.step = result.steps;
    ts.adam_t = adam.t;
    ts.rng_state = model_rng.serialize();
    std::vector<std::pair<std::string, const Tensor*>> extra;
    size_t idx = 0;
    for (const ParamRef& p : params) {
      if (!p.learnable) continue;
      extra.emplace_back("adam.m." + p.name, &adam.m[idx]);
      extra.emplace_back("adam.v." + p.name, &adam.v[idx]);
      ++idx;
    }
    save_checkpoint(path, model, CkptDtype::f64, &ts, extra);
  };

  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_at(epoch, result.state, cfg);

    std::vector<size_t> order(train_items.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, 0xe90c + static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);

    double epoch_loss = 0.0;
    int epoch_items = 0;
    bool step_capped = false;
    for (size_t pos = 0; pos < order.size() && !step_capped;) {
      const size_t batch_n = std::min<size_t>(static_cast<size_t>(cfg.batch_size),
                                              order.size() - pos);
      model.zero_grads();
      std::string batch_ids;
      double batch_loss = 0.0;
      for (size_t b = 0; b < batch_n; ++b, ++pos) {
        const CorpusItem& item = train_items[order[pos]];
        batch_ids += (b ? "," : "") + item.id;
        std::vector<Waveform> est = model.forward_train(item.mixture, item.embeddings, model_rng);
        std::vector<std::vector<double>> grad;
        const LossReport rep = item_loss(est, item.sources, model.cfg.stft(), cfg.mag_weight,
                                         cfg.sisdr_weight, &grad);
        if (!std::isfinite(rep.total))
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             " items [" + batch_ids + "], grad norm " +
                             std::to_string(grad_norm(params)));
        batch_loss += rep.total;
        model.backward_train(grad);
      }
      // batch mean
      for (const ParamRef& p : params)
        if (p.learnable)
          for (double& g : p.grad->v) g /= static_cast<double>(batch_n);
      adam.step(params, lr);
      if (cfg.precision == "single") snap_to_single(params);
      epoch_loss += batch_loss;
      epoch_items += static_cast<int>(batch_n);
      ++result.steps;
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) step_capped = true;
    }
    epoch_loss /= std::max(epoch_items, 1);

    const double val_loss = eval_loss(model, val_items.empty() ? train_items : val_items, cfg);
    if (!std::isfinite(val_loss))
      throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));

    result.history.push_back({epoch, epoch_loss, val_loss, lr});
    const double prev_best = result.state.best_val_loss;
    const bool stop = schedule_epoch_end(epoch, val_loss, cfg, result.state);
    if (val_loss < prev_best) save(result.best_checkpoint);
    save(result.last_checkpoint);
    if (stop || step_capped) break;
  }

  write_history_csv((fs::path(out_dir) / "history.csv").string(), result.history);
  return result;
}

// ---------------------------------------------------------------------------
// evaluation

MetricReport evaluate(const SepFn& separate_fn, const MixtureManifest& manifest,
                      const std::string& export_dir) {
  MetricReport report;
  const fs::path base(manifest.base_dir);
  if (!export_dir.empty()) fs::create_directories(export_dir);

  for (const ManifestItem& mi : manifest.items) {
    try {
      const Waveform mixture = read_wav((base / mi.mixture).string());
      std::vector<Waveform> sources;
      for (const std::string& s : mi.sources) sources.push_back(read_wav((base / s).string()));
      std::vector<VisualEmbeddingSequence> embeddings;
      for (const std::string& e : mi.embeddings)
        embeddings.push_back(load_embeddings((base / e).string()));

      std::vector<Waveform> est = separate_fn(mixture, embeddings);
      UtteranceMetrics um;
      um.id = mi.id;
      const size_t c = est.size();
      for (size_t i = 0; i < c; ++i) {
        std::vector<double> ref = sources[i].samples;
        ref.resize(est[i].samples.size(), 0.0);
        std::vector<double> mixv = mixture.samples;
        mixv.resize(est[i].samples.size(), 0.0);
        um.si_sdr += metric_si_sdr(est[i].samples, ref) / static_cast<double>(c);
        um.si_sdr_i += metric_si_sdr_i(est[i].samples, mixv, ref) / static_cast<double>(c);
        um.snr += metric_snr(est[i].samples, ref) / static_cast<double>(c);
        if (!export_dir.empty())
          write_wav((fs::path(export_dir) / (mi.id + "_est" + std::to_string(i) + ".wav")).string(),
                    est[i], WavFormat::float32);
      }
      report.utterances.push_back(um);
    } catch (const std::exception& e) {
      UtteranceMetrics um;
      um.id = mi.id + " [error: " + e.what() + "]";
      um.si_sdr = um.si_sdr_i = um.snr = std::numeric_limits<double>::quiet_NaN();
      report.utterances.push_back(um);
    }
  }
  // errors are excluded from the aggregate
  std::vector<UtteranceMetrics> ok;
  for (const auto& u : report.utterances)
    if (std::isfinite(u.si_sdr)) ok.push_back(u);
  MetricReport agg;
  agg.utterances = ok;
  agg.finalize();
  report.mean_si_sdr = agg.mean_si_sdr;
  report.ci_si_sdr = agg.ci_si_sdr;
  report.mean_si_sdr_i = agg.mean_si_sdr_i;
  report.ci_si_sdr_i = agg.ci_si_sdr_i;
  report.mean_snr = agg.mean_snr;
  report.ci_snr = agg.ci_snr;
  return report;
}

}  // namespace avcn
