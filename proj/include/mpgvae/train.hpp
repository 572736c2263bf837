#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpgvae/checkpoint.hpp"
#include "mpgvae/vae.hpp"

namespace mpgvae {

struct TrainConfig {
  int enc_embed = 32;
  std::vector<int> enc_widths = {32, 64, 64, 128};
  int dec_read_in = 64;
  std::vector<int> dec_widths = {64, 64, 32, 32};
  int graph_vec = 256;  // must equal twice the last encoder width
  int latent = 18;
  int s2s_steps = 3;
  int batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 10;
  int kl_warmup = 5;
  std::uint64_t seed = 1;
  bool conditional = false;

  void validate() const {
    auto positive = [](int v, const char* what) {
      if (v <= 0) throw ConfigError(std::string(what) + " must be positive");
    };
    positive(enc_embed, "enc_embed");
    positive(dec_read_in, "dec_read_in");
    positive(latent, "latent");
    positive(s2s_steps, "s2s_steps");
    positive(batch_size, "batch_size");
    positive(epochs, "epochs");
    if (kl_warmup < 0) throw ConfigError("kl_warmup must be >= 0");
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (enc_widths.empty() || dec_widths.empty()) throw ConfigError("widths must be non-empty");
    for (int w : enc_widths) positive(w, "encoder width");
    for (int w : dec_widths) positive(w, "decoder width");
    if (graph_vec != 2 * enc_widths.back())
      throw ConfigError("graph_vec must be twice the last encoder width: " +
                        std::to_string(graph_vec) + " vs 2*" +
                        std::to_string(enc_widths.back()));
  }

  EncoderConfig encoder() const {
    EncoderConfig e;
    e.embed = enc_embed;
    e.widths = enc_widths;
    e.latent = latent;
    e.s2s_steps = s2s_steps;
    e.conditional = conditional;
    return e;
  }

  DecoderConfig decoder() const {
    DecoderConfig d;
    d.latent = latent;
    d.read_in = dec_read_in;
    d.widths = dec_widths;
    d.conditional = conditional;
    return d;
  }

  // key=value lines; the config-file grammar and the checkpoint trailer are
  // this same text, so echo -> parse is an exact round trip.
  std::string echo() const {
    auto join = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    auto fp = [](double v) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      return std::string(buf);
    };
    std::string s;
    s += "enc_embed=" + std::to_string(enc_embed) + "\n";
    s += "enc_widths=" + join(enc_widths) + "\n";
    s += "dec_read_in=" + std::to_string(dec_read_in) + "\n";
    s += "dec_widths=" + join(dec_widths) + "\n";
    s += "graph_vec=" + std::to_string(graph_vec) + "\n";
    s += "latent=" + std::to_string(latent) + "\n";
    s += "s2s_steps=" + std::to_string(s2s_steps) + "\n";
    s += "batch_size=" + std::to_string(batch_size) + "\n";
    s += "learning_rate=" + fp(lr) + "\n";
    s += "beta1=" + fp(beta1) + "\n";
    s += "beta2=" + fp(beta2) + "\n";
    s += "adam_eps=" + fp(adam_eps) + "\n";
    s += "epochs=" + std::to_string(epochs) + "\n";
    s += "kl_warmup=" + std::to_string(kl_warmup) + "\n";
    s += "seed=" + std::to_string(seed) + "\n";
    s += std::string("conditional=") + (conditional ? "1" : "0") + "\n";
    return s;
  }
};

template <typename S>
void register_model(ParamStore<S>& store, const TrainConfig& cfg, Rng& rng) {
  register_encoder(store, cfg.encoder(), rng);
  register_decoder(store, cfg.decoder(), rng);
}

// Adam with bias correction. State is keyed by parameter name; parameters
// missing from a gradient map are treated as zero-gradient.
template <typename S>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParamStore<S>& store, const std::unordered_map<std::string, Tensor<S>>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (const auto& name : store.names()) {
      Tensor<S>& value = store.at(name);
      auto& m = slot(m_, name, value.numel());
      auto& v = slot(v_, name, value.numel());
      auto git = grads.find(name);
      const S* g = git == grads.end() ? nullptr : git->second.ptr();
      S* p = value.mut_ptr();
      for (std::size_t i = 0; i < value.numel(); ++i) {
        const double gi = g ? static_cast<double>(g[i]) : 0.0;
        m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
        v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
        p[i] -= static_cast<S>(lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
      }
    }
  }

  long long steps() const { return t_; }

 private:
  std::vector<double>& slot(std::unordered_map<std::string, std::vector<double>>& map,
                            const std::string& name, std::size_t n) {
    auto it = map.find(name);
    if (it == map.end()) it = map.emplace(name, std::vector<double>(n, 0.0)).first;
    return it->second;
  }

  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
  std::unordered_map<std::string, std::vector<double>> m_, v_;
};

// KL weight ramp: 0 at epoch 1, reaching 1 after `warmup` epochs.
inline double kl_beta(int epoch_1based, int warmup) {
  if (warmup <= 0) return 1.0;
  double b = static_cast<double>(epoch_1based - 1) / static_cast<double>(warmup);
  return b < 1.0 ? b : 1.0;
}

struct EpochStats {
  int epoch = 0;
  double recon = 0, kl = 0, beta = 0, total = 0, wall_seconds = 0;
  double node_ce = 0, edge_ce = 0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  bool diverged = false;
  int diverged_epoch = 0;  // 1-based epoch where a non-finite loss appeared
  long long clamped = 0;
  std::string checkpoint_path;
};

inline std::string render_log(const std::vector<EpochStats>& epochs) {
  std::string out = "epoch,recon,kl,beta,total,wall_seconds\n";
  char buf[160];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.3f,%.6f,%.3f\n", e.epoch, e.recon, e.kl,
                  e.beta, e.total, e.wall_seconds);
    out += buf;
  }
  return out;
}

// Wall-clock seconds, or 0 when MPGVAE_STUB_TIMER=1 (byte-stable logs).
inline bool stub_timer() {
  const char* v = std::getenv("MPGVAE_STUB_TIMER");
  return v != nullptr && std::string(v) == "1";
}

// Minibatch ELBO training. Seed-deterministic single-threaded: parameter
// init, shuffling, and reparameterization noise all fork from cfg.seed.
// A checkpoint is (re)written after every finite epoch; a non-finite epoch
// loss aborts, keeping the last good checkpoint on disk. `after_epoch`, if
// given, runs after each finite epoch's checkpoint write.
template <typename S>
TrainResult train(ParamStore<S>& store, const TrainConfig& cfg,
                  const std::vector<MolGraph>& dataset, const std::string& ckpt_path,
                  const std::function<void(const EpochStats&, ParamStore<S>&)>& after_epoch = {}) {
  cfg.validate();
  if (dataset.empty()) throw ContractViolation("train: empty dataset");
  const EncoderConfig enc = cfg.encoder();
  const DecoderConfig dec = cfg.decoder();
  if (store.size() == 0) {
    Rng init_rng = Rng(cfg.seed).fork(0);
    register_model(store, cfg, init_rng);
  }
  Rng shuffle_rng = Rng(cfg.seed).fork(1);
  Rng noise_rng = Rng(cfg.seed).fork(2);
  Adam<S> opt(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);

  TrainResult result;
  result.checkpoint_path = ckpt_path;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double beta = kl_beta(epoch, cfg.kl_warmup);
    // Fisher-Yates with the dedicated stream
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);

    EpochStats stats;
    stats.epoch = epoch;
    stats.beta = beta;
    double weight = 0;
    bool finite = true;
    for (std::size_t at = 0; at < order.size() && finite; at += cfg.batch_size) {
      std::vector<MolGraph> batch;
      for (std::size_t i = at; i < order.size() && i < at + cfg.batch_size; ++i)
        batch.push_back(dataset[order[i]]);
      const int B = static_cast<int>(batch.size());
      Tensor<S> eps = standard_normal<S>({B, cfg.latent}, noise_rng);

      Tape<S> tape;
      Bound<S> bound(tape, store);
      ClampStats clamp;
      BatchElbo<S> e = elbo_batch(bound, enc, dec, batch, beta, eps, &clamp);
      result.clamped += clamp.clamped;
      if (!std::isfinite(e.total)) {
        finite = false;
        break;
      }
      auto grads = tape.backward(e.loss);
      opt.step(store, grads);

      stats.recon += e.recon * B;
      stats.kl += e.kl * B;
      stats.total += e.total * B;
      stats.node_ce += e.node_ce * B;
      stats.edge_ce += e.edge_ce * B;
      weight += B;
    }
    if (!finite) {
      result.diverged = true;
      result.diverged_epoch = epoch;
      break;
    }
    stats.recon /= weight;
    stats.kl /= weight;
    stats.total /= weight;
    stats.node_ce /= weight;
    stats.edge_ce /= weight;
    stats.wall_seconds =
        stub_timer() ? 0.0
                     : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(stats);
    if (!ckpt_path.empty()) save_checkpoint(ckpt_path, store, cfg.echo());
    if (after_epoch) after_epoch(stats, store);
  }
  return result;
}

}  // namespace mpgvae
