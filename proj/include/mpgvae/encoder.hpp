#pragma once

#include <string>
#include <vector>

#include "mpgvae/featurize.hpp"
#include "mpgvae/molgraph.hpp"
#include "mpgvae/mpnn.hpp"
#include "mpgvae/nn.hpp"

namespace mpgvae {

// Encoder: molecule (optionally with a conditioning label) -> posterior
// parameters of a factored Gaussian over the latent space.
//
// One-hot atom features (plus the label when conditional) are linearly
// embedded, message passing runs over the observed edges, and a set2set
// readout over the final node states concatenated with the input features
// yields the graph vector feeding the mu / log_sigma heads.

struct EncoderConfig {
  int embed = 32;
  std::vector<int> widths = {32, 64, 64, 128};
  int latent = 18;
  int s2s_steps = 3;
  bool conditional = false;
  int label_dim = 4;

  int node_feat() const { return kAtomTypes + (conditional ? label_dim : 0); }
  MpnnConfig mpnn() const { return MpnnConfig{embed, embed, widths}; }
  // Attention content width inside set2set; the graph vector is twice this.
  int content() const { return widths.back(); }
  int graph_vec() const { return 2 * content() + (conditional ? label_dim : 0); }
};

template <typename S>
struct PosteriorParams {
  Tensor<S> mu;         // [B, latent]
  Tensor<S> log_sigma;  // [B, latent]
};

template <typename S>
void register_encoder(ParamStore<S>& store, const EncoderConfig& cfg, Rng& rng) {
  register_linear(store, "enc.embed.node", cfg.node_feat(), cfg.embed, rng);
  register_linear(store, "enc.embed.edge", kBondTypes, cfg.embed, rng);
  register_mpnn(store, "enc", cfg.mpnn(), rng);
  register_linear(store, "enc.s2s.proj", cfg.widths.back() + cfg.node_feat(), cfg.content(), rng);
  register_lstm(store, "enc.s2s.lstm", 2 * cfg.content(), cfg.content(), rng);
  register_linear(store, "enc.mu", cfg.graph_vec(), cfg.latent, rng);
  register_linear(store, "enc.logsig", cfg.graph_vec(), cfg.latent, rng);
}

// Order-invariant set-to-vector readout: P rounds of (LSTM query; dot-product
// attention over the set; weighted readout), returning query-concat-readout.
template <typename S>
Tensor<S> set2vec(Bound<S>& p, const std::string& prefix, const Tensor<S>& content, int steps) {
  Tape<S>& t = p.tape();
  if (content.rank() != 3) throw ShapeError("set2vec: want [B,n,d], got " + shape_str(content.shape));
  const int B = content.dim(0), n = content.dim(1), d = content.dim(2);
  if (n < 1) throw ContractViolation("set2vec: empty set");
  LstmParams<S> lstm = bind_lstm(p, prefix + ".lstm");
  LstmState<S> state{t.leaf(Tensor<S>::zeros({B, d})), t.leaf(Tensor<S>::zeros({B, d}))};
  Tensor<S> qstar = t.leaf(Tensor<S>::zeros({B, 2 * d}));
  Tensor<S> content_t = t.transpose2(content);  // [B,d,n]
  for (int step = 0; step < steps; ++step) {
    state = lstm_cell(t, qstar, state, lstm);
    Tensor<S> q = state.h;  // [B,d]
    Tensor<S> logits = t.reshape(t.bmm(t.reshape(q, {B, 1, d}), content_t), {B, n});
    Tensor<S> att = t.softmax_last(logits);
    Tensor<S> readout = t.reshape(t.bmm(t.reshape(att, {B, 1, n}), content), {B, d});
    qstar = t.concat_last({q, readout});
  }
  return qstar;
}

// Tile a [B, k] label onto every node slot: constant [B, n, k].
template <typename S>
Tensor<S> tile_label(const Tensor<S>& labels, int n) {
  const int B = labels.dim(0), k = labels.dim(1);
  Tensor<S> out = Tensor<S>::zeros({B, n, k});
  for (int b = 0; b < B; ++b)
    for (int v = 0; v < n; ++v)
      for (int j = 0; j < k; ++j) out.at_mut({b, v, j}) = labels.at({b, j});
  return out;
}

template <typename S>
PosteriorParams<S> encode(Bound<S>& p, const EncoderConfig& cfg,
                          const std::vector<MolGraph>& batch, const Tensor<S>& labels = {}) {
  Tape<S>& t = p.tape();
  const int B = static_cast<int>(batch.size());
  Tensor<S> x = stack_atom_one_hot<S>(batch);  // [B,9,5]
  if (cfg.conditional) {
    if (labels.shape != Shape{B, cfg.label_dim})
      throw ShapeError("encode: conditional labels must be [B," + std::to_string(cfg.label_dim) +
                       "], got " + shape_str(labels.shape));
    Tensor<S> tiled = tile_label(labels, kMaxAtoms);
    Tensor<S> parts = Tensor<S>::zeros({B, kMaxAtoms, cfg.node_feat()});
    for (int b = 0; b < B; ++b)
      for (int v = 0; v < kMaxAtoms; ++v) {
        for (int j = 0; j < kAtomTypes; ++j) parts.at_mut({b, v, j}) = x.at({b, v, j});
        for (int j = 0; j < cfg.label_dim; ++j)
          parts.at_mut({b, v, kAtomTypes + j}) = tiled.at({b, v, j});
      }
    x = parts;
  }
  Tensor<S> xl = t.leaf(x);
  Tensor<S> h0 = linear(p, "enc.embed.node", xl);
  Tensor<S> e0 = linear(p, "enc.embed.edge", t.leaf(stack_bond_one_hot<S>(batch)));
  GraphState<S> st{h0, e0, stack_observed_masks<S>(batch)};
  st = propagate(p, "enc", st, cfg.mpnn());

  Tensor<S> content = linear(p, "enc.s2s.proj", t.concat_last({st.nodes, xl}));
  Tensor<S> hg = set2vec(p, "enc.s2s", content, cfg.s2s_steps);
  if (cfg.conditional) hg = t.concat_last({hg, t.leaf(labels)});
  return {linear(p, "enc.mu", hg), linear(p, "enc.logsig", hg)};
}

}  // namespace mpgvae
