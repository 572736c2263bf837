#pragma once

#include <string>
#include <vector>

#include "mpgvae/featurize.hpp"
#include "mpgvae/molgraph.hpp"
#include "mpgvae/mpnn.hpp"
#include "mpgvae/nn.hpp"
#include "mpgvae/rng.hpp"

namespace mpgvae {

// Decoder: latent sample (optionally with a conditioning label) -> categorical
// distributions over the 9 atom slots and all pairwise bonds.
//
// Read-in turns z into per-slot initial states by unrolling one recurrent
// cell for 9 steps on a constant input; message passing then runs over the
// complete pair graph, and read-out symmetrizes edge states and applies
// softmax heads.

struct DecoderConfig {
  int latent = 18;
  int read_in = 64;
  int edge_in = 4;
  std::vector<int> widths = {64, 64, 32, 32};
  bool conditional = false;
  int label_dim = 4;

  int z_feat() const { return latent + (conditional ? label_dim : 0); }
  MpnnConfig mpnn() const { return MpnnConfig{read_in, edge_in, widths}; }
};

// Distributions still on the tape, for the reconstruction loss.
template <typename S>
struct GraphDistTensors {
  Tensor<S> node_probs;  // [B, 9, 5], rows on the simplex
  Tensor<S> edge_probs;  // [B, 9, 9, 4], symmetric in slots, rows on the simplex
};

// Detached per-graph distribution with the diagonal pinned to NONE.
template <typename S>
struct GraphDistribution {
  Tensor<S> node_probs;  // [9, 5]
  Tensor<S> edge_probs;  // [9, 9, 4]
};

template <typename S>
void register_decoder(ParamStore<S>& store, const DecoderConfig& cfg, Rng& rng) {
  register_linear(store, "dec.readin", cfg.z_feat(), cfg.read_in, rng);
  register_linear(store, "dec.rnn.x", cfg.read_in, cfg.read_in, rng);
  store.add_matrix("dec.rnn.h.W", cfg.read_in, cfg.read_in, rng);
  register_mpnn(store, "dec", cfg.mpnn(), rng);
  register_linear(store, "dec.node", cfg.widths.back(), kAtomTypes, rng);
  register_linear(store, "dec.edge", cfg.widths.back(), kBondTypes, rng);
}

template <typename S>
GraphState<S> read_in(Bound<S>& p, const DecoderConfig& cfg, const Tensor<S>& z,
                      const Tensor<S>& labels = {}) {
  Tape<S>& t = p.tape();
  const int B = z.dim(0);
  Tensor<S> zin = z;
  if (cfg.conditional) {
    if (labels.shape != Shape{B, cfg.label_dim})
      throw ShapeError("read_in: conditional labels must be [B," +
                       std::to_string(cfg.label_dim) + "], got " + shape_str(labels.shape));
    zin = t.concat_last({z, t.leaf(labels)});
  }
  Tensor<S> hz = t.sigmoid_(linear(p, "dec.readin", zin));  // [B, d]
  Tensor<S> h = t.leaf(Tensor<S>::zeros({B, cfg.read_in}));
  std::vector<Tensor<S>> slots;
  slots.reserve(kMaxAtoms);
  for (int i = 0; i < kMaxAtoms; ++i) {
    h = t.tanh_(t.add(linear(p, "dec.rnn.x", hz), linear_nobias(t, h, p("dec.rnn.h.W"))));
    slots.push_back(h);
  }
  Tensor<S> nodes = t.reshape(t.concat_last(slots), {B, kMaxAtoms, cfg.read_in});
  Tensor<S> edges = t.leaf(Tensor<S>::zeros({B, kMaxAtoms, kMaxAtoms, cfg.edge_in}));
  return {nodes, edges, stack_complete_masks<S>(B)};
}

template <typename S>
GraphDistTensors<S> read_out(Bound<S>& p, const GraphState<S>& st) {
  Tape<S>& t = p.tape();
  Tensor<S> sym = t.scale(t.add(st.edges, t.swap_middle(st.edges)), S(0.5));
  Tensor<S> node_logits = linear(p, "dec.node", st.nodes);
  Tensor<S> edge_logits = linear(p, "dec.edge", sym);
  return {t.softmax_last(node_logits), t.softmax_last(edge_logits)};
}

template <typename S>
GraphDistTensors<S> decode(Bound<S>& p, const DecoderConfig& cfg, const Tensor<S>& z,
                           const Tensor<S>& labels = {}) {
  GraphState<S> st = read_in(p, cfg, z, labels);
  st = propagate(p, "dec", st, cfg.mpnn());
  return read_out(p, st);
}

// Extract one batch item, detach, and pin the diagonal to NONE.
template <typename S>
GraphDistribution<S> to_distribution(const GraphDistTensors<S>& d, int b) {
  GraphDistribution<S> out{Tensor<S>::zeros({kMaxAtoms, kAtomTypes}),
                           Tensor<S>::zeros({kMaxAtoms, kMaxAtoms, kBondTypes})};
  for (int v = 0; v < kMaxAtoms; ++v)
    for (int c = 0; c < kAtomTypes; ++c)
      out.node_probs.at_mut({v, c}) = d.node_probs.at({b, v, c});
  for (int u = 0; u < kMaxAtoms; ++u)
    for (int v = 0; v < kMaxAtoms; ++v)
      for (int c = 0; c < kBondTypes; ++c)
        out.edge_probs.at_mut({u, v, c}) =
            u == v ? (c == 0 ? S(1) : S(0)) : d.edge_probs.at({b, u, v, c});
  return out;
}

enum class RealizeMode { Argmax, Sample };

struct Realized {
  MolGraph graph;
  int repaired_edges = 0;  // drawn non-NONE against a NONE atom, forced to NONE
};

namespace detail {

template <typename S>
int pick_category(const S* row, int k, RealizeMode mode, Rng* rng) {
  if (mode == RealizeMode::Argmax) {
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (row[c] > row[best]) best = c;
    return best;
  }
  double u = rng->uniform();
  double acc = 0;
  for (int c = 0; c < k; ++c) {
    acc += static_cast<double>(row[c]);
    if (u < acc) return c;
  }
  return k - 1;
}

}  // namespace detail

template <typename S>
Realized realize_full(const GraphDistribution<S>& dist, RealizeMode mode, Rng* rng = nullptr) {
  if (mode == RealizeMode::Sample && rng == nullptr)
    throw ContractViolation("realize: SAMPLE mode needs an rng");
  Realized out;
  for (int v = 0; v < kMaxAtoms; ++v) {
    int c = detail::pick_category(dist.node_probs.ptr() + dist.node_probs.offset({v, 0}),
                                  kAtomTypes, mode, rng);
    out.graph.atoms[static_cast<std::size_t>(v)] = static_cast<Atom>(c);
  }
  for (int u = 0; u < kMaxAtoms; ++u)
    for (int v = u + 1; v < kMaxAtoms; ++v) {
      int c = detail::pick_category(dist.edge_probs.ptr() + dist.edge_probs.offset({u, v, 0}),
                                    kBondTypes, mode, rng);
      if (c == 0) continue;
      if (out.graph.atoms[static_cast<std::size_t>(u)] == Atom::None ||
          out.graph.atoms[static_cast<std::size_t>(v)] == Atom::None) {
        ++out.repaired_edges;  // incident atom absent: bond forced to NONE
        continue;
      }
      out.graph.set_bond(u, v, static_cast<Bond>(c));
    }
  return out;
}

template <typename S>
MolGraph realize(const GraphDistribution<S>& dist, RealizeMode mode, Rng* rng = nullptr) {
  return realize_full(dist, mode, rng).graph;
}

}  // namespace mpgvae
