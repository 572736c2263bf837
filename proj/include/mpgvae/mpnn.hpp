#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mpgvae/molgraph.hpp"
#include "mpgvae/nn.hpp"
#include "mpgvae/tape.hpp"
#include "mpgvae/tensor.hpp"

namespace mpgvae {

// Shared message-passing stack used by the encoder and the decoder:
// interaction-network messages on pairs, scalar-attention aggregation,
// GRU node updates, and direct edge updates (edges become the messages).
//
// States are batched: nodes [B, n, d], edges [B, n, n, d_e], and a constant
// 0/1 pair mask [B, n, n] with zero diagonal selecting which ordered pairs
// (receiver u, neighbour w) carry messages.

enum class MaskPolicy { ObservedEdges, Complete };

template <typename S>
struct GraphState {
  Tensor<S> nodes;  // [B, n, d]
  Tensor<S> edges;  // [B, n, n, d_e]
  Tensor<S> mask;   // [B, n, n], constant (not on tape)
};

struct MpnnConfig {
  int node_in = 0;            // width of h^0
  int edge_in = 0;            // width of e^0
  std::vector<int> widths;    // output width of each layer, length T
};

namespace detail {

inline std::string layer_prefix(const std::string& prefix, int t) {
  return prefix + ".mp" + std::to_string(t + 1);
}

// Expand [B, n, n] to a constant [B, n, n, d] by repeating along the last axis.
template <typename S>
Tensor<S> expand_mask(const Tensor<S>& mask, int d) {
  Shape s = mask.shape;
  s.push_back(d);
  Tensor<S> out = Tensor<S>::zeros(s);
  const S* pm = mask.ptr();
  S* po = out.mut_ptr();
  for (std::size_t i = 0; i < mask.numel(); ++i)
    if (pm[i] != S(0))
      for (int j = 0; j < d; ++j) po[i * static_cast<std::size_t>(d) + j] = pm[i];
  return out;
}

}  // namespace detail

template <typename S>
void register_mpnn(ParamStore<S>& store, const std::string& prefix, const MpnnConfig& cfg,
                   Rng& rng) {
  if (cfg.widths.empty()) throw ContractViolation("register_mpnn: no layers");
  int d_node = cfg.node_in;
  int d_edge = cfg.edge_in;
  for (std::size_t t = 0; t < cfg.widths.size(); ++t) {
    const std::string lp = detail::layer_prefix(prefix, static_cast<int>(t));
    const int d_out = cfg.widths[t];
    store.add_matrix(lp + ".W_e", d_edge, d_out, rng);
    store.add_matrix(lp + ".W_hu", d_node, d_out, rng);
    store.add_matrix(lp + ".W_hw", d_node, d_out, rng);
    store.add_matrix(lp + ".W_a", d_out, 1, rng);
    if (d_node != d_out) store.add_matrix(lp + ".proj.W", d_node, d_out, rng);
    register_gru(store, lp + ".gru", d_out, d_out, rng);
    d_node = d_out;
    d_edge = d_out;
  }
}

// m_uw = tanh(W_e e_uw + W_hu h_u + W_hw h_w) on masked pairs, zero elsewhere.
template <typename S>
Tensor<S> message(Bound<S>& p, const std::string& layer, const GraphState<S>& st) {
  Tape<S>& t = p.tape();
  Tensor<S> hu = linear_nobias(t, st.nodes, p(layer + ".W_hu"));  // [B,n,d]
  Tensor<S> hw = linear_nobias(t, st.nodes, p(layer + ".W_hw"));
  Tensor<S> pair = t.pair_sum(hu, hw);                            // [B,n,n,d]
  Tensor<S> ee = linear_nobias(t, st.edges, p(layer + ".W_e"));   // [B,n,n,d]
  Tensor<S> raw = t.tanh_(t.add(ee, pair));
  Tensor<S> mask4 = detail::expand_mask(st.mask, raw.dim(-1));
  return t.mul(raw, mask4);
}

// Attention coefficients per receiver u: logits l_uw = W_a m_uw, masked
// softmax over w. Rows with no masked neighbour come out all-zero.
template <typename S>
Tensor<S> attention(Bound<S>& p, const std::string& layer, const Tensor<S>& messages,
                    const Tensor<S>& mask) {
  Tape<S>& t = p.tape();
  const int B = messages.dim(0), n = messages.dim(1);
  Tensor<S> logits = t.reshape(linear_nobias(t, messages, p(layer + ".W_a")), {B, n, n});
  return t.softmax_last(logits, mask, /*zero_empty_rows=*/true);
}

// Aggregate sum_w a_uw m_uw per receiver; isolated nodes get the zero vector.
template <typename S>
Tensor<S> attend_aggregate(Bound<S>& p, const std::string& layer, const Tensor<S>& messages,
                           const Tensor<S>& mask) {
  Tape<S>& t = p.tape();
  const int B = messages.dim(0), n = messages.dim(1), d = messages.dim(-1);
  Tensor<S> att = attention(p, layer, messages, mask);  // [B,n,n]
  Tensor<S> a_rows = t.reshape(att, {B * n, 1, n});
  Tensor<S> m_rows = t.reshape(messages, {B * n, n, d});
  return t.reshape(t.bmm(a_rows, m_rows), {B, n, d});
}

// h' = GRU(aggregated, h), with a learned projection of h to the layer's
// output width first when the widths differ.
template <typename S>
Tensor<S> node_update(Bound<S>& p, const std::string& layer, const Tensor<S>& nodes,
                      const Tensor<S>& aggregated) {
  Tape<S>& t = p.tape();
  Tensor<S> h = nodes;
  if (nodes.dim(-1) != aggregated.dim(-1)) h = linear_nobias(t, nodes, p(layer + ".proj.W"));
  return gru_cell(t, aggregated, h, bind_gru(p, layer + ".gru"));
}

// Runs the full T-layer stack; edges after layer t are that layer's messages.
template <typename S>
GraphState<S> propagate(Bound<S>& p, const std::string& prefix, GraphState<S> st,
                        const MpnnConfig& cfg) {
  for (std::size_t t = 0; t < cfg.widths.size(); ++t) {
    const std::string lp = detail::layer_prefix(prefix, static_cast<int>(t));
    Tensor<S> m = message(p, lp, st);
    Tensor<S> agg = attend_aggregate(p, lp, m, st.mask);
    Tensor<S> h = node_update(p, lp, st.nodes, agg);
    st = GraphState<S>{h, m, st.mask};
  }
  return st;
}

}  // namespace mpgvae
