#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpgvae/decoder.hpp"
#include "mpgvae/encoder.hpp"
#include "mpgvae/featurize.hpp"
#include "mpgvae/molgraph.hpp"
#include "mpgvae/rng.hpp"

namespace mpgvae {

// ELBO pieces: KL of the factored-Gaussian posterior against the standard
// normal prior, the reparameterization trick, and the categorical
// reconstruction loss over atom slots and unordered pairs.

inline constexpr double kProbFloor = 1e-10;
inline constexpr int kNodeTerms = kMaxAtoms;                        // 9
inline constexpr int kEdgeTerms = kMaxAtoms * (kMaxAtoms - 1) / 2;  // 36
inline constexpr int kReconTerms = kNodeTerms + kEdgeTerms;         // 45

// -1/2 sum_i (1 + 2 log_sigma_i - mu_i^2 - sigma_i^2), summed over the batch.
template <typename S>
Tensor<S> kl_standard_normal(Tape<S>& t, const PosteriorParams<S>& q) {
  Tensor<S> two_ls = t.scale(q.log_sigma, S(2));
  Tensor<S> inner = t.add_scalar(t.sub(t.sub(two_ls, t.mul(q.mu, q.mu)), t.exp_(two_ls)), S(1));
  return t.scale(t.sum_all(inner), S(-0.5));
}

// z = mu + exp(log_sigma) * eps with eps a constant: the gradient flows to
// mu and log_sigma only.
template <typename S>
Tensor<S> reparameterize(Tape<S>& t, const PosteriorParams<S>& q, const Tensor<S>& eps) {
  if (eps.shape != q.mu.shape)
    throw ShapeError("reparameterize: eps " + shape_str(eps.shape) + " vs mu " +
                     shape_str(q.mu.shape));
  return t.add(q.mu, t.mul(t.exp_(q.log_sigma), t.leaf(eps)));
}

template <typename S>
Tensor<S> standard_normal(const Shape& shape, Rng& rng) {
  Tensor<S> eps = Tensor<S>::zeros(shape);
  S* p = eps.mut_ptr();
  for (std::size_t i = 0; i < eps.numel(); ++i) p[i] = static_cast<S>(rng.normal());
  return eps;
}

template <typename S>
Tensor<S> reparameterize(Tape<S>& t, const PosteriorParams<S>& q, Rng& rng) {
  return reparameterize(t, q, standard_normal<S>(q.mu.shape, rng));
}

struct ClampStats {
  long long clamped = 0;  // target categories hit with probability < the floor
};

namespace detail {

// Constant one-hot selectors for the target categories: node selector over
// all 9 slots, edge selector over unordered pairs u < v only.
template <typename S>
Tensor<S> node_selector(const std::vector<MolGraph>& targets) {
  const int B = static_cast<int>(targets.size());
  Tensor<S> sel = Tensor<S>::zeros({B, kMaxAtoms, kAtomTypes});
  for (int b = 0; b < B; ++b)
    for (int v = 0; v < kMaxAtoms; ++v)
      sel.at_mut({b, v,
                  static_cast<int>(targets[static_cast<std::size_t>(b)]
                                       .atoms[static_cast<std::size_t>(v)])}) = S(1);
  return sel;
}

template <typename S>
Tensor<S> edge_selector(const std::vector<MolGraph>& targets) {
  const int B = static_cast<int>(targets.size());
  Tensor<S> sel = Tensor<S>::zeros({B, kMaxAtoms, kMaxAtoms, kBondTypes});
  for (int b = 0; b < B; ++b)
    for (int u = 0; u < kMaxAtoms; ++u)
      for (int v = u + 1; v < kMaxAtoms; ++v)
        sel.at_mut({b, u, v,
                    static_cast<int>(targets[static_cast<std::size_t>(b)].bond(u, v))}) = S(1);
  return sel;
}

template <typename S>
long long count_clamped(const Tensor<S>& probs, const Tensor<S>& sel) {
  long long n = 0;
  const S* pp = probs.ptr();
  const S* ps = sel.ptr();
  for (std::size_t i = 0; i < probs.numel(); ++i)
    if (ps[i] != S(0) && pp[i] < static_cast<S>(kProbFloor)) ++n;
  return n;
}

}  // namespace detail

// Negative log-likelihood of the targets under the factorized observation
// model, averaged over the batch and normalized by the 9 + 36 slots/pairs.
// Probabilities below the floor are clamped (counted, never NaN).
template <typename S>
Tensor<S> reconstruction_loss(Tape<S>& t, const GraphDistTensors<S>& dist,
                              const std::vector<MolGraph>& targets,
                              ClampStats* stats = nullptr) {
  const int B = static_cast<int>(targets.size());
  if (B == 0) throw ContractViolation("reconstruction_loss: empty batch");
  if (dist.node_probs.dim(0) != B)
    throw ShapeError("reconstruction_loss: batch " + std::to_string(B) + " vs dist " +
                     shape_str(dist.node_probs.shape));
  Tensor<S> node_sel = detail::node_selector<S>(targets);
  Tensor<S> edge_sel = detail::edge_selector<S>(targets);
  if (stats) {
    stats->clamped += detail::count_clamped(dist.node_probs, node_sel);
    stats->clamped += detail::count_clamped(dist.edge_probs, edge_sel);
  }
  Tensor<S> node_ll =
      t.sum_all(t.mul(t.log_(t.clamp_min(dist.node_probs, static_cast<S>(kProbFloor))),
                      t.leaf(node_sel)));
  Tensor<S> edge_ll =
      t.sum_all(t.mul(t.log_(t.clamp_min(dist.edge_probs, static_cast<S>(kProbFloor))),
                      t.leaf(edge_sel)));
  return t.scale(t.add(node_ll, edge_ll), S(-1) / static_cast<S>(kReconTerms * B));
}

// Separate per-component cross-entropies for reporting (values only).
struct ReconBreakdown {
  double node_ce = 0;  // mean over batch of -sum_v log p / 9
  double edge_ce = 0;  // mean over batch of -sum_{u<v} log p / 36
};

template <typename S>
ReconBreakdown recon_breakdown(const GraphDistTensors<S>& dist,
                               const std::vector<MolGraph>& targets) {
  const int B = static_cast<int>(targets.size());
  Tensor<S> node_sel = detail::node_selector<S>(targets);
  Tensor<S> edge_sel = detail::edge_selector<S>(targets);
  double node = 0, edge = 0;
  for (std::size_t i = 0; i < node_sel.numel(); ++i)
    if (node_sel.at(i) != S(0))
      node -= std::log(std::max(static_cast<double>(dist.node_probs.at(i)), kProbFloor));
  for (std::size_t i = 0; i < edge_sel.numel(); ++i)
    if (edge_sel.at(i) != S(0))
      edge -= std::log(std::max(static_cast<double>(dist.edge_probs.at(i)), kProbFloor));
  return {node / (B * kNodeTerms), edge / (B * kEdgeTerms)};
}

// Atom-histogram labels [C,N,O,F] as a [B,4] tensor for conditional runs.
template <typename S>
Tensor<S> histogram_labels(const std::vector<MolGraph>& batch) {
  Tensor<S> y = Tensor<S>::zeros({static_cast<int>(batch.size()), 4});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto h = batch[b].atom_histogram();
    for (int j = 0; j < 4; ++j)
      y.at_mut({static_cast<int>(b), j}) =
          static_cast<S>(h[static_cast<std::size_t>(j)]);
  }
  return y;
}

// One ELBO evaluation over a batch: loss tensor on the tape plus detached
// report numbers. beta scales the KL term (warmup).
template <typename S>
struct BatchElbo {
  Tensor<S> loss;
  double recon = 0, kl = 0, total = 0;
  double node_ce = 0, edge_ce = 0;
};

template <typename S>
BatchElbo<S> elbo_batch(Bound<S>& p, const EncoderConfig& enc, const DecoderConfig& dec,
                        const std::vector<MolGraph>& batch, double beta, const Tensor<S>& eps,
                        ClampStats* stats = nullptr) {
  Tape<S>& t = p.tape();
  const int B = static_cast<int>(batch.size());
  Tensor<S> labels;
  if (enc.conditional) labels = histogram_labels<S>(batch);
  PosteriorParams<S> q = encode(p, enc, batch, labels);
  Tensor<S> z = reparameterize(t, q, eps);
  GraphDistTensors<S> d = decode(p, dec, z, labels);
  Tensor<S> recon = reconstruction_loss(t, d, batch, stats);
  Tensor<S> kl_mean = t.scale(kl_standard_normal(t, q), S(1) / static_cast<S>(B));
  Tensor<S> loss = t.add(recon, t.scale(kl_mean, static_cast<S>(beta)));

  BatchElbo<S> out;
  out.loss = loss;
  out.recon = static_cast<double>(recon.item());
  out.kl = static_cast<double>(kl_mean.item());
  out.total = static_cast<double>(loss.item());
  auto bd = recon_breakdown<S>(d, batch);
  out.node_ce = bd.node_ce;
  out.edge_ce = bd.edge_ce;
  return out;
}

// Deterministic round trip: encode to the posterior mean, decode, argmax.
template <typename S>
Realized reconstruct_argmax(ParamStore<S>& store, const EncoderConfig& enc,
                            const DecoderConfig& dec, const MolGraph& g) {
  Tape<S> t;
  Bound<S> p(t, store);
  Tensor<S> labels;
  if (enc.conditional) labels = histogram_labels<S>({g});
  PosteriorParams<S> q = encode(p, enc, {g}, labels);
  GraphDistTensors<S> d = decode(p, dec, q.mu, labels);
  return realize_full(to_distribution(d, 0), RealizeMode::Argmax);
}

// Draw n molecules from the prior: z ~ N(0, I), decode, realize. With a
// conditional decoder, `labels` must hold one row per sample. Deterministic
// for a fixed seed.
template <typename S>
std::vector<Realized> sample_prior(ParamStore<S>& store, const DecoderConfig& dec, int n,
                                   std::uint64_t seed, RealizeMode mode,
                                   const Tensor<S>& labels = {}, int chunk = 64) {
  if (n <= 0) throw ContractViolation("sample_prior: n must be positive");
  if (dec.conditional && labels.shape != Shape{n, dec.label_dim})
    throw ShapeError("sample_prior: conditional labels must be [n," +
                     std::to_string(dec.label_dim) + "]");
  Rng z_rng = Rng(seed).fork(0);
  Rng cat_rng = Rng(seed).fork(1);
  std::vector<Realized> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int at = 0; at < n; at += chunk) {
    const int B = at + chunk <= n ? chunk : n - at;
    Tensor<S> z = standard_normal<S>({B, dec.latent}, z_rng);
    Tensor<S> batch_labels;
    if (dec.conditional) {
      batch_labels = Tensor<S>::zeros({B, dec.label_dim});
      for (int b = 0; b < B; ++b)
        for (int j = 0; j < dec.label_dim; ++j)
          batch_labels.at_mut({b, j}) = labels.at({at + b, j});
    }
    Tape<S> t;
    Bound<S> p(t, store);
    GraphDistTensors<S> d = decode(p, dec, t.leaf(z), batch_labels);
    for (int b = 0; b < B; ++b)
      out.push_back(realize_full(to_distribution(d, b), mode, &cat_rng));
  }
  return out;
}

}  // namespace mpgvae
