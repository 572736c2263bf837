#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "mpgvae/molgraph.hpp"
#include "mpgvae/tensor.hpp"

namespace mpgvae {

// One-hot views of a MolGraph in the model's category layout. Empty slots
// and absent bonds are category 0, so every slot and pair is always encoded.

template <typename S>
Tensor<S> atom_one_hot(const MolGraph& g) {
  Tensor<S> x = Tensor<S>::zeros({kMaxAtoms, kAtomTypes});
  for (int v = 0; v < kMaxAtoms; ++v)
    x.at_mut({v, static_cast<int>(g.atoms[static_cast<std::size_t>(v)])}) = S(1);
  return x;
}

template <typename S>
Tensor<S> bond_one_hot(const MolGraph& g) {
  Tensor<S> e = Tensor<S>::zeros({kMaxAtoms, kMaxAtoms, kBondTypes});
  for (int u = 0; u < kMaxAtoms; ++u)
    for (int v = 0; v < kMaxAtoms; ++v)
      e.at_mut({u, v, static_cast<int>(g.bond(u, v))}) = S(1);
  return e;
}

template <typename S>
MolGraph decode_one_hot(const Tensor<S>& x, const Tensor<S>& e) {
  if (x.shape != Shape{kMaxAtoms, kAtomTypes} ||
      e.shape != Shape{kMaxAtoms, kMaxAtoms, kBondTypes})
    throw ShapeError("decode_one_hot: got " + shape_str(x.shape) + " and " + shape_str(e.shape));
  MolGraph g;
  for (int v = 0; v < kMaxAtoms; ++v) {
    int best = 0;
    for (int c = 1; c < kAtomTypes; ++c)
      if (x.at({v, c}) > x.at({v, best})) best = c;
    g.atoms[static_cast<std::size_t>(v)] = static_cast<Atom>(best);
  }
  for (int u = 0; u < kMaxAtoms; ++u)
    for (int v = u + 1; v < kMaxAtoms; ++v) {
      int best = 0;
      for (int c = 1; c < kBondTypes; ++c)
        if (e.at({u, v, c}) > e.at({u, v, best})) best = c;
      if (best != 0) g.set_bond(u, v, static_cast<Bond>(best));
    }
  return g;
}

// Pair masks for message passing: 1 on participating (u,v), 0 elsewhere.
// Self-pairs are never included.
template <typename S>
Tensor<S> observed_pair_mask(const MolGraph& g) {
  Tensor<S> m = Tensor<S>::zeros({kMaxAtoms, kMaxAtoms});
  for (int u = 0; u < kMaxAtoms; ++u)
    for (int v = 0; v < kMaxAtoms; ++v)
      if (u != v && g.bond(u, v) != Bond::None) m.at_mut({u, v}) = S(1);
  return m;
}

template <typename S>
Tensor<S> complete_pair_mask() {
  Tensor<S> m = Tensor<S>::zeros({kMaxAtoms, kMaxAtoms});
  for (int u = 0; u < kMaxAtoms; ++u)
    for (int v = 0; v < kMaxAtoms; ++v)
      if (u != v) m.at_mut({u, v}) = S(1);
  return m;
}

// Batched stacking: leading axis is the batch. Used to run a minibatch of
// molecules through one tape.
template <typename S>
Tensor<S> stack_batch(const std::vector<Tensor<S>>& items) {
  if (items.empty()) throw ContractViolation("stack_batch: empty batch");
  Shape inner = items[0].shape;
  Shape out_shape;
  out_shape.push_back(static_cast<int>(items.size()));
  for (int d : inner) out_shape.push_back(d);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  const std::size_t stride = items[0].numel();
  for (std::size_t b = 0; b < items.size(); ++b) {
    if (items[b].shape != inner)
      throw ShapeError("stack_batch: item " + std::to_string(b) + " has shape " +
                       shape_str(items[b].shape) + ", expected " + shape_str(inner));
    std::copy(items[b].ptr(), items[b].ptr() + stride, out.mut_ptr() + b * stride);
  }
  return out;
}

template <typename S>
Tensor<S> stack_atom_one_hot(const std::vector<MolGraph>& batch) {
  std::vector<Tensor<S>> xs;
  xs.reserve(batch.size());
  for (const auto& g : batch) xs.push_back(atom_one_hot<S>(g));
  return stack_batch(xs);
}

template <typename S>
Tensor<S> stack_bond_one_hot(const std::vector<MolGraph>& batch) {
  std::vector<Tensor<S>> es;
  es.reserve(batch.size());
  for (const auto& g : batch) es.push_back(bond_one_hot<S>(g));
  return stack_batch(es);
}

template <typename S>
Tensor<S> stack_observed_masks(const std::vector<MolGraph>& batch) {
  std::vector<Tensor<S>> ms;
  ms.reserve(batch.size());
  for (const auto& g : batch) ms.push_back(observed_pair_mask<S>(g));
  return stack_batch(ms);
}

template <typename S>
Tensor<S> stack_complete_masks(int batch) {
  std::vector<Tensor<S>> ms(static_cast<std::size_t>(batch), complete_pair_mask<S>());
  return stack_batch(ms);
}

}  // namespace mpgvae
