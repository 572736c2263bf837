#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mpgvae/molgraph.hpp"

namespace mpgvae {

// Canonical form: the lexicographically smallest serialization of the graph
// over all orderings of its existing atoms. Two graphs get the same bytes
// exactly when they are isomorphic (same atoms and bonds up to relabeling),
// regardless of which slots they occupy.
//
// Serialization for an ordering p0..p_{m-1}:
//   [m] [atom(p0)] [atom(p1) bond(p1,p0)] [atom(p2) bond(p2,p0) bond(p2,p1)] ...
// Each position k appends a fixed-length segment (1 + k bytes), so picking
// the minimal segment level by level is globally lexicographically minimal;
// ties are all explored. Tied candidates whose bond rows are identical
// outside {u,v} are exchangeable by an automorphism, so only one is
// explored — this keeps highly symmetric graphs (e.g. all-carbon chains and
// rings) from exploding.

namespace detail {

inline void append_segment(std::string& out, const MolGraph& g, int v,
                           const std::vector<int>& placed) {
  out.push_back(static_cast<char>(g.atoms[static_cast<std::size_t>(v)]));
  for (int p : placed) out.push_back(static_cast<char>(g.bond(v, p)));
}

inline bool rows_exchangeable(const MolGraph& g, int u, int v) {
  if (g.atoms[static_cast<std::size_t>(u)] != g.atoms[static_cast<std::size_t>(v)]) return false;
  for (int x = 0; x < kMaxAtoms; ++x) {
    if (x == u || x == v) continue;
    if (g.bond(u, x) != g.bond(v, x)) return false;
  }
  return true;
}

inline void canonical_dfs(const MolGraph& g, std::vector<int>& placed, std::vector<int>& rest,
                          std::string& out) {
  if (rest.empty()) return;
  // Minimal next segment across remaining candidates.
  std::string best_seg;
  std::vector<int> winners;
  for (int v : rest) {
    std::string seg;
    seg.reserve(placed.size() + 1);
    append_segment(seg, g, v, placed);
    if (winners.empty() || seg < best_seg) {
      best_seg = std::move(seg);
      winners.assign(1, v);
    } else if (seg == best_seg) {
      winners.push_back(v);
    }
  }
  // Drop candidates exchangeable with an already kept one.
  std::vector<int> kept;
  for (int v : winners) {
    bool dup = false;
    for (int u : kept)
      if (rows_exchangeable(g, u, v)) {
        dup = true;
        break;
      }
    if (!dup) kept.push_back(v);
  }
  out += best_seg;
  if (kept.size() == 1 || rest.size() == 1) {
    const int v = kept.front();
    placed.push_back(v);
    rest.erase(std::find(rest.begin(), rest.end(), v));
    canonical_dfs(g, placed, rest, out);
    return;
  }
  // Several non-exchangeable ties: explore each, keep the smallest suffix.
  std::string best_suffix;
  bool have = false;
  for (int v : kept) {
    std::vector<int> placed2 = placed;
    std::vector<int> rest2 = rest;
    placed2.push_back(v);
    rest2.erase(std::find(rest2.begin(), rest2.end(), v));
    std::string suffix;
    canonical_dfs(g, placed2, rest2, suffix);
    if (!have || suffix < best_suffix) {
      best_suffix = std::move(suffix);
      have = true;
    }
  }
  out += best_suffix;
}

}  // namespace detail

inline std::string canonical_form(const MolGraph& g) {
  std::vector<int> rest;
  for (int v = 0; v < kMaxAtoms; ++v)
    if (g.atoms[static_cast<std::size_t>(v)] != Atom::None) rest.push_back(v);
  std::string out;
  out.push_back(static_cast<char>(rest.size()));
  std::vector<int> placed;
  detail::canonical_dfs(g, placed, rest, out);
  return out;
}

// Reference implementation: minimum over every permutation of the existing
// atoms. Exponential; for tests and small graphs only.
inline std::string canonical_form_bruteforce(const MolGraph& g) {
  std::vector<int> ex;
  for (int v = 0; v < kMaxAtoms; ++v)
    if (g.atoms[static_cast<std::size_t>(v)] != Atom::None) ex.push_back(v);
  std::sort(ex.begin(), ex.end());
  std::string best;
  do {
    std::string s;
    s.push_back(static_cast<char>(ex.size()));
    std::vector<int> placed;
    for (int v : ex) {
      detail::append_segment(s, g, v, placed);
      placed.push_back(v);
    }
    if (best.empty() || s < best) best = std::move(s);
  } while (std::next_permutation(ex.begin(), ex.end()));
  if (best.empty()) best.push_back(0);
  return best;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t canonical_hash(const MolGraph& g) { return fnv1a64(canonical_form(g)); }

}  // namespace mpgvae
