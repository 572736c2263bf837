#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "mpgvae/errors.hpp"

namespace mpgvae {

// Fixed 9-slot molecular graph over heavy atoms C/N/O/F. Slot order is not
// meaningful chemistry; empty slots carry Atom::None and no bonds. Category
// indices are the one-hot layout used by the model, so they are pinned.
enum class Atom : std::uint8_t { None = 0, C = 1, N = 2, O = 3, F = 4 };
enum class Bond : std::uint8_t { None = 0, Single = 1, Double = 2, Triple = 3 };

inline constexpr int kMaxAtoms = 9;
inline constexpr int kAtomTypes = 5;
inline constexpr int kBondTypes = 4;

inline constexpr int bond_order(Bond b) { return static_cast<int>(b); }

inline constexpr int max_valence(Atom a) {
  switch (a) {
    case Atom::C: return 4;
    case Atom::N: return 3;
    case Atom::O: return 2;
    case Atom::F: return 1;
    case Atom::None: return 0;
  }
  return 0;
}

inline const char* atom_symbol(Atom a) {
  switch (a) {
    case Atom::C: return "C";
    case Atom::N: return "N";
    case Atom::O: return "O";
    case Atom::F: return "F";
    case Atom::None: return ".";
  }
  return "?";
}

struct MolGraph {
  std::array<Atom, kMaxAtoms> atoms{};
  std::array<std::array<Bond, kMaxAtoms>, kMaxAtoms> bonds{};

  Bond bond(int u, int v) const { return bonds[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)]; }

  void set_bond(int u, int v, Bond b) {
    if (u == v) throw ContractViolation("set_bond: self loop on slot " + std::to_string(u));
    bonds[static_cast<std::size_t>(u)][static_cast<std::size_t>(v)] = b;
    bonds[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)] = b;
  }

  bool operator==(const MolGraph&) const = default;

  int atom_count() const {
    int n = 0;
    for (Atom a : atoms) n += a != Atom::None;
    return n;
  }

  int bond_count() const {
    int n = 0;
    for (int u = 0; u < kMaxAtoms; ++u)
      for (int v = u + 1; v < kMaxAtoms; ++v) n += bond(u, v) != Bond::None;
    return n;
  }

  int valence_sum(int v) const {
    int s = 0;
    for (int u = 0; u < kMaxAtoms; ++u)
      if (u != v) s += bond_order(bond(v, u));
    return s;
  }

  // Structural well-formedness plus chemistry: at least one atom, clean
  // diagonal and symmetry, no bonds touching empty slots, and every atom at
  // or under its maximum valence (remaining capacity is implicit hydrogen).
  bool is_valid() const {
    if (atom_count() == 0) return false;
    for (int u = 0; u < kMaxAtoms; ++u) {
      if (bond(u, u) != Bond::None) return false;
      for (int v = u + 1; v < kMaxAtoms; ++v) {
        if (bond(u, v) != bond(v, u)) return false;
        if (bond(u, v) != Bond::None &&
            (atoms[static_cast<std::size_t>(u)] == Atom::None ||
             atoms[static_cast<std::size_t>(v)] == Atom::None))
          return false;
      }
    }
    for (int v = 0; v < kMaxAtoms; ++v)
      if (atoms[static_cast<std::size_t>(v)] != Atom::None &&
          valence_sum(v) > max_valence(atoms[static_cast<std::size_t>(v)]))
        return false;
    return true;
  }

  // True when every existing atom is reachable from every other one.
  bool is_connected() const {
    int start = -1, n = 0;
    for (int v = 0; v < kMaxAtoms; ++v)
      if (atoms[static_cast<std::size_t>(v)] != Atom::None) {
        if (start < 0) start = v;
        ++n;
      }
    if (n == 0) return false;
    std::array<bool, kMaxAtoms> seen{};
    std::array<int, kMaxAtoms> stack{};
    int top = 0;
    stack[top++] = start;
    seen[static_cast<std::size_t>(start)] = true;
    int reached = 1;
    while (top > 0) {
      const int v = stack[--top];
      for (int u = 0; u < kMaxAtoms; ++u)
        if (!seen[static_cast<std::size_t>(u)] && bond(v, u) != Bond::None) {
          seen[static_cast<std::size_t>(u)] = true;
          stack[top++] = u;
          ++reached;
        }
    }
    return reached == n;
  }

  // Independent cycles: E - V + number_of_components, over existing atoms.
  int ring_count() const {
    int n = 0;
    std::array<bool, kMaxAtoms> seen{};
    int components = 0;
    for (int v = 0; v < kMaxAtoms; ++v)
      if (atoms[static_cast<std::size_t>(v)] != Atom::None) ++n;
    for (int v = 0; v < kMaxAtoms; ++v) {
      if (atoms[static_cast<std::size_t>(v)] == Atom::None || seen[static_cast<std::size_t>(v)])
        continue;
      ++components;
      std::array<int, kMaxAtoms> stack{};
      int top = 0;
      stack[top++] = v;
      seen[static_cast<std::size_t>(v)] = true;
      while (top > 0) {
        const int w = stack[--top];
        for (int u = 0; u < kMaxAtoms; ++u)
          if (!seen[static_cast<std::size_t>(u)] && bond(w, u) != Bond::None) {
            seen[static_cast<std::size_t>(u)] = true;
            stack[top++] = u;
          }
      }
    }
    return bond_count() - n + components;
  }

  // Counts of [C, N, O, F]; the conditioning label.
  std::array<int, 4> atom_histogram() const {
    std::array<int, 4> h{};
    for (Atom a : atoms)
      if (a != Atom::None) ++h[static_cast<std::size_t>(a) - 1];
    return h;
  }

  // Relabels slots: result slot perm[i] receives the content of slot i.
  MolGraph permuted(const std::array<int, kMaxAtoms>& perm) const {
    MolGraph out;
    for (int i = 0; i < kMaxAtoms; ++i)
      out.atoms[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
          atoms[static_cast<std::size_t>(i)];
    for (int i = 0; i < kMaxAtoms; ++i)
      for (int j = 0; j < kMaxAtoms; ++j)
        out.bonds[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]
                 [static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])] =
            bonds[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return out;
  }
};

}  // namespace mpgvae
