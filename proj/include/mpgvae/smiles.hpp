#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "mpgvae/errors.hpp"
#include "mpgvae/molgraph.hpp"

namespace mpgvae {

// Supported SMILES subset: atoms C N O F (aromatic c n o), minimal bracket
// atoms like [nH] (element + optional explicit-H count, nothing else), bonds
// - = #, branches, ring closures 1-9 and %NN, and '.' separators. Charges,
// isotopes, stereo markers, and other elements are rejected with the byte
// offset of the offending character.

struct ParsedAtom {
  char element;        // 'C','N','O','F'
  bool aromatic;
  int explicit_h;      // -1 = implicit
  std::size_t byte;
};

struct ParsedBond {
  int u, v;
  int order;           // 1,2,3; 0 = aromatic
  std::size_t byte;
};

struct ParsedMol {
  std::vector<ParsedAtom> atoms;
  std::vector<ParsedBond> bonds;
  bool has_aromatic() const {
    for (const auto& a : atoms)
      if (a.aromatic) return true;
    return false;
  }
};

namespace detail {

struct RingSlot {
  int atom = -1;
  int bond = -1;  // -1 unspecified, else 1/2/3
  std::size_t byte = 0;
};

inline void add_bond(ParsedMol& mol, std::vector<std::pair<int, int>>& seen, int u, int v,
                     int order, std::size_t byte) {
  if (u == v) throw ParseError("ring closure bonds an atom to itself", byte);
  auto key = std::minmax(u, v);
  for (const auto& k : seen)
    if (k == std::pair<int, int>(key.first, key.second))
      throw ParseError("duplicate bond between the same atoms", byte);
  seen.emplace_back(key.first, key.second);
  mol.bonds.push_back({u, v, order, byte});
}

}  // namespace detail

// Grammar-level parse; aromatic perception and kekulization happen later.
inline ParsedMol parse_smiles_raw(const std::string& s) {
  ParsedMol mol;
  std::vector<std::pair<int, int>> bond_pairs;
  std::vector<std::pair<int, std::size_t>> branch_stack;  // (atom, byte of '(')
  std::array<detail::RingSlot, 100> rings{};
  int prev = -1;
  int pending_bond = -1;  // -1 none; else 1/2/3
  std::size_t pending_byte = 0;
  bool after_dot = false;
  std::size_t i = 0;

  auto add_atom = [&](char element, bool aromatic, int h, std::size_t byte) {
    const int idx = static_cast<int>(mol.atoms.size());
    mol.atoms.push_back({element, aromatic, h, byte});
    if (prev >= 0) {
      detail::add_bond(mol, bond_pairs, prev, idx, pending_bond < 0 ? -1 : pending_bond, byte);
    } else if (pending_bond >= 0) {
      throw ParseError("bond symbol with no atom before it", pending_byte);
    }
    pending_bond = -1;
    prev = idx;
    after_dot = false;
  };

  auto close_ring = [&](int number, std::size_t byte) {
    if (prev < 0) throw ParseError("ring closure digit before any atom", byte);
    detail::RingSlot& slot = rings[static_cast<std::size_t>(number)];
    if (slot.atom < 0) {
      slot = {prev, pending_bond, byte};
    } else {
      int order = -1;
      if (slot.bond >= 0 && pending_bond >= 0 && slot.bond != pending_bond)
        throw ParseError("ring closure bond orders disagree", byte);
      order = slot.bond >= 0 ? slot.bond : pending_bond;
      detail::add_bond(mol, bond_pairs, slot.atom, prev, order, byte);
      slot = {};
    }
    pending_bond = -1;
  };

  while (i < s.size()) {
    const char c = s[i];
    const std::size_t byte = i;
    switch (c) {
      case 'C': case 'N': case 'O': case 'F':
        add_atom(c, false, -1, byte);
        ++i;
        break;
      case 'c': case 'n': case 'o':
        add_atom(static_cast<char>(c - 'a' + 'A'), true, -1, byte);
        ++i;
        break;
      case '[': {
        ++i;
        if (i >= s.size()) throw ParseError("unterminated bracket atom", i);
        const char e = s[i];
        bool aromatic = e == 'c' || e == 'n' || e == 'o';
        char elem = aromatic ? static_cast<char>(e - 'a' + 'A') : e;
        if (elem != 'C' && elem != 'N' && elem != 'O' && elem != 'F')
          throw ParseError(std::string("unsupported bracket element '") + e + "'", i);
        ++i;
        int h = 0;
        if (i < s.size() && s[i] == 'H') {
          ++i;
          h = 1;
          if (i < s.size() && s[i] >= '0' && s[i] <= '9') {
            h = s[i] - '0';
            ++i;
          }
        }
        if (i >= s.size() || s[i] != ']')
          throw ParseError("expected ']' in bracket atom", i);
        ++i;
        add_atom(elem, aromatic, h, byte);
        break;
      }
      case '-': case '=': case '#':
        if (pending_bond >= 0) throw ParseError("two bond symbols in a row", byte);
        if (prev < 0) throw ParseError("bond symbol with no atom before it", byte);
        pending_bond = c == '-' ? 1 : c == '=' ? 2 : 3;
        pending_byte = byte;
        ++i;
        break;
      case '(':
        if (prev < 0) throw ParseError("branch open before any atom", byte);
        if (pending_bond >= 0) throw ParseError("bond symbol before branch open", pending_byte);
        branch_stack.emplace_back(prev, byte);
        ++i;
        break;
      case ')':
        if (branch_stack.empty()) throw ParseError("unmatched ')'", byte);
        if (pending_bond >= 0) throw ParseError("dangling bond before ')'", pending_byte);
        prev = branch_stack.back().first;
        branch_stack.pop_back();
        ++i;
        break;
      case '%': {
        if (i + 2 >= s.size() || s[i + 1] < '0' || s[i + 1] > '9' || s[i + 2] < '0' ||
            s[i + 2] > '9')
          throw ParseError("'%' ring closure needs two digits", byte);
        close_ring((s[i + 1] - '0') * 10 + (s[i + 2] - '0'), byte);
        i += 3;
        break;
      }
      case '.':
        if (!branch_stack.empty()) throw ParseError("'.' inside a branch", byte);
        if (pending_bond >= 0) throw ParseError("bond symbol before '.'", pending_byte);
        if (prev < 0) throw ParseError("'.' with no preceding atom", byte);
        prev = -1;
        after_dot = true;
        ++i;
        break;
      default:
        if (c >= '1' && c <= '9') {
          close_ring(c - '0', byte);
          ++i;
          break;
        }
        throw ParseError(std::string("unsupported character '") + c + "'", byte);
    }
  }

  if (pending_bond >= 0) throw ParseError("dangling bond at end of input", pending_byte);
  if (!branch_stack.empty()) throw ParseError("unclosed '('", branch_stack.back().second);
  for (const auto& slot : rings)
    if (slot.atom >= 0) throw ParseError("unclosed ring closure", slot.byte);
  if (after_dot) throw ParseError("'.' at end of input", s.size());
  if (mol.atoms.empty()) throw ParseError("no atoms", 0);
  if (mol.atoms.size() > static_cast<std::size_t>(kMaxAtoms))
    throw CapacityError("molecule has " + std::to_string(mol.atoms.size()) +
                        " heavy atoms (capacity " + std::to_string(kMaxAtoms) + ")");

  // Unspecified bonds between two aromatic atoms are aromatic; every other
  // unspecified bond is single.
  for (auto& b : mol.bonds) {
    if (b.order == -1) {
      const bool arom = mol.atoms[static_cast<std::size_t>(b.u)].aromatic &&
                        mol.atoms[static_cast<std::size_t>(b.v)].aromatic;
      b.order = arom ? 0 : 1;
    }
  }
  return mol;
}

namespace detail {

inline Atom element_category(char e) {
  switch (e) {
    case 'C': return Atom::C;
    case 'N': return Atom::N;
    case 'O': return Atom::O;
    case 'F': return Atom::F;
  }
  throw ContractViolation(std::string("unknown element '") + e + "'");
}

// Deterministic search for a perfect matching over the needs-double atoms:
// always extend from the lowest-index uncovered atom, trying partners in
// index order. Graph has at most 9 vertices, so plain backtracking is cheap.
inline bool match_doubles(const std::vector<std::vector<int>>& adj, std::vector<int>& mate) {
  const int n = static_cast<int>(adj.size());
  int v = -1;
  for (int u = 0; u < n; ++u)
    if (mate[static_cast<std::size_t>(u)] < 0) {
      v = u;
      break;
    }
  if (v < 0) return true;
  for (int w : adj[static_cast<std::size_t>(v)]) {
    if (mate[static_cast<std::size_t>(w)] >= 0) continue;
    mate[static_cast<std::size_t>(v)] = w;
    mate[static_cast<std::size_t>(w)] = v;
    if (match_doubles(adj, mate)) return true;
    mate[static_cast<std::size_t>(v)] = -1;
    mate[static_cast<std::size_t>(w)] = -1;
  }
  return false;
}

}  // namespace detail

// Resolves aromatic bonds to alternating single/double. An aromatic atom
// "needs" one double bond when its element valence minus its sigma bonds
// (counting each aromatic bond once) minus its explicit hydrogens leaves
// room; pyrrole-type [nH] and furan-type o need none. The needed doubles
// must form a perfect matching on aromatic bonds or the molecule is rejected.
inline MolGraph kekulize(const ParsedMol& pm) {
  const int n = static_cast<int>(pm.atoms.size());
  std::vector<int> local(static_cast<std::size_t>(n), -1);  // needs-graph index per atom

  std::vector<int> sigma(static_cast<std::size_t>(n), 0);
  for (const auto& b : pm.bonds) {
    const int add = b.order == 0 ? 1 : b.order;
    sigma[static_cast<std::size_t>(b.u)] += add;
    sigma[static_cast<std::size_t>(b.v)] += add;
  }

  std::vector<int> needs_atoms;
  for (int v = 0; v < n; ++v) {
    const ParsedAtom& a = pm.atoms[static_cast<std::size_t>(v)];
    if (!a.aromatic) continue;
    const int h = a.explicit_h < 0 ? 0 : a.explicit_h;
    const int room =
        max_valence(detail::element_category(a.element)) - sigma[static_cast<std::size_t>(v)] - h;
    if (room >= 1) {
      local[static_cast<std::size_t>(v)] = static_cast<int>(needs_atoms.size());
      needs_atoms.push_back(v);
    }
  }

  std::vector<std::vector<int>> adj(needs_atoms.size());
  for (const auto& b : pm.bonds) {
    if (b.order != 0) continue;
    const int lu = local[static_cast<std::size_t>(b.u)], lv = local[static_cast<std::size_t>(b.v)];
    if (lu >= 0 && lv >= 0) {
      adj[static_cast<std::size_t>(lu)].push_back(lv);
      adj[static_cast<std::size_t>(lv)].push_back(lu);
    }
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());

  std::vector<int> mate(needs_atoms.size(), -1);
  if (!detail::match_doubles(adj, mate))
    throw KekulizeError("no kekule assignment satisfies every aromatic atom");

  MolGraph g;
  for (int v = 0; v < n; ++v)
    g.atoms[static_cast<std::size_t>(v)] =
        detail::element_category(pm.atoms[static_cast<std::size_t>(v)].element);
  for (const auto& b : pm.bonds) {
    Bond order;
    if (b.order == 0) {
      const int lu = local[static_cast<std::size_t>(b.u)],
                lv = local[static_cast<std::size_t>(b.v)];
      const bool matched = lu >= 0 && lv >= 0 && mate[static_cast<std::size_t>(lu)] == lv;
      order = matched ? Bond::Double : Bond::Single;
    } else {
      order = static_cast<Bond>(b.order);
    }
    g.set_bond(b.u, b.v, order);
  }
  return g;
}

// Parse and kekulize. Atom order is the token order; that order is the
// fixed node order used downstream (no graph matching anywhere).
inline MolGraph parse_smiles(const std::string& s) { return kekulize(parse_smiles_raw(s)); }

namespace detail {

struct RingToken {
  int number;
  Bond bond;
  bool opens;
};

inline const char* bond_char(Bond b) {
  switch (b) {
    case Bond::Double: return "=";
    case Bond::Triple: return "#";
    default: return "";
  }
}

inline void emit_ring_number(std::string& out, int number) {
  if (number < 10) {
    out.push_back(static_cast<char>('0' + number));
  } else {
    out.push_back('%');
    out.push_back(static_cast<char>('0' + number / 10));
    out.push_back(static_cast<char>('0' + number % 10));
  }
}

}  // namespace detail

// Structural SMILES writer: depth-first spanning tree per component with
// ring-closure numbers for back edges and '.' between components. Works on
// any graph shape (including chemically invalid ones); produces "" for the
// empty graph.
inline std::string write_smiles_any(const MolGraph& g) {
  // Pass 1: DFS to classify tree vs back edges and discover emission order.
  std::array<bool, kMaxAtoms> visited{};
  std::array<int, kMaxAtoms> order{};  // preorder index per slot
  std::vector<int> preorder;
  std::array<std::array<bool, kMaxAtoms>, kMaxAtoms> is_tree{};
  std::vector<std::pair<int, int>> back_edges;  // (opening=earlier, closing=later)

  auto dfs = [&](auto&& self, int v, int parent) -> void {
    visited[static_cast<std::size_t>(v)] = true;
    order[static_cast<std::size_t>(v)] = static_cast<int>(preorder.size());
    preorder.push_back(v);
    for (int w = 0; w < kMaxAtoms; ++w) {
      if (w == parent || g.bond(v, w) == Bond::None) continue;
      if (!visited[static_cast<std::size_t>(w)]) {
        is_tree[static_cast<std::size_t>(v)][static_cast<std::size_t>(w)] = true;
        is_tree[static_cast<std::size_t>(w)][static_cast<std::size_t>(v)] = true;
        self(self, w, v);
      } else if (order[static_cast<std::size_t>(w)] < order[static_cast<std::size_t>(v)] &&
                 !is_tree[static_cast<std::size_t>(v)][static_cast<std::size_t>(w)]) {
        bool dup = false;
        for (const auto& e : back_edges)
          if (e.first == w && e.second == v) dup = true;
        if (!dup) back_edges.emplace_back(w, v);
      }
    }
  };

  std::vector<int> roots;
  for (int v = 0; v < kMaxAtoms; ++v)
    if (g.atoms[static_cast<std::size_t>(v)] != Atom::None && !visited[static_cast<std::size_t>(v)]) {
      roots.push_back(v);
      dfs(dfs, v, -1);
    }

  // Assign ring numbers: a number is busy from its opening atom's preorder
  // position to its closing atom's; reuse the smallest free number.
  std::sort(back_edges.begin(), back_edges.end(),
            [&](const std::pair<int, int>& a, const std::pair<int, int>& b) {
              return order[static_cast<std::size_t>(a.first)] <
                     order[static_cast<std::size_t>(b.first)];
            });
  std::array<std::vector<detail::RingToken>, kMaxAtoms> ring_tokens;
  std::vector<std::pair<int, int>> busy;  // (number, closes-at-preorder)
  int next_fresh = 1;
  for (const auto& [open, close] : back_edges) {
    const int at = order[static_cast<std::size_t>(open)];
    int number = -1;
    for (int cand = 1; cand < next_fresh; ++cand) {
      bool free = true;
      for (const auto& [num, until] : busy)
        if (num == cand && until >= at) free = false;
      if (free) {
        number = cand;
        break;
      }
    }
    if (number < 0) {
      number = next_fresh++;
      if (number > 99) throw ContractViolation("too many simultaneous ring closures");
    }
    busy.emplace_back(number, order[static_cast<std::size_t>(close)]);
    const Bond b = g.bond(open, close);
    ring_tokens[static_cast<std::size_t>(open)].push_back({number, b, true});
    ring_tokens[static_cast<std::size_t>(close)].push_back({number, b, false});
  }

  // Pass 2: emit.
  std::string out;
  auto emit = [&](auto&& self, int v, int parent) -> void {
    out += atom_symbol(g.atoms[static_cast<std::size_t>(v)]);
    for (const auto& rt : ring_tokens[static_cast<std::size_t>(v)]) {
      out += detail::bond_char(rt.bond);
      detail::emit_ring_number(out, rt.number);
    }
    std::vector<int> kids;
    for (int w = 0; w < kMaxAtoms; ++w)
      if (w != parent && is_tree[static_cast<std::size_t>(v)][static_cast<std::size_t>(w)] &&
          order[static_cast<std::size_t>(w)] > order[static_cast<std::size_t>(v)])
        kids.push_back(w);
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const int w = kids[k];
      const bool last = k + 1 == kids.size();
      if (!last) out += "(";
      out += detail::bond_char(g.bond(v, w));
      self(self, w, v);
      if (!last) out += ")";
    }
  };
  for (std::size_t r = 0; r < roots.size(); ++r) {
    if (r > 0) out += ".";
    emit(emit, roots[r], -1);
  }
  return out;
}

inline std::string write_smiles(const MolGraph& g) {
  if (!g.is_valid())
    throw ContractViolation("write_smiles: graph violates validity; use write_smiles_any");
  return write_smiles_any(g);
}

// ---- dataset ingestion --------------------------------------------------

struct IngestReport {
  std::size_t lines = 0;
  std::size_t blank = 0;
  std::size_t parsed = 0;
  std::size_t parse_errors = 0;
  std::size_t over_capacity = 0;
  std::size_t kekulize_failures = 0;
  std::size_t valence_rejects = 0;
  std::vector<std::string> first_errors;  // up to 10, "line N: message"

  std::string summary() const {
    std::string s = "parsed " + std::to_string(parsed) + "/" + std::to_string(lines) + " lines";
    s += " (" + std::to_string(blank) + " blank, " + std::to_string(parse_errors) +
         " parse errors, " + std::to_string(over_capacity) + " over capacity, " +
         std::to_string(kekulize_failures) + " kekulize failures, " +
         std::to_string(valence_rejects) + " valence rejects)";
    return s;
  }
};

// Newline-delimited SMILES; anything after the first whitespace on a line is
// an annotation and ignored. Rejected lines are counted by reason, never
// fatal. limit=0 means no limit.
inline std::pair<std::vector<MolGraph>, IngestReport> load_dataset(const std::string& path,
                                                                   std::size_t limit = 0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::vector<MolGraph> mols;
  IngestReport report;
  std::string line;
  while (std::getline(in, line)) {
    ++report.lines;
    std::size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) {
      ++report.blank;
      continue;
    }
    std::size_t b = line.find_first_of(" \t\r", a);
    const std::string token = line.substr(a, b == std::string::npos ? b : b - a);
    auto note = [&](const std::string& what) {
      if (report.first_errors.size() < 10)
        report.first_errors.push_back("line " + std::to_string(report.lines) + ": " + what);
    };
    try {
      MolGraph g = parse_smiles(token);
      if (!g.is_valid()) {
        ++report.valence_rejects;
        note("valence violation");
        continue;
      }
      mols.push_back(g);
      ++report.parsed;
      if (limit > 0 && mols.size() >= limit) break;
    } catch (const ParseError& e) {
      ++report.parse_errors;
      note(e.what());
    } catch (const CapacityError& e) {
      ++report.over_capacity;
      note(e.what());
    } catch (const KekulizeError& e) {
      ++report.kekulize_failures;
      note(e.what());
    }
  }
  return {std::move(mols), report};
}

}  // namespace mpgvae
