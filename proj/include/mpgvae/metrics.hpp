#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <string>
#include <unordered_set>
#include <vector>

#include "mpgvae/canonical.hpp"
#include "mpgvae/decoder.hpp"
#include "mpgvae/errors.hpp"
#include "mpgvae/molgraph.hpp"
#include "mpgvae/vae.hpp"

namespace mpgvae {

using CanonicalFormSet = std::unordered_set<std::string>;

// Validity / uniqueness / novelty over a sample set. Uniqueness and novelty
// are computed on canonical forms of the heavy-atom graph, never on written
// SMILES, so slot relabelings of the same molecule collapse to one class.
//
// Novelty has two defensible counts and they disagree in general:
//   - sample-level: valid samples whose form is unseen, duplicates included
//     (this is the reported `novel` ratio, over the valid count);
//   - class-level: distinct unseen forms, which is what `num` intersects with
//     uniqueness (a sample counts toward `num` only at the first occurrence
//     of its form).
// Both raw counters are kept so reports can show either.
struct VunReport {
  double valid = 0.0;
  double unique = 0.0;
  double novel = 0.0;
  long long num = 0;
  bool no_valid = false;  // set when the sample list had no valid molecule

  std::size_t n_samples = 0;
  std::size_t n_valid = 0;
  std::size_t n_distinct = 0;       // distinct forms among valid samples
  std::size_t n_novel_samples = 0;  // valid samples with unseen form
  std::size_t n_novel_forms = 0;    // distinct unseen forms (== num)
};

inline VunReport vun(const std::vector<MolGraph>& samples, const CanonicalFormSet& training_forms) {
  if (samples.empty()) throw ContractViolation("vun: sample list is empty");
  VunReport r;
  r.n_samples = samples.size();
  CanonicalFormSet seen;
  for (const MolGraph& g : samples) {
    if (!g.is_valid()) continue;
    ++r.n_valid;
    const std::string form = canonical_form(g);
    const bool is_novel = training_forms.count(form) == 0;
    const bool first = seen.insert(form).second;
    if (is_novel) ++r.n_novel_samples;
    if (is_novel && first) ++r.n_novel_forms;
  }
  r.n_distinct = seen.size();
  r.valid = static_cast<double>(r.n_valid) / static_cast<double>(r.n_samples);
  if (r.n_valid == 0) {
    r.no_valid = true;
    return r;
  }
  r.unique = static_cast<double>(r.n_distinct) / static_cast<double>(r.n_valid);
  r.novel = static_cast<double>(r.n_novel_samples) / static_cast<double>(r.n_valid);
  r.num = static_cast<long long>(r.n_novel_forms);
  return r;
}

// Canonical forms of a reference corpus, deduplicated.
inline CanonicalFormSet canonical_set(const std::vector<MolGraph>& mols) {
  CanonicalFormSet forms;
  for (const MolGraph& g : mols) forms.insert(canonical_form(g));
  return forms;
}

namespace detail {

inline void csv_row(std::string& out, const char* metric, double value, long long num,
                    long long den) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%s,%.6f,%lld,%lld\n", metric, value, num, den);
  out += buf;
}

}  // namespace detail

// Report layout: metric, value, count_numerator, count_denominator.
inline std::string render_vun_csv(const VunReport& r) {
  std::string out = "metric,value,count_numerator,count_denominator\n";
  const auto samples = static_cast<long long>(r.n_samples);
  const auto valid = static_cast<long long>(r.n_valid);
  detail::csv_row(out, "valid", r.valid, valid, samples);
  detail::csv_row(out, "unique", r.unique, static_cast<long long>(r.n_distinct), valid);
  detail::csv_row(out, "novel", r.novel, static_cast<long long>(r.n_novel_samples), valid);
  detail::csv_row(out, "num", static_cast<double>(r.num), r.num, samples);
  return out;
}

// Per-molecule means of the discrete structure counts: atoms by type, bonds
// by order, independent rings. Invalid molecules still have well-defined
// counts, so every sample contributes.
struct DiscreteStats {
  bool ok = false;  // false when the sample list was empty
  std::size_t n = 0;
  std::array<double, 4> atoms{};  // C, N, O, F
  std::array<double, 3> bonds{};  // single, double, triple
  double rings = 0.0;
};

inline DiscreteStats discrete_stats(const std::vector<MolGraph>& samples) {
  DiscreteStats s;
  if (samples.empty()) return s;
  s.ok = true;
  s.n = samples.size();
  for (const MolGraph& g : samples) {
    const std::array<int, 4> h = g.atom_histogram();
    for (std::size_t j = 0; j < 4; ++j) s.atoms[j] += h[j];
    for (int u = 0; u < kMaxAtoms; ++u)
      for (int v = u + 1; v < kMaxAtoms; ++v) {
        const Bond b = g.bond(u, v);
        if (b != Bond::None) s.bonds[static_cast<std::size_t>(b) - 1] += 1.0;
      }
    s.rings += g.ring_count();
  }
  const double inv = 1.0 / static_cast<double>(s.n);
  for (double& a : s.atoms) a *= inv;
  for (double& b : s.bonds) b *= inv;
  s.rings *= inv;
  return s;
}

// Stats layout for stacked-bar plotting: category, mean.
inline std::string render_stats_csv(const DiscreteStats& s) {
  if (!s.ok) throw ContractViolation("render_stats_csv: no samples");
  static const char* kAtomRows[4] = {"atom_C", "atom_N", "atom_O", "atom_F"};
  static const char* kBondRows[3] = {"bond_single", "bond_double", "bond_triple"};
  std::string out = "category,mean\n";
  char buf[64];
  for (std::size_t j = 0; j < 4; ++j) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f\n", kAtomRows[j], s.atoms[j]);
    out += buf;
  }
  for (std::size_t j = 0; j < 3; ++j) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f\n", kBondRows[j], s.bonds[j]);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "rings,%.6f\n", s.rings);
  out += buf;
  return out;
}

struct ConditionalReport {
  double validity = 0.0;
  double accuracy = 0.0;  // valid AND atom histogram equals the label
  std::size_t n = 0;
};

// Conditional generation check: for each label draw z from the prior, decode
// with argmax realization, and ask whether the result is valid and matches
// the requested atom histogram. Requires a conditional decoder.
template <typename S>
ConditionalReport conditional_accuracy(ParamStore<S>& store, const DecoderConfig& dec,
                                       const std::vector<std::array<int, 4>>& labels,
                                       int n_per_label, std::uint64_t seed) {
  if (!dec.conditional)
    throw ContractViolation("conditional_accuracy: decoder is not conditional");
  if (labels.empty()) throw ContractViolation("conditional_accuracy: no labels");
  if (n_per_label <= 0) throw ContractViolation("conditional_accuracy: n_per_label must be positive");

  const int L = static_cast<int>(labels.size());
  const int total = L * n_per_label;
  Tensor<S> y = Tensor<S>::zeros({total, dec.label_dim});
  for (int i = 0; i < L; ++i)
    for (int k = 0; k < n_per_label; ++k)
      for (int j = 0; j < 4; ++j)
        y.at_mut({i * n_per_label + k, j}) =
            static_cast<S>(labels[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);

  std::vector<Realized> draws = sample_prior(store, dec, total, seed, RealizeMode::Argmax, y);
  ConditionalReport r;
  r.n = static_cast<std::size_t>(total);
  for (int i = 0; i < total; ++i) {
    const MolGraph& g = draws[static_cast<std::size_t>(i)].graph;
    if (!g.is_valid()) continue;
    r.validity += 1.0;
    if (g.atom_histogram() == labels[static_cast<std::size_t>(i / n_per_label)]) r.accuracy += 1.0;
  }
  r.validity /= static_cast<double>(total);
  r.accuracy /= static_cast<double>(total);
  return r;
}

inline std::string render_conditional_csv(const ConditionalReport& r) {
  std::string out = "metric,value,count_numerator,count_denominator\n";
  const auto total = static_cast<long long>(r.n);
  detail::csv_row(out, "validity", r.validity,
                  static_cast<long long>(r.validity * static_cast<double>(r.n) + 0.5), total);
  detail::csv_row(out, "accuracy", r.accuracy,
                  static_cast<long long>(r.accuracy * static_cast<double>(r.n) + 0.5), total);
  return out;
}

}  // namespace mpgvae
