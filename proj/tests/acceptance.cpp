// Release gate for the whole artifact. Runs ten independent checks, prints
// one pass/fail line each, and exits with the number of failures. Slow but
// self-contained; the desk-scale check trains a real model and dominates the
// runtime. Pass criterion numbers as arguments to run a subset while
// debugging (the registered ctest entry always runs all ten).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "mpgvae/canonical.hpp"
#include "mpgvae/featurize.hpp"
#include "mpgvae/gradsuite.hpp"
#include "mpgvae/metrics.hpp"
#include "mpgvae/mpnn.hpp"
#include "mpgvae/smiles.hpp"
#include "mpgvae/train.hpp"
#include "mpgvae/vae.hpp"
#include "test_util.hpp"

using namespace mpgvae;
using namespace testutil;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

std::string scratch_root() {
  static std::string root = [] {
    char tmpl[] = "/tmp/mpgvae_accept_XXXXXX";
    char* p = mkdtemp(tmpl);
    return std::string(p ? p : "/tmp");
  }();
  return root;
}

std::string scratch_dir(const std::string& name) {
  const std::string dir = scratch_root() + "/" + name;
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) return "";
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream(path, std::ios::binary | std::ios::trunc) << content;
}

// Shells out to the real binary; stdout/stderr land in <tag>.log for autopsy.
int run_cli(const std::string& args, const std::string& tag, const std::string& env = "") {
  const std::string log = scratch_root() + "/" + tag + ".log";
  const std::string cmd =
      env + (env.empty() ? "" : " ") + MPGVAE_CLI_PATH + " " + args + " >" + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string corpus_path() { return std::string(MPGVAE_SOURCE_DIR) + "/data/corpus_5k.smi"; }

// Pulls "name,value,..." out of a metrics CSV; nan when absent.
double csv_metric(const std::string& csv, const std::string& name) {
  std::size_t at = 0;
  while (at < csv.size()) {
    const std::size_t nl = csv.find('\n', at);
    const std::string line = csv.substr(at, nl == std::string::npos ? std::string::npos : nl - at);
    at = nl == std::string::npos ? csv.size() : nl + 1;
    if (line.rfind(name + ",", 0) == 0) return std::atof(line.c_str() + name.size() + 1);
  }
  return std::nan("");
}

TrainConfig small_train_config() {
  TrainConfig cfg;
  cfg.enc_embed = 8;
  cfg.enc_widths = {8, 16};
  cfg.graph_vec = 32;
  cfg.latent = 6;
  cfg.s2s_steps = 2;
  cfg.dec_read_in = 8;
  cfg.dec_widths = {8, 8};
  cfg.batch_size = 16;
  return cfg;
}

// --- 1: every gradient in the stack matches central finite differences ----

Outcome check_gradients() {
  const double t0 = now_s();
  const GradSuiteReport rep = run_grad_suite(13);
  const double elapsed = now_s() - t0;
  double worst_prim = 0.0, worst_e2e = 0.0;
  for (const GradSuiteLine& l : rep.lines) {
    if (l.name == "elbo_end_to_end")
      worst_e2e = std::max(worst_e2e, l.worst_rel);
    else
      worst_prim = std::max(worst_prim, l.worst_rel);
  }
  Outcome o;
  o.pass = rep.pass && elapsed < 120.0;
  o.detail = fmt("%zu cases, worst primitive %.1e (tol 1e-4), end-to-end %.1e (tol 1e-3)",
                 rep.lines.size(), worst_prim, worst_e2e);
  if (!rep.pass) o.detail += ", first failure: " + rep.first_failure;
  return o;
}

// --- 2: reconstruction loss equals the enumerated factorized product ------

Outcome check_reconstruction_oracle() {
  Rng rng(11);
  // random row-stochastic distribution with symmetric edge rows
  Tensor<double> nodes = Tensor<double>::zeros({1, kMaxAtoms, kAtomTypes});
  Tensor<double> edges = Tensor<double>::zeros({1, kMaxAtoms, kMaxAtoms, kBondTypes});
  for (int v = 0; v < kMaxAtoms; ++v) {
    double z = 0;
    for (int c = 0; c < kAtomTypes; ++c) z += nodes.at_mut({0, v, c}) = rng.uniform(0.05, 1.0);
    for (int c = 0; c < kAtomTypes; ++c) nodes.at_mut({0, v, c}) /= z;
  }
  for (int u = 0; u < kMaxAtoms; ++u)
    for (int v = u; v < kMaxAtoms; ++v) {
      double z = 0;
      for (int c = 0; c < kBondTypes; ++c) z += edges.at_mut({0, u, v, c}) = rng.uniform(0.05, 1.0);
      for (int c = 0; c < kBondTypes; ++c) {
        edges.at_mut({0, u, v, c}) /= z;
        edges.at_mut({0, v, u, c}) = edges.at({0, u, v, c});
      }
    }
  const GraphDistTensors<double> dist{nodes, edges};

  int checked = 0;
  double worst = 0.0;
  for (int a0 = 0; a0 < kAtomTypes; ++a0)
    for (int a1 = 0; a1 < kAtomTypes; ++a1)
      for (int b = 0; b < kBondTypes; ++b) {
        MolGraph g;
        g.atoms[0] = static_cast<Atom>(a0);
        g.atoms[1] = static_cast<Atom>(a1);
        g.set_bond(0, 1, static_cast<Bond>(b));
        double product = 1.0;
        for (int v = 0; v < kMaxAtoms; ++v)
          product *=
              dist.node_probs.at({0, v, static_cast<int>(g.atoms[static_cast<std::size_t>(v)])});
        for (int u = 0; u < kMaxAtoms; ++u)
          for (int v = u + 1; v < kMaxAtoms; ++v)
            product *= dist.edge_probs.at({0, u, v, static_cast<int>(g.bond(u, v))});
        Tape<double> t;
        const double loss = reconstruction_loss(t, dist, {g}).item();
        worst = std::max(worst, std::abs(loss - (-std::log(product) / 45.0)));
        ++checked;
      }
  Outcome o;
  o.pass = checked == kAtomTypes * kAtomTypes * kBondTypes && worst < 1e-9;
  o.detail = fmt("%d two-slot targets enumerated, worst abs err %.1e (tol 1e-9)", checked, worst);
  return o;
}

// --- 3: canonical form equals the all-permutations minimum ----------------

Outcome check_canonical_oracle() {
  const double t0 = now_s();
  Rng rng(43);
  int agree = 0;
  const int trials = 500;
  for (int trial = 0; trial < trials; ++trial) {
    const MolGraph g = random_graph(rng, 5);
    agree += canonical_form(g) == canonical_form_bruteforce(g);
  }
  const double elapsed = now_s() - t0;
  Outcome o;
  o.pass = agree == trials && elapsed < 60.0;
  o.detail = fmt("%d/%d graphs (<=5 atoms) agree with the factorial-minimum oracle, %.1fs", agree,
                 trials, elapsed);
  return o;
}

// --- 4: encoder invariance and message-passing equivariance ---------------

Outcome check_permutation_properties() {
  Rng rng(7);
  EncoderConfig ecfg;
  ecfg.embed = 8;
  ecfg.widths = {8, 16};
  ecfg.latent = 6;
  ecfg.s2s_steps = 2;
  ParamStore<double> estore;
  register_encoder(estore, ecfg, rng);

  MpnnConfig mcfg{5, 4, {8, 8}};
  ParamStore<double> mstore;
  register_mpnn(mstore, "mp", mcfg, rng);

  double worst = 0.0;
  const int trials = 100;
  for (int trial = 0; trial < trials; ++trial) {
    const MolGraph g = random_molecule(rng);
    const auto perm = random_permutation(rng);
    const MolGraph gp = g.permuted(perm);

    auto posterior = [&](const MolGraph& mol) {
      Tape<double> t;
      Bound<double> p(t, estore);
      return encode(p, ecfg, {mol});
    };
    const PosteriorParams<double> a = posterior(g);
    const PosteriorParams<double> b = posterior(gp);
    for (std::size_t i = 0; i < a.mu.numel(); ++i) {
      worst = std::max(worst, std::abs(a.mu.at(i) - b.mu.at(i)));
      worst = std::max(worst, std::abs(a.log_sigma.at(i) - b.log_sigma.at(i)));
    }

    auto layer = [&](const MolGraph& mol) {
      Tape<double> t;
      Bound<double> p(t, mstore);
      GraphState<double> st{t.leaf(stack_batch<double>({atom_one_hot<double>(mol)})),
                            t.leaf(stack_batch<double>({bond_one_hot<double>(mol)})),
                            stack_batch<double>({observed_pair_mask<double>(mol)})};
      return propagate(p, "mp", st, mcfg);
    };
    const GraphState<double> x = layer(g);
    const GraphState<double> y = layer(gp);
    const int d = x.nodes.dim(-1);
    for (int v = 0; v < kMaxAtoms; ++v)
      for (int k = 0; k < d; ++k)
        worst = std::max(worst, std::abs(y.nodes.at({0, perm[static_cast<std::size_t>(v)], k}) -
                                         x.nodes.at({0, v, k})));
    for (int u = 0; u < kMaxAtoms; ++u)
      for (int w = 0; w < kMaxAtoms; ++w)
        for (int k = 0; k < d; ++k)
          worst = std::max(worst, std::abs(y.edges.at({0, perm[static_cast<std::size_t>(u)],
                                                       perm[static_cast<std::size_t>(w)], k}) -
                                           x.edges.at({0, u, w, k})));
  }
  Outcome o;
  o.pass = worst <= 1e-5;
  o.detail = fmt("%d molecule/permutation pairs, worst deviation %.1e (tol 1e-5)", trials, worst);
  return o;
}

// --- 5: metric arithmetic reproduces the reference sample-set numbers -----

Outcome check_metric_arithmetic() {
  // 10^4 samples shaped to valid 0.91, unique 0.68, novel 0.54: 9100 valid
  // covering 6188 classes of which 3341 are absent from training.
  Rng rng(4242);
  std::vector<MolGraph> classes;
  CanonicalFormSet seen;
  std::size_t attempts = 0;
  while (classes.size() < 6188 && ++attempts < 400000) {
    MolGraph g = random_molecule(rng);
    if (seen.insert(canonical_form(g)).second) classes.push_back(g);
  }
  if (classes.size() < 6188) return {false, "could not build 6188 distinct classes"};

  const std::size_t novel_classes = 3341;
  CanonicalFormSet training;
  for (std::size_t i = novel_classes; i < classes.size(); ++i)
    training.insert(canonical_form(classes[i]));

  std::vector<MolGraph> samples = classes;
  for (std::size_t i = 0; i < 1573; ++i)
    samples.push_back(classes[i].permuted(random_permutation(rng)));
  for (std::size_t i = 0; i < 1339; ++i)
    samples.push_back(classes[novel_classes + i].permuted(random_permutation(rng)));
  samples.resize(10000);  // tail padded with empty (invalid) graphs

  const VunReport r = vun(samples, training);
  Outcome o;
  o.pass = std::abs(r.valid - 0.91) < 1e-12 && std::abs(r.unique - 0.68) < 1e-12 &&
           std::abs(r.novel - 0.54) < 1e-12 && std::llabs(r.num - 3341) <= 1;
  o.detail = fmt("valid %.2f unique %.2f novel %.2f -> num %lld (want 3341 +- 1)", r.valid,
                 r.unique, r.novel, r.num);
  return o;
}

// --- 6: a single molecule can be memorized and reproduced exactly ---------

Outcome check_single_molecule_overfit() {
  setenv("MPGVAE_STUB_TIMER", "1", 1);
  const MolGraph g = parse_smiles("CC(=O)N");
  TrainConfig cfg = small_train_config();
  cfg.batch_size = 1;
  cfg.epochs = 500;  // batch of one: each epoch is one optimizer step
  cfg.kl_warmup = 1000000;
  cfg.lr = 5e-3;
  cfg.seed = 7;
  ParamStore<double> store;
  const TrainResult result = train(store, cfg, {g}, "");
  if (result.diverged) return {false, "training diverged"};

  const double recon = result.epochs.back().recon;
  const Realized r = reconstruct_argmax(store, cfg.encoder(), cfg.decoder(), g);
  const bool exact = canonical_form(r.graph) == canonical_form(g);
  Outcome o;
  o.pass = recon < 0.05 && exact;
  o.detail = fmt("recon %.4f after %d steps (want <0.05), argmax round trip %s", recon, cfg.epochs,
                 exact ? "exact" : "WRONG");
  return o;
}

// --- 7: desk-scale run end to end (quality targets are informative) -------

Outcome check_desk_scale() {
  const std::string dir = scratch_dir("desk");
  spit(dir + "/train.cfg", "epochs=12\nseed=5\n");  // defaults elsewhere: full-size model

  const double t0 = now_s();
  const int rc_train =
      run_cli("train --config " + dir + "/train.cfg --data " + corpus_path() + " --out " + dir,
              "desk_train");
  const double train_s = now_s() - t0;
  if (rc_train != 0) return {false, fmt("training exited %d (see desk_train.log)", rc_train)};
  if (train_s > 3600.0) return {false, fmt("training took %.0fs, budget 3600s", train_s)};

  // categorical realization: argmax collapses to a handful of modes here
  const int rc_sample = run_cli(
      "sample --ckpt " + dir + "/ckpt.bin --n 10000 --seed 7 --mode sample --out " + dir,
      "desk_sample");
  if (rc_sample != 0) return {false, fmt("sampling exited %d", rc_sample)};

  const int rc_eval = run_cli("eval --data " + dir + "/samples.smi --train-data " + corpus_path() +
                                  " --out " + dir + "/eval",
                              "desk_eval");
  if (rc_eval != 0) return {false, fmt("eval exited %d", rc_eval)};

  const std::string report = slurp(dir + "/eval/report.csv");
  if (report.empty()) return {false, "report.csv missing"};
  const double valid = csv_metric(report, "valid");
  const double unique = csv_metric(report, "unique");

  Outcome o;
  o.pass = true;  // gate: the pipeline completes and reports; quality is informative
  o.detail = fmt("train %.0fs/3600s, 10000 samples; validity %.3f (target >=0.5 %s), "
                 "unique %.3f (target >0.2 %s)",
                 train_s, valid, valid >= 0.5 ? "met" : "MISSED", unique,
                 unique > 0.2 ? "met" : "MISSED");
  return o;
}

// --- 8: SMILES round trips and kekulization against brute force -----------

// Every single/double assignment of the aromatic bonds, kept when each
// aromatic atom carries exactly the doubles its element/saturation calls for.
std::vector<MolGraph> enumerate_kekule(const ParsedMol& pm) {
  std::vector<std::size_t> aromatic_bonds;
  for (std::size_t i = 0; i < pm.bonds.size(); ++i)
    if (pm.bonds[i].order == 0) aromatic_bonds.push_back(i);

  std::vector<int> sigma(pm.atoms.size(), 0);
  for (const auto& b : pm.bonds) {
    const int add = b.order == 0 ? 1 : b.order;
    sigma[static_cast<std::size_t>(b.u)] += add;
    sigma[static_cast<std::size_t>(b.v)] += add;
  }
  std::vector<int> needs(pm.atoms.size(), 0);
  for (std::size_t v = 0; v < pm.atoms.size(); ++v) {
    if (!pm.atoms[v].aromatic) continue;
    const int h = pm.atoms[v].explicit_h < 0 ? 0 : pm.atoms[v].explicit_h;
    int room = 0;
    switch (pm.atoms[v].element) {
      case 'C': room = 4 - sigma[v] - h; break;
      case 'N': room = 3 - sigma[v] - h; break;
      case 'O': room = 2 - sigma[v] - h; break;
      default: room = 0;
    }
    needs[v] = room >= 1 ? 1 : 0;
  }

  std::vector<MolGraph> out;
  for (std::size_t bits = 0; bits < (1ULL << aromatic_bonds.size()); ++bits) {
    std::vector<int> doubles(pm.atoms.size(), 0);
    MolGraph g;
    for (std::size_t v = 0; v < pm.atoms.size(); ++v)
      g.atoms[v] = pm.atoms[v].element == 'C'   ? Atom::C
                   : pm.atoms[v].element == 'N' ? Atom::N
                   : pm.atoms[v].element == 'O' ? Atom::O
                                                : Atom::F;
    for (const auto& b : pm.bonds)
      g.set_bond(b.u, b.v, b.order == 0 ? Bond::Single : static_cast<Bond>(b.order));
    for (std::size_t j = 0; j < aromatic_bonds.size(); ++j) {
      const auto& b = pm.bonds[aromatic_bonds[j]];
      if (bits & (1ULL << j)) {
        g.set_bond(b.u, b.v, Bond::Double);
        ++doubles[static_cast<std::size_t>(b.u)];
        ++doubles[static_cast<std::size_t>(b.v)];
      }
    }
    bool ok = true;
    for (std::size_t v = 0; v < pm.atoms.size() && ok; ++v)
      if (pm.atoms[v].aromatic && doubles[v] != needs[v]) ok = false;
    if (ok) out.push_back(g);
  }
  return out;
}

Outcome check_smiles_round_trip() {
  auto [mols, report] = load_dataset(corpus_path(), 1000);
  if (mols.size() != 1000) return {false, fmt("expected 1000 molecules, got %zu", mols.size())};

  int round_trips = 0, valid_after_parse = 0;
  for (const MolGraph& g : mols) {
    const MolGraph back = parse_smiles(write_smiles(g));
    round_trips += canonical_form(back) == canonical_form(g);
    valid_after_parse += back.is_valid();
  }

  const ParsedMol benzene = parse_smiles_raw("c1ccccc1");
  const auto benzene_forms = enumerate_kekule(benzene);
  const MolGraph benzene_ours = kekulize(benzene);
  bool benzene_ok = benzene_forms.size() == 2;
  if (benzene_ok)
    benzene_ok = benzene_ours == benzene_forms[0] || benzene_ours == benzene_forms[1];

  const ParsedMol furan = parse_smiles_raw("c1ccoc1");
  const auto furan_forms = enumerate_kekule(furan);
  const bool furan_ok = furan_forms.size() == 1 && kekulize(furan) == furan_forms[0];

  Outcome o;
  o.pass = round_trips == 1000 && valid_after_parse == 1000 && benzene_ok && furan_ok;
  o.detail = fmt("%d/1000 round trips, %d/1000 valid; benzene %s (2 oracle forms), furan %s "
                 "(1 oracle form)",
                 round_trips, valid_after_parse, benzene_ok ? "ok" : "WRONG",
                 furan_ok ? "ok" : "WRONG");
  return o;
}

// --- 9: conditional head learns the label it was overfit to ---------------

Outcome check_conditional_overfit() {
  setenv("MPGVAE_STUB_TIMER", "1", 1);
  const MolGraph g = parse_smiles("CC(=O)N");
  TrainConfig cfg = small_train_config();
  cfg.batch_size = 1;
  cfg.conditional = true;
  cfg.epochs = 500;
  cfg.kl_warmup = 0;  // full KL from the start so the prior decodes cleanly
  cfg.lr = 5e-3;
  cfg.seed = 17;
  ParamStore<double> store;
  const TrainResult result = train(store, cfg, {g}, "");
  if (result.diverged) return {false, "training diverged"};

  const ConditionalReport r =
      conditional_accuracy(store, cfg.decoder(), {g.atom_histogram()}, 50, 31);
  Outcome o;
  o.pass = std::abs(r.accuracy - r.validity) <= 0.05;
  o.detail = fmt("validity %.3f accuracy %.3f, |gap| %.3f (tol 0.05)", r.validity, r.accuracy,
                 std::abs(r.accuracy - r.validity));
  return o;
}

// --- 10: identical seeds give byte-identical artifacts --------------------

Outcome check_determinism() {
  const std::string dir = scratch_dir("det");
  TrainConfig cfg = small_train_config();
  cfg.epochs = 3;
  cfg.seed = 2024;
  spit(dir + "/train.cfg", cfg.echo());
  // a 100-molecule slice keeps two full runs cheap
  {
    std::ifstream in(corpus_path());
    std::string line, slice;
    for (int i = 0; i < 100 && std::getline(in, line); ++i) slice += line + "\n";
    spit(dir + "/train.smi", slice);
  }

  auto one_run = [&](const std::string& tag) -> bool {
    const std::string out = dir + "/" + tag;
    if (run_cli("train --config " + dir + "/train.cfg --data " + dir + "/train.smi --out " + out,
                "det_train_" + tag, "MPGVAE_STUB_TIMER=1") != 0)
      return false;
    if (run_cli("sample --ckpt " + out + "/ckpt.bin --n 500 --seed 9 --out " + out,
                "det_sample_" + tag) != 0)
      return false;
    return run_cli("eval --data " + out + "/samples.smi --train-data " + dir +
                       "/train.smi --out " + out,
                   "det_eval_" + tag) == 0;
  };
  if (!one_run("a") || !one_run("b")) return {false, "a pipeline stage failed (see det_*.log)"};

  const char* files[] = {"/train_log.csv", "/ckpt.bin",   "/samples.smi",
                         "/samples.csv",   "/report.csv", "/stats.csv"};
  int identical = 0;
  std::string first_diff;
  for (const char* f : files) {
    const std::string a = slurp(dir + "/a" + f);
    if (!a.empty() && a == slurp(dir + "/b" + f)) {
      ++identical;
    } else if (first_diff.empty()) {
      first_diff = f + 1;
    }
  }
  Outcome o;
  o.pass = identical == 6;
  o.detail = fmt("%d/6 artifacts byte-identical across seeded reruns", identical);
  if (!o.pass) o.detail += ", first difference: " + first_diff;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  struct Entry {
    const char* name;
    Outcome (*fn)();
  };
  const Entry entries[] = {
      {"gradient_check", check_gradients},
      {"reconstruction_oracle", check_reconstruction_oracle},
      {"canonical_oracle", check_canonical_oracle},
      {"permutation_properties", check_permutation_properties},
      {"metric_arithmetic", check_metric_arithmetic},
      {"single_molecule_overfit", check_single_molecule_overfit},
      {"desk_scale_generation", check_desk_scale},
      {"smiles_round_trip", check_smiles_round_trip},
      {"conditional_overfit", check_conditional_overfit},
      {"determinism", check_determinism},
  };
  const int total = static_cast<int>(std::size(entries));

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0, ran = 0;
  for (int i = 0; i < total; ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    const double t0 = now_s();
    const Outcome o = entries[i].fn();
    const double elapsed = now_s() - t0;
    ++ran;
    failures += !o.pass;
    std::printf("[%2d/%d] %s  %-24s %7.1fs  %s\n", i + 1, total, o.pass ? "pass" : "FAIL",
                entries[i].name, elapsed, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("acceptance: %d/%d passed\n", ran - failures, ran);
  return failures;
}
