// Command-line front end: train, sample, eval, gradcheck, inspect.
//
// Exit codes are stable API:
//   0 ok, 1 check failure, 2 configuration error, 3 data error,
//   4 checkpoint error, 5 empty input.
//
// MPGVAE_PRECISION={f32,f64} selects the compute scalar (default f64).
// Every subcommand is deterministic given its seed; execution is
// single-threaded (--threads is accepted for interface stability).

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpgvae/canonical.hpp"
#include "mpgvae/config.hpp"
#include "mpgvae/gradsuite.hpp"
#include "mpgvae/metrics.hpp"
#include "mpgvae/smiles.hpp"
#include "mpgvae/svg.hpp"
#include "mpgvae/train.hpp"
#include "mpgvae/vae.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCheckFail = 1;
constexpr int kConfigErr = 2;
constexpr int kDataErr = 3;
constexpr int kCkptErr = 4;
constexpr int kEmptyInput = 5;

enum class Precision { F32, F64 };

Precision precision_from_env() {
  const char* v = std::getenv("MPGVAE_PRECISION");
  if (v == nullptr || std::string(v) == "f64") return Precision::F64;
  if (std::string(v) == "f32") return Precision::F32;
  throw mpgvae::ConfigError(std::string("MPGVAE_PRECISION must be f32 or f64, got '") + v + "'");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw mpgvae::IoError("cannot write: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw mpgvae::IoError("short write: " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw mpgvae::IoError("cannot create output directory: " + dir + " (" + ec.message() + ")");
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out;
  int threads = 1;
};

template <typename S>
int cmd_train(const TrainArgs& a) {
  mpgvae::TrainConfig cfg = mpgvae::load_train_config(a.config);

  std::vector<mpgvae::MolGraph> mols;
  mpgvae::IngestReport report;
  try {
    std::tie(mols, report) = mpgvae::load_dataset(a.data);
  } catch (const mpgvae::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataErr;
  }
  std::cout << "dataset " << a.data << ": " << report.summary() << "\n";
  if (mols.empty()) {
    std::cerr << "error: no usable molecules in " << a.data << "\n";
    return kDataErr;
  }

  ensure_dir(a.out);
  const std::string ckpt = a.out + "/ckpt.bin";
  mpgvae::ParamStore<S> store;
  const std::function<void(const mpgvae::EpochStats&, mpgvae::ParamStore<S>&)> per_epoch =
      [&](const mpgvae::EpochStats& e, mpgvae::ParamStore<S>& st) {
        char name[40];
        std::snprintf(name, sizeof(name), "/ckpt_epoch_%03d.bin", e.epoch);
        mpgvae::save_checkpoint(a.out + name, st, cfg.echo());
      };
  const mpgvae::TrainResult result = mpgvae::train(store, cfg, mols, ckpt, per_epoch);

  write_file(a.out + "/train_log.csv", mpgvae::render_log(result.epochs));
  if (!result.epochs.empty()) {
    mpgvae::Series total{"total", {}}, recon{"recon", {}}, kl{"kl", {}};
    for (const auto& e : result.epochs) {
      total.values.push_back(e.total);
      recon.values.push_back(e.recon);
      kl.values.push_back(e.kl);
    }
    write_file(a.out + "/loss_curve.svg",
               mpgvae::svg_line_chart("training loss", "epoch", {total, recon, kl}));
  }

  for (const auto& e : result.epochs)
    std::printf("epoch %d: total %.6f recon %.6f kl %.6f beta %.3f\n", e.epoch, e.total, e.recon,
                e.kl, e.beta);
  if (result.diverged) {
    std::cerr << "training diverged at epoch " << result.diverged_epoch << "; "
              << result.epochs.size() << " finite epoch(s) completed\n";
    if (result.epochs.empty()) {
      std::cerr << "error: no finite epoch, no checkpoint written\n";
      return kCheckFail;
    }
    std::cerr << "last good checkpoint: " << ckpt << "\n";
  } else {
    std::cout << "checkpoint: " << ckpt << "\n";
  }
  return kOk;
}

// ---- sample ----------------------------------------------------------------

struct SampleArgs {
  std::string ckpt, out, mode = "argmax", label;
  long long n = 10000;
  std::uint64_t seed = 1;
  int threads = 1;
};

std::array<int, 4> parse_label(const std::string& text) {
  std::array<int, 4> h{};
  std::size_t at = 0;
  for (int j = 0; j < 4; ++j) {
    const std::size_t comma = text.find(',', at);
    const bool last = j == 3;
    if (last != (comma == std::string::npos))
      throw mpgvae::ConfigError("--label needs four comma-separated counts (C,N,O,F)");
    h[static_cast<std::size_t>(j)] = mpgvae::detail::config_int(
        "label", text.substr(at, last ? std::string::npos : comma - at));
    if (h[static_cast<std::size_t>(j)] < 0)
      throw mpgvae::ConfigError("--label counts must be non-negative");
    at = comma + 1;
  }
  if (h[0] + h[1] + h[2] + h[3] > mpgvae::kMaxAtoms)
    throw mpgvae::ConfigError("--label histogram exceeds " + std::to_string(mpgvae::kMaxAtoms) +
                              " atoms");
  return h;
}

template <typename S>
int cmd_sample(const SampleArgs& a) {
  mpgvae::ParamStore<S> store;
  mpgvae::TrainConfig cfg;
  try {
    const std::string trailer = mpgvae::load_checkpoint(a.ckpt, store);
    cfg = mpgvae::parse_train_config(trailer);
  } catch (const mpgvae::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCkptErr;
  } catch (const mpgvae::ConfigError& e) {
    std::cerr << "error: bad checkpoint trailer in " << a.ckpt << ": " << e.what() << "\n";
    return kCkptErr;
  }
  const mpgvae::DecoderConfig dec = cfg.decoder();
  const mpgvae::RealizeMode mode =
      a.mode == "sample" ? mpgvae::RealizeMode::Sample : mpgvae::RealizeMode::Argmax;

  mpgvae::Tensor<S> labels;
  if (dec.conditional) {
    if (a.label.empty())
      throw mpgvae::ConfigError("conditional checkpoint: pass --label C,N,O,F counts");
    const std::array<int, 4> h = parse_label(a.label);
    labels = mpgvae::Tensor<S>::zeros({static_cast<int>(a.n), dec.label_dim});
    for (int i = 0; i < a.n; ++i)
      for (int j = 0; j < 4; ++j)
        labels.at_mut({i, j}) = static_cast<S>(h[static_cast<std::size_t>(j)]);
  } else if (!a.label.empty()) {
    throw mpgvae::ConfigError("--label given but the checkpoint is not conditional");
  }

  ensure_dir(a.out);
  std::string smi;
  std::string csv = "index,valid,connected,canonical_hash,repaired_edges\n";
  std::size_t n_valid = 0;
  if (a.n > 0) {
    std::vector<mpgvae::Realized> draws =
        mpgvae::sample_prior(store, dec, static_cast<int>(a.n), a.seed, mode, labels);
    char row[96];
    for (std::size_t i = 0; i < draws.size(); ++i) {
      const mpgvae::MolGraph& g = draws[i].graph;
      smi += mpgvae::write_smiles_any(g);
      smi += "\n";
      const bool valid = g.is_valid();
      n_valid += valid;
      std::snprintf(row, sizeof(row), "%zu,%d,%d,%016llx,%d\n", i, valid ? 1 : 0,
                    g.is_connected() ? 1 : 0,
                    static_cast<unsigned long long>(mpgvae::canonical_hash(g)),
                    draws[i].repaired_edges);
      csv += row;
    }
  }
  write_file(a.out + "/samples.smi", smi);
  write_file(a.out + "/samples.csv", csv);
  std::printf("sampled %lld molecule(s), %zu valid (%.3f)\n", a.n, n_valid,
              a.n > 0 ? static_cast<double>(n_valid) / static_cast<double>(a.n) : 0.0);
  return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string samples, train_data, out;
  int threads = 1;
};

// Sample files are read line-for-line: every line is one sample, and a line
// that cannot be parsed (or is blank, as written for an empty graph) counts
// as an invalid sample rather than disappearing from the denominator.
struct SampleFile {
  std::vector<mpgvae::MolGraph> graphs;  // placeholder (invalid) for bad lines
  std::size_t lines = 0;
  std::size_t parsed = 0;
};

SampleFile load_sample_file(const std::string& path) {
  const std::string text = mpgvae::read_text_file(path);
  SampleFile f;
  std::size_t at = 0;
  while (at < text.size()) {
    const std::size_t nl = text.find('\n', at);
    std::string line = text.substr(at, nl == std::string::npos ? std::string::npos : nl - at);
    at = nl == std::string::npos ? text.size() : nl + 1;
    ++f.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t sp = line.find_first_of(" \t");
    if (sp != std::string::npos) line.resize(sp);
    try {
      if (line.empty()) throw mpgvae::ParseError("blank line", 0);
      f.graphs.push_back(mpgvae::parse_smiles(line));
      ++f.parsed;
    } catch (const mpgvae::Error&) {
      f.graphs.push_back(mpgvae::MolGraph{});
    }
  }
  return f;
}

int cmd_eval(const EvalArgs& a) {
  SampleFile samples;
  try {
    samples = load_sample_file(a.samples);
  } catch (const mpgvae::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataErr;
  }
  if (samples.lines == 0) {
    std::cerr << "error: empty samples file: " << a.samples << "\n";
    return kEmptyInput;
  }
  if (samples.parsed == 0) {
    std::cerr << "error: no sample line parsed in " << a.samples << "\n";
    return kEmptyInput;
  }

  std::vector<mpgvae::MolGraph> train_mols;
  mpgvae::IngestReport train_report;
  try {
    std::tie(train_mols, train_report) = mpgvae::load_dataset(a.train_data);
  } catch (const mpgvae::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataErr;
  }
  if (train_mols.empty()) {
    std::cerr << "error: no usable molecules in training file " << a.train_data << "\n";
    return kDataErr;
  }

  const mpgvae::VunReport vun = mpgvae::vun(samples.graphs, mpgvae::canonical_set(train_mols));

  // Structure statistics describe the molecules that actually materialized.
  std::vector<mpgvae::MolGraph> parsed_ok;
  for (const mpgvae::MolGraph& g : samples.graphs)
    if (g.atom_count() > 0) parsed_ok.push_back(g);
  const mpgvae::DiscreteStats stats = mpgvae::discrete_stats(parsed_ok);

  ensure_dir(a.out);
  std::string report = mpgvae::render_vun_csv(vun);
  {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "parsed,%.6f,%zu,%zu\n",
                  static_cast<double>(samples.parsed) / static_cast<double>(samples.lines),
                  samples.parsed, samples.lines);
    report += buf;
  }
  write_file(a.out + "/report.csv", report);
  write_file(a.out + "/stats.csv", mpgvae::render_stats_csv(stats));

  const std::vector<std::string> labels = {"atom_C", "atom_N", "atom_O",      "atom_F",
                                           "bond_single", "bond_double", "bond_triple", "rings"};
  std::vector<double> values(stats.atoms.begin(), stats.atoms.end());
  values.insert(values.end(), stats.bonds.begin(), stats.bonds.end());
  values.push_back(stats.rings);
  write_file(a.out + "/stats.svg",
             mpgvae::svg_bar_chart("mean structural counts per molecule", labels, values));

  std::printf("samples %zu (parsed %zu) valid %.4f unique %.4f novel %.4f num %lld\n",
              vun.n_samples, samples.parsed, vun.valid, vun.unique, vun.novel, vun.num);
  std::cout << "report: " << a.out << "/report.csv\n";
  return kOk;
}

// ---- gradcheck ---------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, bool inject_fault) {
  const mpgvae::GradSuiteReport rep = mpgvae::run_grad_suite(seed, inject_fault);
  for (const auto& line : rep.lines)
    std::printf("%-24s %s  worst_rel %.3e (tolerance %.0e)\n", line.name.c_str(),
                line.pass ? "ok  " : "FAIL", line.worst_rel, line.tolerance);
  if (!rep.pass) {
    std::cerr << "gradient check failed: " << rep.first_failure << "\n";
    return kCheckFail;
  }
  std::cout << "all gradient checks passed\n";
  return kOk;
}

// ---- inspect ---------------------------------------------------------------

int cmd_inspect(const std::string& data, std::size_t limit) {
  std::vector<mpgvae::MolGraph> mols;
  mpgvae::IngestReport report;
  try {
    std::tie(mols, report) = mpgvae::load_dataset(data, limit);
  } catch (const mpgvae::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataErr;
  }
  if (report.lines == 0) {
    std::cerr << "error: empty dataset: " << data << "\n";
    return kEmptyInput;
  }
  std::cout << data << ": " << report.summary() << "\n";
  for (const std::string& err : report.first_errors) std::cout << "  " << err << "\n";
  if (!mols.empty()) {
    std::array<std::size_t, mpgvae::kMaxAtoms + 1> sizes{};
    const mpgvae::DiscreteStats stats = mpgvae::discrete_stats(mols);
    std::size_t connected = 0;
    for (const auto& g : mols) {
      ++sizes[static_cast<std::size_t>(g.atom_count())];
      connected += g.is_connected();
    }
    std::cout << "size histogram (heavy atoms -> molecules):\n";
    for (int n = 1; n <= mpgvae::kMaxAtoms; ++n)
      std::printf("  %d: %zu\n", n, sizes[static_cast<std::size_t>(n)]);
    std::printf("mean counts: C %.3f N %.3f O %.3f F %.3f | single %.3f double %.3f triple %.3f "
                "| rings %.3f\n",
                stats.atoms[0], stats.atoms[1], stats.atoms[2], stats.atoms[3], stats.bonds[0],
                stats.bonds[1], stats.bonds[2], stats.rings);
    std::printf("connected: %zu/%zu\n", connected, mols.size());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"message-passing graph VAE over small organic molecules"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a model from a config and a SMILES file");
  train->add_option("--config", train_args.config, "key=value config file")->required();
  train->add_option("--data", train_args.data, "training SMILES file, one molecule per line")
      ->required();
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--threads", train_args.threads, "reserved; execution is single-threaded")
      ->check(CLI::PositiveNumber);

  SampleArgs sample_args;
  CLI::App* sample = app.add_subcommand("sample", "draw molecules from a trained checkpoint");
  sample->add_option("--ckpt", sample_args.ckpt, "checkpoint file")->required();
  sample->add_option("--n", sample_args.n, "number of samples")->check(CLI::NonNegativeNumber);
  sample->add_option("--seed", sample_args.seed, "sampling seed");
  sample->add_option("--mode", sample_args.mode, "realization mode")
      ->check(CLI::IsMember({"argmax", "sample"}));
  sample->add_option("--label", sample_args.label,
                     "C,N,O,F atom counts (conditional checkpoints only)");
  sample->add_option("--out", sample_args.out, "output directory")->required();
  sample->add_option("--threads", sample_args.threads, "reserved; execution is single-threaded")
      ->check(CLI::PositiveNumber);

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "score a sample file against training data");
  eval->add_option("--data", eval_args.samples, "sample SMILES file, one line per sample")
      ->required();
  eval->add_option("--train-data", eval_args.train_data, "training SMILES file")->required();
  eval->add_option("--out", eval_args.out, "output directory")->required();
  eval->add_option("--threads", eval_args.threads, "reserved; execution is single-threaded")
      ->check(CLI::PositiveNumber);

  std::uint64_t grad_seed = 13;
  bool inject_fault = false;
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  grad->add_option("--seed", grad_seed, "probe seed");
  grad->add_flag("--inject-fault", inject_fault)->group("");  // negative control, hidden

  std::string inspect_data;
  std::uint64_t inspect_limit = 0;
  CLI::App* inspect = app.add_subcommand("inspect", "summarize a SMILES dataset");
  inspect->add_option("--data", inspect_data, "SMILES file")->required();
  inspect->add_option("--n", inspect_limit, "stop after this many parsed molecules (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigErr;
  }

  try {
    const Precision prec = precision_from_env();
    if (train->parsed())
      return prec == Precision::F32 ? cmd_train<float>(train_args) : cmd_train<double>(train_args);
    if (sample->parsed())
      return prec == Precision::F32 ? cmd_sample<float>(sample_args)
                                    : cmd_sample<double>(sample_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (grad->parsed()) return cmd_gradcheck(grad_seed, inject_fault);
    if (inspect->parsed()) return cmd_inspect(inspect_data, inspect_limit);
  } catch (const mpgvae::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigErr;
  } catch (const mpgvae::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCkptErr;
  } catch (const mpgvae::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataErr;
  } catch (const mpgvae::Error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kCheckFail;
  }
  return kConfigErr;  // unreachable: require_subcommand guarantees one branch
}
