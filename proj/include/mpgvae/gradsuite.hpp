#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mpgvae/featurize.hpp"
#include "mpgvae/gradcheck.hpp"
#include "mpgvae/mpnn.hpp"
#include "mpgvae/smiles.hpp"
#include "mpgvae/train.hpp"
#include "mpgvae/vae.hpp"

namespace mpgvae {

// Finite-difference verification of the whole gradient stack at 64-bit:
// every tape primitive in isolation, one full message-passing layer, and the
// training objective end to end. Primitives are held to 1e-4 relative error,
// the end-to-end objective to 1e-3.

struct GradSuiteLine {
  std::string name;
  double worst_rel = 0.0;
  double tolerance = 0.0;
  std::string worst_param;
  bool pass = true;
};

struct GradSuiteReport {
  bool pass = true;
  std::vector<GradSuiteLine> lines;
  std::string first_failure;
};

namespace detail {

inline void grad_suite_case(
    GradSuiteReport& rep, const std::string& name, double tol, std::uint64_t seed,
    const std::function<void(ParamStore<double>&, Rng&)>& setup,
    const std::function<Tensor<double>(Tape<double>&, Bound<double>&)>& loss,
    std::size_t max_coords = 0) {
  ParamStore<double> store;
  Rng rng(seed);
  setup(store, rng);
  GradCheckOptions<double> opt;
  opt.tolerance = tol;
  opt.max_coords_per_param = max_coords;
  const GradCheckReport<double> r = gradcheck<double>(store, loss, opt);
  GradSuiteLine line{name, static_cast<double>(r.worst_rel), tol, r.worst_param, r.pass};
  if (!r.pass && rep.first_failure.empty())
    rep.first_failure = name + " (parameter " + r.worst_param + ")";
  rep.pass = rep.pass && r.pass;
  rep.lines.push_back(std::move(line));
}

// Scalar probe that weights every output coordinate differently, so layout
// mistakes (transposes, wrong strides) cannot cancel out.
template <typename S>
Tensor<S> weighted_sum(Tape<S>& t, const Tensor<S>& x, Rng& rng) {
  Tensor<S> w = Tensor<S>::zeros(x.shape);
  S* p = w.mut_ptr();
  for (std::size_t i = 0; i < w.numel(); ++i) p[i] = static_cast<S>(rng.uniform(-1.0, 1.0));
  return t.sum_all(t.mul(x, t.leaf(w)));
}

// Identity forward with a deliberately doubled pull rule; exists so the
// negative-control path can show the checker catching a broken gradient.
template <typename S>
Tensor<S> broken_identity(Tape<S>& t, const Tensor<S>& x) {
  std::vector<S> vals(x.ptr(), x.ptr() + x.numel());
  return t.custom(x.shape, std::move(vals), {x.node},
                  [xn = x.node](Tape<S>& tp, const std::vector<S>& g) {
                    std::vector<S> twice(g);
                    for (S& v : twice) v *= S(2);
                    tp.accum(xn, twice.data(), twice.size());
                  });
}

}  // namespace detail

inline GradSuiteReport run_grad_suite(std::uint64_t seed, bool inject_fault = false) {
  using T = Tensor<double>;
  GradSuiteReport rep;

  auto scatter = [](ParamStore<double>& store, Rng& rng, const std::string& name,
                    const Shape& shape, double lo = -2.0, double hi = 2.0) {
    T v = T::zeros(shape);
    double* p = v.mut_ptr();
    for (std::size_t i = 0; i < v.numel(); ++i) p[i] = rng.uniform(lo, hi);
    store.add(name, v);
  };
  auto prim = [&](const std::string& name,
                  const std::function<void(ParamStore<double>&, Rng&)>& setup,
                  const std::function<Tensor<double>(Tape<double>&, Bound<double>&)>& loss) {
    detail::grad_suite_case(rep, "primitive " + name, 1e-4, seed, setup, loss);
  };
  auto pair_ab = [&](ParamStore<double>& s, Rng& rng) {
    scatter(s, rng, "a", {2, 3});
    scatter(s, rng, "b", {2, 3});
  };

  prim("add", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 1);
    return detail::weighted_sum(t, t.add(p("a"), p("b")), w);
  });
  prim("sub", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 2);
    return detail::weighted_sum(t, t.sub(p("a"), p("b")), w);
  });
  prim("mul", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 3);
    return detail::weighted_sum(t, t.mul(p("a"), p("b")), w);
  });
  prim("scale", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 4);
    return detail::weighted_sum(t, t.scale(p("a"), 1.7), w);
  });
  prim("add_scalar", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 5);
    return detail::weighted_sum(t, t.add_scalar(p("a"), 0.3), w);
  });
  prim(
      "add_bias",
      [&](ParamStore<double>& s, Rng& rng) {
        scatter(s, rng, "x", {4, 3});
        scatter(s, rng, "bias", {3});
      },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 6);
        return detail::weighted_sum(t, t.add_bias(p("x"), p("bias")), w);
      });
  prim("tanh", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 7);
    return detail::weighted_sum(t, t.tanh_(p("a")), w);
  });
  prim("sigmoid", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 8);
    return detail::weighted_sum(t, t.sigmoid_(p("a")), w);
  });
  prim("exp", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 9);
    return detail::weighted_sum(t, t.exp_(p("a")), w);
  });
  prim("log", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 10);
    // square + offset keeps the argument strictly positive at every probe
    return detail::weighted_sum(t, t.log_(t.add_scalar(t.mul(p("a"), p("a")), 0.5)), w);
  });
  prim(
      "clamp_min",
      [&](ParamStore<double>& s, Rng& rng) {
        // keep every coordinate a safe distance from the clamp kink so the
        // central difference never straddles it
        T v = T::zeros({3, 3});
        double* p = v.mut_ptr();
        for (std::size_t i = 0; i < v.numel(); ++i) {
          const double u = rng.uniform(-2.0, 2.0);
          p[i] = std::abs(u - 0.25) < 0.1 ? u + 0.25 : u;
        }
        s.add("a", v);
      },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 11);
        return detail::weighted_sum(t, t.clamp_min(p("a"), 0.25), w);
      });
  prim(
      "matmul",
      [&](ParamStore<double>& s, Rng& rng) {
        scatter(s, rng, "m1", {2, 3});
        scatter(s, rng, "m2", {3, 4});
      },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 12);
        return detail::weighted_sum(t, t.matmul(p("m1"), p("m2")), w);
      });
  prim(
      "bmm",
      [&](ParamStore<double>& s, Rng& rng) {
        scatter(s, rng, "p1", {2, 2, 3});
        scatter(s, rng, "p2", {2, 3, 2});
      },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 13);
        return detail::weighted_sum(t, t.bmm(p("p1"), p("p2")), w);
      });
  prim(
      "softmax_last",
      [&](ParamStore<double>& s, Rng& rng) { scatter(s, rng, "x", {2, 3, 3}); },
      [&](Tape<double>& t, Bound<double>& p) {
        T mask = T::zeros({2, 3, 3});
        for (int b = 0; b < 2; ++b)
          for (int r = 0; r < 3; ++r)
            for (int j = 0; j < 3; ++j)
              // row (b=1, r=2) stays fully masked to hit the zeroed-row path
              mask.at_mut({b, r, j}) = (b == 1 && r == 2) ? 0.0 : ((r + j) % 2 == 0 ? 1.0 : 0.0);
        Rng w(seed + 14);
        return detail::weighted_sum(t, t.softmax_last(p("x"), t.leaf(mask), true), w);
      });
  prim("reshape", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 15);
    return detail::weighted_sum(t, t.reshape(p("a"), {3, 2}), w);
  });
  prim("concat_last", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 16);
    return detail::weighted_sum(t, t.concat_last({p("a"), p("b")}), w);
  });
  prim("slice_last", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 17);
    return detail::weighted_sum(t, t.slice_last(p("a"), 1, 2), w);
  });
  prim("transpose2", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    Rng w(seed + 18);
    return detail::weighted_sum(t, t.transpose2(p("a")), w);
  });
  prim(
      "swap_middle",
      [&](ParamStore<double>& s, Rng& rng) { scatter(s, rng, "e", {2, 3, 3, 2}); },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 19);
        return detail::weighted_sum(t, t.swap_middle(p("e")), w);
      });
  prim(
      "pair_sum",
      [&](ParamStore<double>& s, Rng& rng) {
        scatter(s, rng, "h1", {2, 3, 4});
        scatter(s, rng, "h2", {2, 3, 4});
      },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 20);
        return detail::weighted_sum(t, t.pair_sum(p("h1"), p("h2")), w);
      });
  prim("sum_all", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    return t.sum_all(t.mul(p("a"), t.tanh_(p("b"))));
  });
  prim("mean_all", pair_ab, [&](Tape<double>& t, Bound<double>& p) {
    return t.mean_all(t.mul(p("a"), p("b")));
  });
  prim(
      "sum_axis",
      [&](ParamStore<double>& s, Rng& rng) { scatter(s, rng, "p1", {2, 3, 4}); },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 23);
        return detail::weighted_sum(t, t.sum_axis(p("p1"), 1), w);
      });
  prim(
      "mean_axis",
      [&](ParamStore<double>& s, Rng& rng) { scatter(s, rng, "p1", {2, 3, 4}); },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 24);
        return detail::weighted_sum(t, t.mean_axis(p("p1"), -1), w);
      });
  prim(
      "gru_cell",
      [&](ParamStore<double>& s, Rng& rng) {
        register_gru(s, "gru", 3, 4, rng);
        scatter(s, rng, "m", {2, 3});
        scatter(s, rng, "h", {2, 4});
      },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 25);
        return detail::weighted_sum(t, gru_cell(t, p("m"), p("h"), bind_gru(p, "gru")), w);
      });
  prim(
      "lstm_cell",
      [&](ParamStore<double>& s, Rng& rng) {
        register_lstm(s, "lstm", 3, 4, rng);
        scatter(s, rng, "x", {2, 3});
        scatter(s, rng, "h", {2, 4});
        scatter(s, rng, "c", {2, 4});
      },
      [&](Tape<double>& t, Bound<double>& p) {
        Rng w(seed + 26);
        LstmState<double> st{p("h"), p("c")};
        LstmState<double> out = lstm_cell(t, p("x"), st, bind_lstm(p, "lstm"));
        return t.add(detail::weighted_sum(t, out.h, w), detail::weighted_sum(t, out.c, w));
      });

  // One full message-passing layer over a 3-node graph with an isolated node.
  {
    MolGraph g = parse_smiles("CO");
    g.atoms[2] = Atom::F;  // third atom, no bonds: exercises the empty-row path
    const MpnnConfig mcfg{3, 2, {4}};
    detail::grad_suite_case(
        rep, "mpnn_layer", 1e-4, seed,
        [&](ParamStore<double>& s, Rng& rng) {
          register_mpnn(s, "mp", mcfg, rng);
          scatter(s, rng, "nodes", {1, 3, 3}, -1.0, 1.0);
          scatter(s, rng, "edges", {1, 3, 3, 2}, -1.0, 1.0);
        },
        [&](Tape<double>& t, Bound<double>& p) {
          Tensor<double> mask = Tensor<double>::zeros({1, 3, 3});
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v)
              if (u != v && g.bond(u, v) != Bond::None) mask.at_mut({0, u, v}) = 1.0;
          GraphState<double> st{p("nodes"), p("edges"), t.leaf(mask)};
          GraphState<double> out = propagate(p, "mp", st, mcfg);
          Rng w(seed + 27);
          return t.add(detail::weighted_sum(t, out.nodes, w),
                       detail::weighted_sum(t, out.edges, w));
        });
  }

  // End-to-end training objective on a 3-atom molecule.
  {
    TrainConfig cfg;
    cfg.enc_embed = 4;
    cfg.enc_widths = {4, 6};
    cfg.graph_vec = 12;
    cfg.latent = 3;
    cfg.s2s_steps = 2;
    cfg.dec_read_in = 5;
    cfg.dec_widths = {5, 4};
    const std::vector<MolGraph> batch{parse_smiles("CCO")};
    Rng noise(seed + 100);
    const Tensor<double> eps = standard_normal<double>({1, cfg.latent}, noise);
    detail::grad_suite_case(
        rep, "elbo_end_to_end", 1e-3, seed,
        [&](ParamStore<double>& s, Rng& rng) { register_model(s, cfg, rng); },
        [&](Tape<double>& t, Bound<double>& p) {
          return elbo_batch(p, cfg.encoder(), cfg.decoder(), batch, 0.7, eps).loss;
        },
        6);
  }

  if (inject_fault) {
    detail::grad_suite_case(
        rep, "fault_injection", 1e-4, seed,
        [&](ParamStore<double>& s, Rng& rng) { scatter(s, rng, "a", {2, 3}); },
        [&](Tape<double>& t, Bound<double>& p) {
          Rng w(seed + 28);
          return detail::weighted_sum(t, detail::broken_identity(t, p("a")), w);
        });
  }

  return rep;
}

}  // namespace mpgvae
