#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpgvae/errors.hpp"
#include "mpgvae/rng.hpp"
#include "mpgvae/tape.hpp"
#include "mpgvae/tensor.hpp"

namespace mpgvae {

// Owns the live parameter values between steps. Registration order is the
// canonical order for optimizer state and checkpoints.
template <typename S>
class ParamStore {
 public:
  Tensor<S>& add(const std::string& name, const Tensor<S>& value) {
    if (index_.count(name)) throw ContractViolation("parameter already exists: " + name);
    index_.emplace(name, names_.size());
    names_.push_back(name);
    values_.push_back(value.detached_copy());
    return values_.back();
  }

  // Weight matrix [in, out] for y = x W, uniform in +-1/sqrt(in).
  Tensor<S>& add_matrix(const std::string& name, int in, int out, Rng& rng) {
    const S k = S(1) / std::sqrt(static_cast<S>(in));
    Tensor<S> w = Tensor<S>::zeros({in, out});
    S* p = w.mut_ptr();
    for (std::size_t i = 0; i < w.numel(); ++i)
      p[i] = static_cast<S>(rng.uniform(-static_cast<double>(k), static_cast<double>(k)));
    return add(name, w);
  }

  Tensor<S>& add_bias(const std::string& name, int n) {
    return add(name, Tensor<S>::zeros({n}));
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<S>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("unknown parameter: " + name);
    return values_[it->second];
  }

  const Tensor<S>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("unknown parameter: " + name);
    return values_[it->second];
  }

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
  }

  template <typename T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], values_[i].template cast<T>());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<S>> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Leases parameters from a store onto a tape, once each, on first use.
template <typename S>
class Bound {
 public:
  Bound(Tape<S>& tape, ParamStore<S>& store) : tape_(&tape), store_(&store) {}

  Tensor<S> operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    Tensor<S> t = tape_->param(name, store_->at(name));
    cache_.emplace(name, t);
    return t;
  }

  Tape<S>& tape() { return *tape_; }

 private:
  Tape<S>* tape_;
  ParamStore<S>* store_;
  std::unordered_map<std::string, Tensor<S>> cache_;
};

// y = x W + b over the last axis; x may have any rank >= 1.
template <typename S>
Tensor<S> linear(Tape<S>& t, const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  const int in = w.dim(0), out = w.dim(1);
  if (x.dim(-1) != in)
    throw ShapeError("linear: input " + shape_str(x.shape) + " vs weight " + shape_str(w.shape));
  const int rows = static_cast<int>(x.numel()) / in;
  Tensor<S> y = t.add_bias(t.matmul(t.reshape(x, {rows, in}), w), b);
  Shape oshape(x.shape.begin(), x.shape.end() - 1);
  oshape.push_back(out);
  return t.reshape(y, oshape);
}

template <typename S>
Tensor<S> linear_nobias(Tape<S>& t, const Tensor<S>& x, const Tensor<S>& w) {
  const int in = w.dim(0), out = w.dim(1);
  if (x.dim(-1) != in)
    throw ShapeError("linear: input " + shape_str(x.shape) + " vs weight " + shape_str(w.shape));
  const int rows = static_cast<int>(x.numel()) / in;
  Tensor<S> y = t.matmul(t.reshape(x, {rows, in}), w);
  Shape oshape(x.shape.begin(), x.shape.end() - 1);
  oshape.push_back(out);
  return t.reshape(y, oshape);
}

// Helper to register / lease a linear layer's pair of tensors by prefix.
template <typename S>
void register_linear(ParamStore<S>& store, const std::string& prefix, int in, int out, Rng& rng) {
  store.add_matrix(prefix + ".W", in, out, rng);
  store.add_bias(prefix + ".b", out);
}

template <typename S>
Tensor<S> linear(Bound<S>& p, const std::string& prefix, const Tensor<S>& x) {
  return linear(p.tape(), x, p(prefix + ".W"), p(prefix + ".b"));
}

// ---- GRU cell ---------------------------------------------------------------

template <typename S>
struct GruParams {
  Tensor<S> w_r, u_r, b_r;
  Tensor<S> w_u, u_u, b_u;
  Tensor<S> w_c, u_c, b_c;
};

template <typename S>
void register_gru(ParamStore<S>& store, const std::string& prefix, int in, int hidden, Rng& rng) {
  store.add_matrix(prefix + ".W_r", in, hidden, rng);
  store.add_matrix(prefix + ".U_r", hidden, hidden, rng);
  store.add_bias(prefix + ".b_r", hidden);
  store.add_matrix(prefix + ".W_u", in, hidden, rng);
  store.add_matrix(prefix + ".U_u", hidden, hidden, rng);
  store.add_bias(prefix + ".b_u", hidden);
  store.add_matrix(prefix + ".W_c", in, hidden, rng);
  store.add_matrix(prefix + ".U_c", hidden, hidden, rng);
  store.add_bias(prefix + ".b_c", hidden);
}

template <typename S>
GruParams<S> bind_gru(Bound<S>& p, const std::string& prefix) {
  return {p(prefix + ".W_r"), p(prefix + ".U_r"), p(prefix + ".b_r"),
          p(prefix + ".W_u"), p(prefix + ".U_u"), p(prefix + ".b_u"),
          p(prefix + ".W_c"), p(prefix + ".U_c"), p(prefix + ".b_c")};
}

// r = sig(m W_r + h U_r + b_r)
// u = sig(m W_u + h U_u + b_u)
// c = tanh(m W_c + (r.h) U_c + b_c)
// h' = (1 - u).h + u.c
template <typename S>
Tensor<S> gru_cell(Tape<S>& t, const Tensor<S>& m, const Tensor<S>& h, const GruParams<S>& p) {
  Tensor<S> r = t.sigmoid_(
      t.add_bias(t.add(linear_nobias(t, m, p.w_r), linear_nobias(t, h, p.u_r)), p.b_r));
  Tensor<S> u = t.sigmoid_(
      t.add_bias(t.add(linear_nobias(t, m, p.w_u), linear_nobias(t, h, p.u_u)), p.b_u));
  Tensor<S> c = t.tanh_(
      t.add_bias(t.add(linear_nobias(t, m, p.w_c), linear_nobias(t, t.mul(r, h), p.u_c)), p.b_c));
  Tensor<S> keep = t.mul(t.add_scalar(t.scale(u, S(-1)), S(1)), h);
  return t.add(keep, t.mul(u, c));
}

// ---- LSTM cell --------------------------------------------------------------

template <typename S>
struct LstmParams {
  Tensor<S> w_i, u_i, b_i;
  Tensor<S> w_f, u_f, b_f;
  Tensor<S> w_o, u_o, b_o;
  Tensor<S> w_g, u_g, b_g;
};

template <typename S>
void register_lstm(ParamStore<S>& store, const std::string& prefix, int in, int hidden, Rng& rng) {
  for (const char* gate : {"i", "f", "o", "g"}) {
    store.add_matrix(prefix + ".W_" + gate, in, hidden, rng);
    store.add_matrix(prefix + ".U_" + gate, hidden, hidden, rng);
    store.add_bias(prefix + ".b_" + gate, hidden);
  }
}

template <typename S>
LstmParams<S> bind_lstm(Bound<S>& p, const std::string& prefix) {
  return {p(prefix + ".W_i"), p(prefix + ".U_i"), p(prefix + ".b_i"),
          p(prefix + ".W_f"), p(prefix + ".U_f"), p(prefix + ".b_f"),
          p(prefix + ".W_o"), p(prefix + ".U_o"), p(prefix + ".b_o"),
          p(prefix + ".W_g"), p(prefix + ".U_g"), p(prefix + ".b_g")};
}

template <typename S>
struct LstmState {
  Tensor<S> h, c;
};

template <typename S>
LstmState<S> lstm_cell(Tape<S>& t, const Tensor<S>& x, const LstmState<S>& s,
                       const LstmParams<S>& p) {
  auto gate = [&](const Tensor<S>& w, const Tensor<S>& u, const Tensor<S>& b) {
    return t.add_bias(t.add(linear_nobias(t, x, w), linear_nobias(t, s.h, u)), b);
  };
  Tensor<S> i = t.sigmoid_(gate(p.w_i, p.u_i, p.b_i));
  Tensor<S> f = t.sigmoid_(gate(p.w_f, p.u_f, p.b_f));
  Tensor<S> o = t.sigmoid_(gate(p.w_o, p.u_o, p.b_o));
  Tensor<S> g = t.tanh_(gate(p.w_g, p.u_g, p.b_g));
  Tensor<S> c = t.add(t.mul(f, s.c), t.mul(i, g));
  Tensor<S> h = t.mul(o, t.tanh_(c));
  return {h, c};
}

}  // namespace mpgvae
