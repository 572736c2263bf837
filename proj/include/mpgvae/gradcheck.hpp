#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mpgvae/nn.hpp"
#include "mpgvae/rng.hpp"
#include "mpgvae/tape.hpp"
#include "mpgvae/tensor.hpp"

namespace mpgvae {

template <typename S>
struct GradCheckOptions {
  S step = sizeof(S) == 8 ? S(1e-5) : S(1e-2);
  S tolerance = sizeof(S) == 8 ? S(1e-4) : S(5e-2);
  // 0 = check every coordinate; otherwise sample this many per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 13;
};

template <typename S>
struct GradCheckLine {
  std::string name;
  std::size_t checked = 0;
  S max_abs_diff = 0;
  S max_rel = 0;        // |a-n| / max(|a|,|n|,1)
  std::size_t worst_index = 0;
  S worst_analytic = 0;
  S worst_numeric = 0;
};

template <typename S>
struct GradCheckReport {
  bool pass = true;
  S worst_rel = 0;
  std::string worst_param;
  std::vector<GradCheckLine<S>> lines;
};

// Compares tape gradients against central finite differences. The loss
// builder must construct the full forward pass on the tape it is given and
// return a scalar; it is re-invoked for every probe, so it must be a pure
// function of the store values.
template <typename S>
GradCheckReport<S> gradcheck(ParamStore<S>& store,
                             const std::function<Tensor<S>(Tape<S>&, Bound<S>&)>& loss_fn,
                             const GradCheckOptions<S>& opt = {}) {
  auto eval = [&]() -> S {
    Tape<S> t;
    Bound<S> b(t, store);
    return loss_fn(t, b).item();
  };

  Tape<S> t;
  Bound<S> b(t, store);
  Tensor<S> loss = loss_fn(t, b);
  std::unordered_map<std::string, Tensor<S>> grads;
  if (loss.node < 0) {
    // Constant function: analytic gradient is zero everywhere; finite
    // differences will agree since eval() does not depend on the store.
    if (!loss.is_scalar())
      throw ContractViolation("gradcheck: loss must be scalar, got " + shape_str(loss.shape));
    for (const auto& name : store.names())
      grads.emplace(name, Tensor<S>::zeros(store.at(name).shape));
  } else {
    grads = t.backward(loss);
    // Parameters the loss never leased onto the tape have zero gradient.
    for (const auto& name : store.names())
      if (!grads.count(name)) grads.emplace(name, Tensor<S>::zeros(store.at(name).shape));
  }

  Rng rng(opt.seed);
  GradCheckReport<S> report;
  for (const auto& name : store.names()) {
    Tensor<S>& value = store.at(name);
    const Tensor<S>& grad = grads.at(name);
    GradCheckLine<S> line;
    line.name = name;

    std::vector<std::size_t> coords;
    if (opt.max_coords_per_param == 0 || value.numel() <= opt.max_coords_per_param) {
      coords.resize(value.numel());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < opt.max_coords_per_param; ++i)
        coords.push_back(static_cast<std::size_t>(rng.below(value.numel())));
    }

    for (std::size_t idx : coords) {
      S* slot = value.mut_ptr() + idx;
      const S saved = *slot;
      *slot = saved + opt.step;
      const S up = eval();
      *slot = saved - opt.step;
      const S down = eval();
      *slot = saved;
      const S numeric = (up - down) / (S(2) * opt.step);
      const S analytic = grad.ptr()[idx];
      const S diff = std::abs(analytic - numeric);
      const S rel = diff / std::max({std::abs(analytic), std::abs(numeric), S(1)});
      ++line.checked;
      line.max_abs_diff = std::max(line.max_abs_diff, diff);
      if (rel > line.max_rel) {
        line.max_rel = rel;
        line.worst_index = idx;
        line.worst_analytic = analytic;
        line.worst_numeric = numeric;
      }
    }
    if (line.max_rel > report.worst_rel) {
      report.worst_rel = line.max_rel;
      report.worst_param = name;
    }
    if (line.max_rel > opt.tolerance) report.pass = false;
    report.lines.push_back(std::move(line));
  }
  return report;
}

}  // namespace mpgvae
