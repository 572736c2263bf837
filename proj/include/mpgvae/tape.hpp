#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mpgvae/errors.hpp"
#include "mpgvae/tensor.hpp"

namespace mpgvae {

// Define-by-run reverse-mode tape. Every op computes its forward value
// eagerly and records a pull closure that routes the output gradient to the
// inputs. Nodes are created in topological order, so one reverse sweep
// settles all gradients. A tape is single-threaded and lives for one
// forward/backward pass.
template <typename S>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves -------------------------------------------------------------

  Tensor<S> leaf(const Tensor<S>& value) {
    Tensor<S> out(value.shape, value.data);
    out.node = alloc_node(out.numel());
    return out;
  }

  // Leaf that participates in backward()'s name -> gradient result.
  Tensor<S> param(const std::string& name, const Tensor<S>& value) {
    if (param_index_.count(name))
      throw ContractViolation("parameter registered twice on one tape: " + name);
    Tensor<S> out = leaf(value);
    param_index_.emplace(name, out.node);
    params_.emplace_back(name, out.node, out.shape);
    return out;
  }

  // ---- elementwise --------------------------------------------------------

  Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    same_shape(a, b, "add");
    std::vector<S> v(a.numel());
    const S* pa = a.ptr();
    const S* pb = b.ptr();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] + pb[i];
    Tensor<S> out = result(a.shape, std::move(v), {a.node, b.node});
    if (out.node >= 0)
      set_pull(out, [this, an = a.node, bn = b.node, on = out.node] {
        const auto& g = out_grad(on);
        accum(an, g.data(), g.size());
        accum(bn, g.data(), g.size());
      });
    return out;
  }

  Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    same_shape(a, b, "sub");
    std::vector<S> v(a.numel());
    const S* pa = a.ptr();
    const S* pb = b.ptr();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] - pb[i];
    Tensor<S> out = result(a.shape, std::move(v), {a.node, b.node});
    if (out.node >= 0)
      set_pull(out, [this, an = a.node, bn = b.node, on = out.node] {
        const auto& g = out_grad(on);
        accum(an, g.data(), g.size());
        if (bn >= 0) {
          S* gb = grad_buf(bn, g.size());
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
      });
    return out;
  }

  Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    same_shape(a, b, "mul");
    std::vector<S> v(a.numel());
    const S* pa = a.ptr();
    const S* pb = b.ptr();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] * pb[i];
    Tensor<S> out = result(a.shape, std::move(v), {a.node, b.node});
    if (out.node >= 0)
      set_pull(out, [this, a, b, on = out.node] {
        const auto& g = out_grad(on);
        if (a.node >= 0) {
          S* ga = grad_buf(a.node, g.size());
          const S* pb = b.ptr();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb[i];
        }
        if (b.node >= 0) {
          S* gb = grad_buf(b.node, g.size());
          const S* pa = a.ptr();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa[i];
        }
      });
    return out;
  }

  // Scalar constant times tensor (the one broadcast besides bias-add).
  Tensor<S> scale(const Tensor<S>& a, S c) {
    std::vector<S> v(a.numel());
    const S* pa = a.ptr();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] * c;
    Tensor<S> out = result(a.shape, std::move(v), {a.node});
    if (out.node >= 0)
      set_pull(out, [this, an = a.node, c, on = out.node] {
        const auto& g = out_grad(on);
        S* ga = grad_buf(an, g.size());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
      });
    return out;
  }

  Tensor<S> add_scalar(const Tensor<S>& a, S c) {
    std::vector<S> v(a.numel());
    const S* pa = a.ptr();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pa[i] + c;
    Tensor<S> out = result(a.shape, std::move(v), {a.node});
    if (out.node >= 0)
      set_pull(out, [this, an = a.node, on = out.node] {
        const auto& g = out_grad(on);
        accum(an, g.data(), g.size());
      });
    return out;
  }

  // x[..., d] + b[d], broadcast over all leading axes.
  Tensor<S> add_bias(const Tensor<S>& x, const Tensor<S>& b) {
    if (x.rank() < 1 || b.rank() != 1 || x.dim(-1) != b.dim(0))
      throw ShapeError("add_bias: incompatible shapes " + shape_str(x.shape) + " and " +
                       shape_str(b.shape));
    const std::size_t d = static_cast<std::size_t>(b.dim(0));
    const std::size_t rows = x.numel() / d;
    std::vector<S> v(x.numel());
    const S* px = x.ptr();
    const S* pb = b.ptr();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) v[r * d + j] = px[r * d + j] + pb[j];
    Tensor<S> out = result(x.shape, std::move(v), {x.node, b.node});
    if (out.node >= 0)
      set_pull(out, [this, xn = x.node, bn = b.node, rows, d, on = out.node] {
        const auto& g = out_grad(on);
        accum(xn, g.data(), g.size());
        if (bn >= 0) {
          S* gb = grad_buf(bn, d);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
      });
    return out;
  }

  // ---- nonlinearities -----------------------------------------------------

  Tensor<S> tanh_(const Tensor<S>& x) {
    return unary(
        x, [](S v) { return std::tanh(v); },
        [](S /*v*/, S y) { return S(1) - y * y; });
  }

  Tensor<S> sigmoid_(const Tensor<S>& x) {
    return unary(
        x, [](S v) { return S(1) / (S(1) + std::exp(-v)); },
        [](S /*v*/, S y) { return y * (S(1) - y); });
  }

  Tensor<S> exp_(const Tensor<S>& x) {
    return unary(
        x, [](S v) { return std::exp(v); }, [](S /*v*/, S y) { return y; });
  }

  Tensor<S> log_(const Tensor<S>& x) {
    return unary(
        x, [](S v) { return std::log(v); }, [](S v, S /*y*/) { return S(1) / v; });
  }

  // max(x, floor); gradient passes where x was not clamped.
  Tensor<S> clamp_min(const Tensor<S>& x, S floor) {
    return unary(
        x, [floor](S v) { return v < floor ? floor : v; },
        [floor](S v, S /*y*/) { return v < floor ? S(0) : S(1); });
  }

  // ---- matrix products ----------------------------------------------------

  Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
      throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                       shape_str(b.shape));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<S> v(static_cast<std::size_t>(m) * n, S(0));
    gemm(a.ptr(), b.ptr(), v.data(), m, k, n);
    Tensor<S> out = result({m, n}, std::move(v), {a.node, b.node});
    if (out.node >= 0)
      set_pull(out, [this, a, b, m, k, n, on = out.node] {
        const auto& g = out_grad(on);
        if (a.node >= 0) {
          // dA = dC * B^T
          S* ga = grad_buf(a.node, static_cast<std::size_t>(m) * k);
          const S* pb = b.ptr();
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              S acc = 0;
              const S* grow = g.data() + static_cast<std::size_t>(i) * n;
              const S* brow = pb + static_cast<std::size_t>(p) * n;
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              ga[static_cast<std::size_t>(i) * k + p] += acc;
            }
        }
        if (b.node >= 0) {
          // dB = A^T * dC
          S* gb = grad_buf(b.node, static_cast<std::size_t>(k) * n);
          const S* pa = a.ptr();
          for (int i = 0; i < m; ++i) {
            const S* grow = g.data() + static_cast<std::size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
              const S f = pa[static_cast<std::size_t>(i) * k + p];
              if (f == S(0)) continue;
              S* gbrow = gb + static_cast<std::size_t>(p) * n;
              for (int j = 0; j < n; ++j) gbrow[j] += f * grow[j];
            }
          }
        }
      });
    return out;
  }

  // [B,m,k] x [B,k,n] -> [B,m,n]
  Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
      throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape) + " and " +
                       shape_str(b.shape));
    const int batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    std::vector<S> v(static_cast<std::size_t>(batch) * m * n, S(0));
    for (int t = 0; t < batch; ++t)
      gemm(a.ptr() + static_cast<std::size_t>(t) * m * k,
           b.ptr() + static_cast<std::size_t>(t) * k * n,
           v.data() + static_cast<std::size_t>(t) * m * n, m, k, n);
    Tensor<S> out = result({batch, m, n}, std::move(v), {a.node, b.node});
    if (out.node >= 0)
      set_pull(out, [this, a, b, batch, m, k, n, on = out.node] {
        const auto& g = out_grad(on);
        for (int t = 0; t < batch; ++t) {
          const S* gt = g.data() + static_cast<std::size_t>(t) * m * n;
          if (a.node >= 0) {
            S* ga = grad_buf(a.node, a.numel()) + static_cast<std::size_t>(t) * m * k;
            const S* pb = b.ptr() + static_cast<std::size_t>(t) * k * n;
            for (int i = 0; i < m; ++i)
              for (int p = 0; p < k; ++p) {
                S acc = 0;
                for (int j = 0; j < n; ++j) acc += gt[static_cast<std::size_t>(i) * n + j] *
                                                   pb[static_cast<std::size_t>(p) * n + j];
                ga[static_cast<std::size_t>(i) * k + p] += acc;
              }
          }
          if (b.node >= 0) {
            S* gb = grad_buf(b.node, b.numel()) + static_cast<std::size_t>(t) * k * n;
            const S* pa = a.ptr() + static_cast<std::size_t>(t) * m * k;
            for (int i = 0; i < m; ++i)
              for (int p = 0; p < k; ++p) {
                const S f = pa[static_cast<std::size_t>(i) * k + p];
                if (f == S(0)) continue;
                for (int j = 0; j < n; ++j)
                  gb[static_cast<std::size_t>(p) * n + j] +=
                      f * gt[static_cast<std::size_t>(i) * n + j];
              }
          }
        }
      });
    return out;
  }

  // ---- softmax ------------------------------------------------------------

  // Softmax over the last axis, stabilized by the row max. Optional 0/1 mask
  // of the same shape: masked entries come out exactly 0. A fully masked row
  // throws unless zero_empty_rows, in which case it yields a zero row.
  Tensor<S> softmax_last(const Tensor<S>& x, const std::optional<Tensor<S>>& mask = std::nullopt,
                         bool zero_empty_rows = false) {
    if (x.rank() < 1) throw ShapeError("softmax_last: rank-0 input");
    if (mask && mask->shape != x.shape)
      throw ShapeError("softmax_last: mask shape " + shape_str(mask->shape) +
                       " does not match input " + shape_str(x.shape));
    const std::size_t d = static_cast<std::size_t>(x.dim(-1));
    const std::size_t rows = x.numel() / d;
    std::vector<S> v(x.numel(), S(0));
    const S* px = x.ptr();
    const S* pm = mask ? mask->ptr() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const S* row = px + r * d;
      S mx = S(0);
      bool any = false;
      for (std::size_t j = 0; j < d; ++j) {
        if (pm && pm[r * d + j] == S(0)) continue;
        mx = any ? std::max(mx, row[j]) : row[j];
        any = true;
      }
      if (!any) {
        if (zero_empty_rows) continue;
        throw DegenerateRowError("softmax_last: all entries masked in row " + std::to_string(r));
      }
      S z = 0;
      for (std::size_t j = 0; j < d; ++j) {
        if (pm && pm[r * d + j] == S(0)) continue;
        v[r * d + j] = std::exp(row[j] - mx);
        z += v[r * d + j];
      }
      for (std::size_t j = 0; j < d; ++j) v[r * d + j] /= z;
    }
    Tensor<S> out = result(x.shape, std::move(v), {x.node});
    if (out.node >= 0)
      set_pull(out, [this, xn = x.node, y = out, rows, d, on = out.node] {
        const auto& g = out_grad(on);
        S* gx = grad_buf(xn, y.numel());
        const S* py = y.ptr();
        for (std::size_t r = 0; r < rows; ++r) {
          S dot = 0;
          for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * py[r * d + j];
          for (std::size_t j = 0; j < d; ++j)
            gx[r * d + j] += py[r * d + j] * (g[r * d + j] - dot);
        }
      });
    return out;
  }

  // ---- structure ----------------------------------------------------------

  Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    check_shape_valid(shape);
    if (shape_numel(shape) != x.numel())
      throw ShapeError("reshape: cannot view " + shape_str(x.shape) + " as " + shape_str(shape));
    std::vector<S> v(*x.data);
    Tensor<S> out = result(std::move(shape), std::move(v), {x.node});
    if (out.node >= 0)
      set_pull(out, [this, xn = x.node, on = out.node] {
        const auto& g = out_grad(on);
        accum(xn, g.data(), g.size());
      });
    return out;
  }

  Tensor<S> concat_last(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw ContractViolation("concat_last: no inputs");
    Shape lead(parts[0].shape.begin(), parts[0].shape.end() - 1);
    int total = 0;
    bool track = false;
    for (const auto& p : parts) {
      Shape pl(p.shape.begin(), p.shape.end() - 1);
      if (p.rank() < 1 || pl != lead)
        throw ShapeError("concat_last: leading dims differ: " + shape_str(parts[0].shape) +
                         " vs " + shape_str(p.shape));
      total += p.dim(-1);
      track = track || p.node >= 0;
    }
    const std::size_t rows = shape_numel(lead);
    Shape oshape = lead;
    oshape.push_back(total);
    std::vector<S> v(rows * static_cast<std::size_t>(total));
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t d = static_cast<std::size_t>(p.dim(-1));
      const S* pp = p.ptr();
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(pp + r * d, pp + (r + 1) * d, v.data() + r * total + off);
      off += d;
    }
    Tensor<S> out(std::move(oshape), std::make_shared<std::vector<S>>(std::move(v)));
    if (track) {
      out.node = alloc_node(out.numel());
      std::vector<std::pair<int, int>> spans;  // (node, width)
      for (const auto& p : parts) spans.emplace_back(p.node, p.dim(-1));
      set_pull(out, [this, spans, rows, total, on = out.node] {
        const auto& g = out_grad(on);
        std::size_t off = 0;
        for (const auto& [nid, w] : spans) {
          if (nid >= 0) {
            S* gp = grad_buf(nid, rows * static_cast<std::size_t>(w));
            for (std::size_t r = 0; r < rows; ++r)
              for (int j = 0; j < w; ++j)
                gp[r * w + j] += g[r * static_cast<std::size_t>(total) + off + j];
          }
          off += static_cast<std::size_t>(w);
        }
      });
    }
    return out;
  }

  Tensor<S> slice_last(const Tensor<S>& x, int start, int len) {
    const int d = x.dim(-1);
    if (start < 0 || len < 1 || start + len > d)
      throw ShapeError("slice_last: [" + std::to_string(start) + "," +
                       std::to_string(start + len) + ") out of " + shape_str(x.shape));
    Shape oshape = x.shape;
    oshape.back() = len;
    const std::size_t rows = x.numel() / static_cast<std::size_t>(d);
    std::vector<S> v(rows * static_cast<std::size_t>(len));
    const S* px = x.ptr();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(px + r * d + start, px + r * d + start + len, v.data() + r * len);
    Tensor<S> out = result(std::move(oshape), std::move(v), {x.node});
    if (out.node >= 0)
      set_pull(out, [this, xn = x.node, rows, d, start, len, xsize = x.numel(), on = out.node] {
        const auto& g = out_grad(on);
        S* gx = grad_buf(xn, xsize);
        for (std::size_t r = 0; r < rows; ++r)
          for (int j = 0; j < len; ++j) gx[r * d + start + j] += g[r * len + j];
      });
    return out;
  }

  // Swap the trailing two axes.
  Tensor<S> transpose2(const Tensor<S>& x) {
    if (x.rank() < 2) throw ShapeError("transpose2: needs rank >= 2, got " + shape_str(x.shape));
    const int m = x.dim(-2), n = x.dim(-1);
    Shape oshape = x.shape;
    std::swap(oshape[oshape.size() - 2], oshape[oshape.size() - 1]);
    const std::size_t mats = x.numel() / static_cast<std::size_t>(m * n);
    std::vector<S> v(x.numel());
    const S* px = x.ptr();
    for (std::size_t t = 0; t < mats; ++t)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          v[t * m * n + static_cast<std::size_t>(j) * m + i] =
              px[t * m * n + static_cast<std::size_t>(i) * n + j];
    Tensor<S> out = result(std::move(oshape), std::move(v), {x.node});
    if (out.node >= 0)
      set_pull(out, [this, xn = x.node, mats, m, n, xsize = x.numel(), on = out.node] {
        const auto& g = out_grad(on);
        S* gx = grad_buf(xn, xsize);
        for (std::size_t t = 0; t < mats; ++t)
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              gx[t * m * n + static_cast<std::size_t>(i) * n + j] +=
                  g[t * m * n + static_cast<std::size_t>(j) * m + i];
      });
    return out;
  }

  // [B,m,n,d] -> [B,n,m,d]; swaps the two middle axes of a rank-4 tensor.
  Tensor<S> swap_middle(const Tensor<S>& x) {
    if (x.rank() != 4) throw ShapeError("swap_middle: needs rank 4, got " + shape_str(x.shape));
    const int b = x.dim(0), m = x.dim(1), n = x.dim(2), d = x.dim(3);
    std::vector<S> v(x.numel());
    const S* px = x.ptr();
    for (int t = 0; t < b; ++t)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t src = ((static_cast<std::size_t>(t) * m + i) * n + j) * d;
          const std::size_t dst = ((static_cast<std::size_t>(t) * n + j) * m + i) * d;
          std::copy(px + src, px + src + d, v.data() + dst);
        }
    Tensor<S> out = result({b, n, m, d}, std::move(v), {x.node});
    if (out.node >= 0)
      set_pull(out, [this, xn = x.node, b, m, n, d, xsize = x.numel(), on = out.node] {
        const auto& g = out_grad(on);
        S* gx = grad_buf(xn, xsize);
        for (int t = 0; t < b; ++t)
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const std::size_t src = ((static_cast<std::size_t>(t) * m + i) * n + j) * d;
              const std::size_t dst = ((static_cast<std::size_t>(t) * n + j) * m + i) * d;
              for (int q = 0; q < d; ++q) gx[src + q] += g[dst + q];
            }
      });
    return out;
  }

  // out[b,u,w,:] = a[b,u,:] + c[b,w,:] for all pairs (u,w).
  Tensor<S> pair_sum(const Tensor<S>& a, const Tensor<S>& c) {
    if (a.rank() != 3 || c.rank() != 3 || a.shape != c.shape)
      throw ShapeError("pair_sum: expects equal [B,n,d] shapes, got " + shape_str(a.shape) +
                       " and " + shape_str(c.shape));
    const int b = a.dim(0), n = a.dim(1), d = a.dim(2);
    std::vector<S> v(static_cast<std::size_t>(b) * n * n * d);
    const S* pa = a.ptr();
    const S* pc = c.ptr();
    for (int t = 0; t < b; ++t)
      for (int u = 0; u < n; ++u)
        for (int w = 0; w < n; ++w) {
          const S* ra = pa + (static_cast<std::size_t>(t) * n + u) * d;
          const S* rc = pc + (static_cast<std::size_t>(t) * n + w) * d;
          S* ro = v.data() + ((static_cast<std::size_t>(t) * n + u) * n + w) * d;
          for (int q = 0; q < d; ++q) ro[q] = ra[q] + rc[q];
        }
    Tensor<S> out = result({b, n, n, d}, std::move(v), {a.node, c.node});
    if (out.node >= 0)
      set_pull(out, [this, an = a.node, cn = c.node, b, n, d, sz = a.numel(), on = out.node] {
        const auto& g = out_grad(on);
        if (an >= 0) {
          S* ga = grad_buf(an, sz);
          for (int t = 0; t < b; ++t)
            for (int u = 0; u < n; ++u)
              for (int w = 0; w < n; ++w)
                for (int q = 0; q < d; ++q)
                  ga[(static_cast<std::size_t>(t) * n + u) * d + q] +=
                      g[((static_cast<std::size_t>(t) * n + u) * n + w) * d + q];
        }
        if (cn >= 0) {
          S* gc = grad_buf(cn, sz);
          for (int t = 0; t < b; ++t)
            for (int u = 0; u < n; ++u)
              for (int w = 0; w < n; ++w)
                for (int q = 0; q < d; ++q)
                  gc[(static_cast<std::size_t>(t) * n + w) * d + q] +=
                      g[((static_cast<std::size_t>(t) * n + u) * n + w) * d + q];
        }
      });
    return out;
  }

  // ---- reductions ---------------------------------------------------------

  Tensor<S> sum_all(const Tensor<S>& x) {
    S acc = 0;
    const S* px = x.ptr();
    for (std::size_t i = 0; i < x.numel(); ++i) acc += px[i];
    Tensor<S> out = result({1}, {acc}, {x.node});
    if (out.node >= 0)
      set_pull(out, [this, xn = x.node, sz = x.numel(), on = out.node] {
        const S g = out_grad(on)[0];
        S* gx = grad_buf(xn, sz);
        for (std::size_t i = 0; i < sz; ++i) gx[i] += g;
      });
    return out;
  }

  Tensor<S> mean_all(const Tensor<S>& x) {
    return scale(sum_all(x), S(1) / static_cast<S>(x.numel()));
  }

  Tensor<S> sum_axis(const Tensor<S>& x, int axis) {
    const int r = x.rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
      throw ShapeError("sum_axis: axis out of range for " + shape_str(x.shape));
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.shape[i]);
    for (int i = axis + 1; i < r; ++i) inner *= static_cast<std::size_t>(x.shape[i]);
    const std::size_t mid = static_cast<std::size_t>(x.shape[axis]);
    Shape oshape;
    for (int i = 0; i < r; ++i)
      if (i != axis) oshape.push_back(x.shape[i]);
    if (oshape.empty()) oshape.push_back(1);
    std::vector<S> v(outer * inner, S(0));
    const S* px = x.ptr();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t m = 0; m < mid; ++m)
        for (std::size_t i = 0; i < inner; ++i)
          v[o * inner + i] += px[(o * mid + m) * inner + i];
    Tensor<S> out = result(std::move(oshape), std::move(v), {x.node});
    if (out.node >= 0)
      set_pull(out, [this, xn = x.node, outer, mid, inner, on = out.node] {
        const auto& g = out_grad(on);
        S* gx = grad_buf(xn, outer * mid * inner);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t m = 0; m < mid; ++m)
            for (std::size_t i = 0; i < inner; ++i)
              gx[(o * mid + m) * inner + i] += g[o * inner + i];
      });
    return out;
  }

  Tensor<S> mean_axis(const Tensor<S>& x, int axis) {
    const int r = x.rank();
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) throw ShapeError("mean_axis: axis out of range for " + shape_str(x.shape));
    return scale(sum_axis(x, a), S(1) / static_cast<S>(x.shape[a]));
  }

  // ---- escape hatch (test instrumentation, composites) ----------------------

  // Record a node with a caller-supplied forward value and pull rule. The
  // pull receives the output gradient and this tape; it is responsible for
  // accumulating into the input nodes via accum()/grad_buf().
  Tensor<S> custom(Shape shape, std::vector<S> values, std::vector<int> input_nodes,
                   std::function<void(Tape&, const std::vector<S>&)> pull) {
    bool track = false;
    for (int n : input_nodes) track = track || n >= 0;
    Tensor<S> out(std::move(shape), std::make_shared<std::vector<S>>(std::move(values)));
    if (track) {
      out.node = alloc_node(out.numel());
      set_pull(out, [this, fn = std::move(pull), on = out.node] { fn(*this, out_grad(on)); });
    }
    return out;
  }

  // ---- backward -----------------------------------------------------------

  // Reverse sweep from a scalar loss. Returns one gradient per registered
  // parameter; parameters the loss never touched come back as zeros.
  std::unordered_map<std::string, Tensor<S>> backward(const Tensor<S>& loss) {
    if (loss.node < 0)
      throw ContractViolation("backward: loss is a constant, not a tape result");
    if (!loss.is_scalar())
      throw ContractViolation("backward: loss must be scalar, got " + shape_str(loss.shape));
    if (backward_done_) throw ContractViolation("backward: tape already consumed");
    backward_done_ = true;
    grad_buf(loss.node, 1)[0] = S(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (!grads_[static_cast<std::size_t>(i)].empty() && nodes_[static_cast<std::size_t>(i)].pull)
        nodes_[static_cast<std::size_t>(i)].pull();
    }
    std::unordered_map<std::string, Tensor<S>> out;
    out.reserve(params_.size());
    for (const auto& [name, node, shape] : params_) {
      auto& g = grads_[static_cast<std::size_t>(node)];
      if (g.empty()) g.assign(shape_numel(shape), S(0));
      out.emplace(name, Tensor<S>::from(shape, g));
    }
    return out;
  }

  // Gradient buffer helpers exposed for custom() pulls.
  void accum(int node, const S* g, std::size_t n) {
    if (node < 0) return;
    S* buf = grad_buf(node, n);
    for (std::size_t i = 0; i < n; ++i) buf[i] += g[i];
  }

  S* grad_buf(int node, std::size_t numel) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(numel, S(0));
    return g.data();
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::size_t numel;
    std::function<void()> pull;
  };

  static void gemm(const S* a, const S* b, S* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
      const S* arow = a + static_cast<std::size_t>(i) * k;
      S* crow = c + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const S f = arow[p];
        if (f == S(0)) continue;
        const S* brow = b + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += f * brow[j];
      }
    }
  }

  static void same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape != b.shape)
      throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                       shape_str(b.shape));
  }

  int alloc_node(std::size_t numel) {
    nodes_.push_back({numel, nullptr});
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  template <typename F>
  void set_pull(const Tensor<S>& out, F&& fn) {
    nodes_[static_cast<std::size_t>(out.node)].pull = std::forward<F>(fn);
  }

  Tensor<S> result(Shape shape, std::vector<S> values, std::initializer_list<int> input_nodes) {
    bool track = false;
    for (int n : input_nodes) track = track || n >= 0;
    Tensor<S> out(std::move(shape), std::make_shared<std::vector<S>>(std::move(values)));
    if (track) out.node = alloc_node(out.numel());
    return out;
  }

  template <typename Fwd, typename Bwd>
  Tensor<S> unary(const Tensor<S>& x, Fwd fwd, Bwd dydx) {
    std::vector<S> v(x.numel());
    const S* px = x.ptr();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(px[i]);
    Tensor<S> out = result(x.shape, std::move(v), {x.node});
    if (out.node >= 0)
      set_pull(out, [this, x, y = out, dydx, on = out.node] {
        const auto& g = out_grad(on);
        S* gx = grad_buf(x.node, x.numel());
        const S* px = x.ptr();
        const S* py = y.ptr();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dydx(px[i], py[i]);
      });
    return out;
  }

  const std::vector<S>& out_grad(int node) const { return grads_[static_cast<std::size_t>(node)]; }

  std::vector<Node> nodes_;
  std::vector<std::vector<S>> grads_;
  std::vector<std::tuple<std::string, int, Shape>> params_;
  std::unordered_map<std::string, int> param_index_;
  bool backward_done_ = false;
};

}  // namespace mpgvae
