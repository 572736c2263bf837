#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mpgvae/errors.hpp"

namespace mpgvae {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline void check_shape_valid(const Shape& s) {
  for (int d : s)
    if (d < 1) throw ShapeError("tensor dimensions must be >= 1, got " + shape_str(s));
}

// Dense row-major tensor. Copies share the underlying buffer; buffers are
// treated as immutable once an op has consumed them. `node >= 0` links the
// tensor to a position on the active tape; constants carry node == -1.
template <typename S>
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<S>> data;
  int node = -1;

  Tensor() = default;
  Tensor(Shape sh, std::shared_ptr<std::vector<S>> d, int n = -1)
      : shape(std::move(sh)), data(std::move(d)), node(n) {}

  static Tensor zeros(Shape sh) {
    check_shape_valid(sh);
    auto buf = std::make_shared<std::vector<S>>(shape_numel(sh), S(0));
    return Tensor(std::move(sh), std::move(buf));
  }

  static Tensor full(Shape sh, S value) {
    check_shape_valid(sh);
    auto buf = std::make_shared<std::vector<S>>(shape_numel(sh), value);
    return Tensor(std::move(sh), std::move(buf));
  }

  static Tensor from(Shape sh, std::vector<S> values) {
    check_shape_valid(sh);
    if (values.size() != shape_numel(sh))
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not fill shape " + shape_str(sh));
    return Tensor(std::move(sh), std::make_shared<std::vector<S>>(std::move(values)));
  }

  static Tensor scalar(S value) { return from({1}, {value}); }

  int rank() const { return static_cast<int>(shape.size()); }
  std::size_t numel() const { return shape_numel(shape); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i < 0 ? rank() + i : i)]; }

  const S* ptr() const { return data->data(); }
  S* mut_ptr() { return data->data(); }
  S at(std::size_t i) const { return (*data)[i]; }
  S& at_mut(std::size_t i) { return (*data)[i]; }

  std::size_t offset(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor " +
                       shape_str(shape));
    std::size_t off = 0;
    int axis = 0;
    for (int i : idx) off = off * static_cast<std::size_t>(shape[axis++]) +
                            static_cast<std::size_t>(i);
    return off;
  }
  S at(std::initializer_list<int> idx) const { return (*data)[offset(idx)]; }
  S& at_mut(std::initializer_list<int> idx) { return (*data)[offset(idx)]; }

  bool is_scalar() const { return numel() == 1; }
  S item() const {
    if (!is_scalar()) throw ContractViolation("item() on non-scalar tensor " + shape_str(shape));
    return (*data)[0];
  }

  // Deep copy with no tape linkage.
  Tensor detached_copy() const {
    return Tensor(shape, std::make_shared<std::vector<S>>(*data));
  }

  template <typename T>
  Tensor<T> cast() const {
    std::vector<T> out(data->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>((*data)[i]);
    return Tensor<T>(shape, std::make_shared<std::vector<T>>(std::move(out)));
  }
};

}  // namespace mpgvae
