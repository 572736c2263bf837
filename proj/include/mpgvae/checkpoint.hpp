#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "mpgvae/errors.hpp"
#include "mpgvae/nn.hpp"
#include "mpgvae/tensor.hpp"

namespace mpgvae {

// Checkpoint layout (little-endian):
//   magic "MPGV1"
//   u8  scalar width in bytes (4 or 8)
//   u32 tensor count
//   per tensor: u32 name_len, name, u32 rank, u32 dims[rank], raw scalars
//   u32 trailer_len, trailer (human-readable config echo)
// Scalars are raw IEEE bytes, so save/load round-trips bit-exactly at the
// same precision; loading across precisions converts through double.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  const char* raw(std::size_t n) {
    need(n);
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size())
      throw CheckpointError("truncated checkpoint: " + path_);
  }
  const std::string& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const ParamStore<S>& store,
                     const std::string& trailer = "") {
  static_assert(sizeof(S) == 4 || sizeof(S) == 8);
  std::string out;
  out += "MPGV1";
  out.push_back(static_cast<char>(sizeof(S)));
  detail::put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& name : store.names()) {
    const Tensor<S>& t = store.at(name);
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    const std::size_t nbytes = t.numel() * sizeof(S);
    const std::size_t at = out.size();
    out.resize(at + nbytes);
    std::memcpy(out.data() + at, t.ptr(), nbytes);
  }
  detail::put_u32(out, static_cast<std::uint32_t>(trailer.size()));
  out += trailer;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("short write on checkpoint: " + path);
}

struct CheckpointInfo {
  int scalar_width = 0;
  std::vector<std::pair<std::string, Shape>> tensors;
  std::size_t scalar_count = 0;
  std::string trailer;
};

namespace detail {

template <typename S, typename FileS>
void load_scalars(ByteReader& r, Tensor<S>& dst) {
  const std::size_t n = dst.numel();
  const char* raw = r.raw(n * sizeof(FileS));
  if constexpr (std::is_same_v<S, FileS>) {
    std::memcpy(dst.mut_ptr(), raw, n * sizeof(S));
  } else {
    std::vector<FileS> tmp(n);
    std::memcpy(tmp.data(), raw, n * sizeof(FileS));
    S* p = dst.mut_ptr();
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<S>(static_cast<double>(tmp[i]));
  }
}

}  // namespace detail

// Loads values into the store. An empty store is populated from the file;
// a pre-registered store must agree on every name and shape. Returns the
// trailer text.
template <typename S>
std::string load_checkpoint(const std::string& path, ParamStore<S>& store) {
  const std::string buf = detail::read_file(path);
  detail::ByteReader r(buf, path);
  if (r.bytes(5) != "MPGV1") throw CheckpointError("bad magic in checkpoint: " + path);
  const int width = r.u8();
  if (width != 4 && width != 8)
    throw CheckpointError("unsupported scalar width " + std::to_string(width) + " in " + path);
  const std::uint32_t count = r.u32();
  const bool populate = store.size() == 0;
  std::size_t seen = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("implausible tensor rank in " + path);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
    check_shape_valid(shape);
    Tensor<S>* dst;
    if (populate) {
      dst = &store.add(name, Tensor<S>::zeros(shape));
    } else {
      if (!store.has(name))
        throw CheckpointError("checkpoint tensor not in model: " + name + " (" + path + ")");
      dst = &store.at(name);
      if (dst->shape != shape)
        throw CheckpointError("shape mismatch for " + name + ": model " + shape_str(dst->shape) +
                              " vs file " + shape_str(shape));
      ++seen;
    }
    if (width == 4)
      detail::load_scalars<S, float>(r, *dst);
    else
      detail::load_scalars<S, double>(r, *dst);
  }
  if (!populate && seen != store.size())
    throw CheckpointError("checkpoint is missing " + std::to_string(store.size() - seen) +
                          " model tensor(s): " + path);
  const std::string trailer = r.bytes(r.u32());
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload: " + path);
  return trailer;
}

inline CheckpointInfo inspect_checkpoint(const std::string& path) {
  const std::string buf = detail::read_file(path);
  detail::ByteReader r(buf, path);
  if (r.bytes(5) != "MPGV1") throw CheckpointError("bad magic in checkpoint: " + path);
  CheckpointInfo info;
  info.scalar_width = r.u8();
  if (info.scalar_width != 4 && info.scalar_width != 8)
    throw CheckpointError("unsupported scalar width " + std::to_string(info.scalar_width) +
                          " in " + path);
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("implausible tensor rank in " + path);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
    check_shape_valid(shape);
    info.scalar_count += shape_numel(shape);
    r.raw(shape_numel(shape) * static_cast<std::size_t>(info.scalar_width));
    info.tensors.emplace_back(name, std::move(shape));
  }
  info.trailer = r.bytes(r.u32());
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload: " + path);
  return info;
}

}  // namespace mpgvae
