#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pfx/common.hpp"
#include "pfx/model.hpp"

namespace pfx {

// Checkpoint container: little-endian binary.
//   magic "PFX1", version u32,
//   vocab_size, d_model, num_layers, num_heads, num_labels, max_len as u32,
//   then named tensors: name_len u32, name bytes, rank u32, dims u32[rank],
//   row-major f32 payload.
inline constexpr char kCkptMagic[4] = {'P', 'F', 'X', '1'};
inline constexpr uint32_t kCkptVersion = 1;

struct TensorTable {
  ModelConfig header;
  // insertion-ordered names so writes are reproducible
  std::vector<std::string> names;
  std::map<std::string, std::pair<std::vector<uint32_t>, std::vector<float>>> tensors;

  void add(const std::string& name, std::vector<uint32_t> dims, std::vector<float> data) {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    require(n == data.size(), Errc::shape, "tensor size does not match dims: " + name);
    require(tensors.find(name) == tensors.end(), Errc::format, "duplicate tensor name: " + name);
    names.push_back(name);
    tensors.emplace(name, std::make_pair(std::move(dims), std::move(data)));
  }
};

namespace detail {

inline void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.gcount() == 4, Errc::format, "truncated checkpoint");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& out, const float* data, size_t n) {
  static_assert(sizeof(float) == 4);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

}  // namespace detail

inline void write_tensor_table(const TensorTable& t, std::ostream& out) {
  out.write(kCkptMagic, 4);
  detail::write_u32(out, kCkptVersion);
  detail::write_u32(out, static_cast<uint32_t>(t.header.vocab_size));
  detail::write_u32(out, static_cast<uint32_t>(t.header.d_model));
  detail::write_u32(out, static_cast<uint32_t>(t.header.num_layers));
  detail::write_u32(out, static_cast<uint32_t>(t.header.num_heads));
  detail::write_u32(out, static_cast<uint32_t>(t.header.num_labels));
  detail::write_u32(out, static_cast<uint32_t>(t.header.max_len));
  for (const auto& name : t.names) {
    const auto& [dims, data] = t.tensors.at(name);
    detail::write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(out, static_cast<uint32_t>(dims.size()));
    for (uint32_t d : dims) detail::write_u32(out, d);
    detail::write_f32(out, data.data(), data.size());
  }
}

inline TensorTable read_tensor_table(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, kCkptMagic, 4) == 0, Errc::format,
          "bad checkpoint magic");
  const uint32_t version = detail::read_u32(in);
  require(version == kCkptVersion, Errc::format, "unsupported checkpoint version");
  TensorTable t;
  t.header.vocab_size = static_cast<int32_t>(detail::read_u32(in));
  t.header.d_model = static_cast<int32_t>(detail::read_u32(in));
  t.header.num_layers = static_cast<int32_t>(detail::read_u32(in));
  t.header.num_heads = static_cast<int32_t>(detail::read_u32(in));
  t.header.num_labels = static_cast<int32_t>(detail::read_u32(in));
  t.header.max_len = static_cast<int32_t>(detail::read_u32(in));
  t.header.validate();

  while (true) {
    in.peek();
    if (in.eof()) break;
    require(static_cast<bool>(in), Errc::format, "corrupt checkpoint stream");
    const uint32_t name_len = detail::read_u32(in);
    require(name_len > 0 && name_len < 4096, Errc::format, "implausible tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    require(in.gcount() == static_cast<std::streamsize>(name_len), Errc::format,
            "truncated checkpoint");
    const uint32_t rank = detail::read_u32(in);
    require(rank >= 1 && rank <= 4, Errc::format, "implausible tensor rank");
    std::vector<uint32_t> dims(rank);
    size_t n = 1;
    for (uint32_t& d : dims) {
      d = detail::read_u32(in);
      n *= d;
    }
    require(n > 0 && n < (1u << 28), Errc::format, "implausible tensor size");
    std::vector<float> data(n);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 4));
    require(in.gcount() == static_cast<std::streamsize>(n * 4), Errc::format,
            "truncated checkpoint");
    t.add(name, std::move(dims), std::move(data));
  }
  return t;
}

inline void save_tensor_table(const TensorTable& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), Errc::io, "cannot open for write: " + path);
  write_tensor_table(t, out);
  require(static_cast<bool>(out), Errc::io, "write failed: " + path);
}

inline TensorTable load_tensor_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io, "cannot open checkpoint: " + path);
  return read_tensor_table(in);
}

// ---------------------------------------------------------------------------
// Model <-> table
// ---------------------------------------------------------------------------

template <class Real>
TensorTable to_tensor_table(const Classifier<Real>& m) {
  TensorTable t;
  t.header = m.cfg;
  auto refs = tensor_refs(const_cast<Classifier<Real>&>(m));
  for (const auto& r : refs) {
    std::vector<float> data(r.size);
    for (size_t i = 0; i < r.size; ++i) data[i] = static_cast<float>(r.data[i]);
    t.add(r.name, r.dims, std::move(data));
  }
  return t;
}

template <class Real>
Classifier<Real> from_tensor_table(const TensorTable& t) {
  Classifier<Real> m;
  m.allocate(t.header);
  auto refs = tensor_refs(m);
  require(refs.size() == t.tensors.size(), Errc::format,
          "checkpoint tensor count does not match architecture");
  for (auto& r : refs) {
    auto it = t.tensors.find(r.name);
    require(it != t.tensors.end(), Errc::format, "checkpoint missing tensor: " + r.name);
    const auto& [dims, data] = it->second;
    require(dims == r.dims, Errc::format, "checkpoint dims mismatch for tensor: " + r.name);
    for (size_t i = 0; i < r.size; ++i) r.data[i] = static_cast<Real>(data[i]);
  }
  return m;
}

template <class Real>
void save_checkpoint(const Classifier<Real>& m, const std::string& path) {
  save_tensor_table(to_tensor_table(m), path);
}

template <class Real>
Classifier<Real> load_checkpoint(const std::string& path) {
  return from_tensor_table<Real>(load_tensor_table(path));
}

// ---------------------------------------------------------------------------
// Digests
// ---------------------------------------------------------------------------

inline std::string sha256_hex(const void* data, size_t n) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(data, n, digest, &len, EVP_sha256(), nullptr) == 1, Errc::internal,
          "EVP_Digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::io, "cannot open for digest: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return sha256_hex(bytes.data(), bytes.size());
}

// Digest of the serialized parameter set; used to assert that removal never
// touches the victim's weights.
template <class Real>
std::string model_digest(const Classifier<Real>& m) {
  std::ostringstream ss(std::ios::binary);
  write_tensor_table(to_tensor_table(m), ss);
  const std::string bytes = ss.str();
  return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace pfx
