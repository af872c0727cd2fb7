#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "enfnet/params.hpp"
#include "enfnet/tensor.hpp"

namespace enfnet {

// Binary checkpoint, little-endian: magic "ENFN", version u32 = 1,
// tensor count u32; per tensor: name length u16, UTF-8 name, ndim u8,
// dims u32 each, then raw IEEE-754 doubles.

namespace detail {
template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ValidationError("checkpoint: truncated file '" + path + "'");
  return v;
}
}  // namespace detail

constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(os.good(), "checkpoint: cannot open '" + path + "' for writing");
  os.write("ENFN", 4);
  detail::write_pod<uint32_t>(os, kCheckpointVersion);
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(store.size()));
  for (const Param& p : store.items()) {
    require(p.name.size() <= 0xFFFF, "checkpoint: parameter name too long");
    detail::write_pod<uint16_t>(os, static_cast<uint16_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_pod<uint8_t>(os, 4);
    for (int d : p.value.shape()) detail::write_pod<uint32_t>(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(p.value.numel() * sizeof(double)));
  }
  require(os.good(), "checkpoint: write failed for '" + path + "'");
}

struct NamedTensor {
  std::string name;
  Tensor value;
};

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::memcmp(magic, "ENFN", 4) == 0,
          "checkpoint: bad magic in '" + path + "'");
  const uint32_t version = detail::read_pod<uint32_t>(is, path);
  require(version == kCheckpointVersion,
          "checkpoint: unsupported version " + std::to_string(version) + " in '" + path + "'");
  const uint32_t count = detail::read_pod<uint32_t>(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = detail::read_pod<uint16_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ValidationError("checkpoint: truncated file '" + path + "'");
    const uint8_t ndim = detail::read_pod<uint8_t>(is, path);
    require(ndim == 4, "checkpoint: tensor '" + name + "' has unsupported rank " +
                           std::to_string(ndim) + " in '" + path + "'");
    uint32_t dims[4];
    for (auto& d : dims) d = detail::read_pod<uint32_t>(is, path);
    Tensor t(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
             static_cast<int>(dims[3]));
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!is) throw ValidationError("checkpoint: truncated file '" + path + "'");
    out.push_back(NamedTensor{std::move(name), std::move(t)});
  }
  return out;
}

/// Copies checkpoint tensors into an already-built store. The name sets must
/// match exactly and every shape must agree, so a checkpoint from a different
/// geometry is rejected with a diagnostic instead of partially applied.
inline void adopt_checkpoint(ParamStore& store, const std::vector<NamedTensor>& loaded,
                             const std::string& path) {
  require(loaded.size() == store.size(),
          "checkpoint: '" + path + "' holds " + std::to_string(loaded.size()) +
              " tensors but the model has " + std::to_string(store.size()) + " parameters");
  for (const NamedTensor& nt : loaded) {
    require(store.has(nt.name), "checkpoint: unexpected tensor '" + nt.name + "' in '" + path + "'");
    Param& p = store.at(nt.name);
    require(p.value.same_shape(nt.value),
            "checkpoint: shape mismatch for '" + nt.name + "': model expects [" +
                p.value.shape_str() + "], file has [" + nt.value.shape_str() + "]");
  }
  for (const NamedTensor& nt : loaded) store.at(nt.name).value = nt.value;
}

}  // namespace enfnet
