#pragma once

// Binary parameter checkpoints:
//   "MUMT" | u32 version | records...
//   record = u32 name_len | name (UTF-8) | u32 rank | u64 dims[rank] | f32 payload
// All integers and floats little-endian. Records run to end of file.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "metaumt/param_set.hpp"

namespace metaumt {

inline constexpr std::array<char, 4> kCheckpointMagic{'M', 'U', 'M', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename U>
void write_le(std::ostream& os, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
bool read_le(std::istream& is, U& value) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  std::memcpy(&value, bytes, sizeof(U));
  return true;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const ParamSet& params) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& shape = params[i].shape();
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) detail::write_le<std::uint64_t>(os, d);
    for (float v : params[i].data()) detail::write_le<float>(os, v);
  }
  if (!os) throw CheckpointError("checkpoint: write failed");
}

inline ParamSet read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw CheckpointError("checkpoint: bad magic");
  std::uint32_t version = 0;
  if (!detail::read_le(is, version)) throw CheckpointError("checkpoint: truncated header");
  if (version != kCheckpointVersion) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  ParamSet params;
  std::uint32_t name_len = 0;
  while (detail::read_le(is, name_len)) {
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!is.read(name.data(), name_len) || !detail::read_le(is, rank)) throw CheckpointError("checkpoint: truncated record");
    Shape shape(rank);
    for (auto& d : shape)
      if (!detail::read_le(is, d)) throw CheckpointError("checkpoint: truncated dims for '" + name + "'");
    std::vector<float> data(numel(shape));
    for (auto& v : data)
      if (!detail::read_le(is, v)) throw CheckpointError("checkpoint: truncated payload for '" + name + "'");
    params.add(name, Tensor(std::move(shape), std::move(data)));
  }
  if (!is.eof() || is.gcount() != 0) throw CheckpointError("checkpoint: truncated record header");
  return params;
}

inline void save_checkpoint(const std::string& path, const ParamSet& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
  write_checkpoint(os, params);
}

inline ParamSet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace metaumt
