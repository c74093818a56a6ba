#include "sinkdem/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <vector>

namespace sinkdem::nn {

namespace {

constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::ifstream& f, std::uint32_t& v) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace

void save_checkpoint(const std::string& path, const Network& net) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open for write: " + path);
  f.write("SDNC", 4);
  put_u32(f, kVersion);
  for (const auto& p : net.params) {
    put_u32(f, static_cast<std::uint32_t>(p.name.size()));
    f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(f, static_cast<std::uint32_t>(p.value.shape.size()));
    for (int d : p.value.shape) put_u32(f, static_cast<std::uint32_t>(d));
    static_assert(sizeof(float) == 4);
    // f32 payload, little-endian (native on every supported target)
    f.write(reinterpret_cast<const char*>(p.value.data.data()),
            static_cast<std::streamsize>(p.value.data.size() * 4));
  }
  if (!f) throw IoError("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, Network& net) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open for read: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "SDNC", 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  if (!get_u32(f, version) || version != kVersion)
    throw FormatError("checkpoint: unsupported version in " + path);

  std::set<std::string> seen;
  std::uint32_t name_len = 0;
  while (get_u32(f, name_len)) {
    std::string name(name_len, '\0');
    if (!f.read(name.data(), name_len))
      throw FormatError("checkpoint: truncated name in " + path);
    std::uint32_t rank = 0;
    if (!get_u32(f, rank)) throw FormatError("checkpoint: truncated rank in " + path);
    std::vector<int> shape(rank);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint32_t d = 0;
      if (!get_u32(f, d)) throw FormatError("checkpoint: truncated dims in " + path);
      shape[i] = static_cast<int>(d);
      count *= d;
    }
    const int pi = net.param_index(name);
    if (pi < 0) throw FormatError("checkpoint: unknown parameter '" + name + "'");
    auto& tensor = net.params[static_cast<std::size_t>(pi)].value;
    if (tensor.shape != shape)
      throw FormatError("checkpoint: shape mismatch on '" + name + "'");
    if (!f.read(reinterpret_cast<char*>(tensor.data.data()),
                static_cast<std::streamsize>(count * 4)))
      throw FormatError("checkpoint: truncated payload for '" + name + "'");
    seen.insert(name);
  }
  for (const auto& p : net.params)
    if (!seen.count(p.name))
      throw FormatError("checkpoint: file missing parameter '" + p.name + "'");
}

}  // namespace sinkdem::nn
