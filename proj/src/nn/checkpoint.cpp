#include "cefnet/nn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cefnet::nn {

namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw std::runtime_error("checkpoint truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Snapshot& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_le<std::uint8_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) put_le<std::uint64_t>(os, d);
    for (double v : r.values) put_le<double>(os, v);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Snapshot load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw std::runtime_error("not a checkpoint file (bad magic): " + path.string());
  }
  const auto version = get_le<std::uint8_t>(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(is);
  Snapshot out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    StateRecord r;
    r.name.resize(get_le<std::uint32_t>(is));
    if (!is.read(r.name.data(), static_cast<std::streamsize>(r.name.size()))) {
      throw std::runtime_error("checkpoint truncated in record name");
    }
    const auto rank = get_le<std::uint32_t>(is);
    for (std::uint32_t d = 0; d < rank; ++d) r.shape.push_back(static_cast<std::size_t>(get_le<std::uint64_t>(is)));
    r.values.resize(ad::numel_of(r.shape));
    for (auto& v : r.values) v = get_le<double>(is);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cefnet::nn
