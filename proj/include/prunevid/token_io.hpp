#pragma once

// PVTG token-grid files:
//   "PVTG" | u32 version (=1) | u32 T | u32 N_v | u32 C | T*N_v*C f32
// All integers and floats little-endian, payload frame-major.

#include "prunevid/core.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace prunevid {

enum class LoadErrorKind { io, bad_magic, bad_version, bad_dimensions, truncated, trailing_bytes, non_finite };

inline const char* to_string(LoadErrorKind kind) noexcept {
  switch (kind) {
    case LoadErrorKind::io: return "io";
    case LoadErrorKind::bad_magic: return "bad_magic";
    case LoadErrorKind::bad_version: return "bad_version";
    case LoadErrorKind::bad_dimensions: return "bad_dimensions";
    case LoadErrorKind::truncated: return "truncated";
    case LoadErrorKind::trailing_bytes: return "trailing_bytes";
    case LoadErrorKind::non_finite: return "non_finite";
  }
  return "unknown";
}

class LoadError : public Error {
 public:
  LoadError(LoadErrorKind kind, const std::string& what)
      : Error(std::string("token grid load error (") + to_string(kind) + "): " + what), kind_(kind) {}
  [[nodiscard]] LoadErrorKind kind() const noexcept { return kind_; }

 private:
  LoadErrorKind kind_;
};

inline constexpr std::array<char, 4> kGridMagic{'P', 'V', 'T', 'G'};
inline constexpr std::uint32_t kGridVersion = 1;
inline constexpr std::size_t kGridHeaderBytes = 20;

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline std::vector<unsigned char> encode_token_grid(const TokenGrid& grid) {
  for (float v : grid.data()) {
    if (!std::isfinite(v)) throw InvalidArgument("refusing to encode a non-finite token grid");
  }
  auto dim = [](std::size_t d) {
    if (d > UINT32_MAX) throw InvalidArgument("token grid dimension exceeds u32");
    return static_cast<std::uint32_t>(d);
  };
  std::vector<unsigned char> out;
  out.reserve(kGridHeaderBytes + grid.data().size() * 4);
  out.insert(out.end(), kGridMagic.begin(), kGridMagic.end());
  detail::put_u32(out, kGridVersion);
  detail::put_u32(out, dim(grid.frames()));
  detail::put_u32(out, dim(grid.tokens_per_frame()));
  detail::put_u32(out, dim(grid.channels()));
  for (float v : grid.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline TokenGrid decode_token_grid(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || !std::equal(kGridMagic.begin(), kGridMagic.end(), bytes.begin())) {
    throw LoadError(LoadErrorKind::bad_magic, "missing PVTG magic");
  }
  if (bytes.size() < kGridHeaderBytes) throw LoadError(LoadErrorKind::truncated, "header shorter than 20 bytes");
  const auto version = detail::get_u32(bytes.data() + 4);
  if (version != kGridVersion) {
    throw LoadError(LoadErrorKind::bad_version, "unsupported version " + std::to_string(version));
  }
  const std::uint64_t frames = detail::get_u32(bytes.data() + 8);
  const std::uint64_t tokens = detail::get_u32(bytes.data() + 12);
  const std::uint64_t channels = detail::get_u32(bytes.data() + 16);
  if (frames == 0 || tokens == 0 || channels == 0) {
    throw LoadError(LoadErrorKind::bad_dimensions, "zero dimension in header");
  }
  // T*N_v*C can overflow u64, so compare via division.
  const std::uint64_t available = (bytes.size() - kGridHeaderBytes) / 4;
  if (frames * tokens > available / channels) {
    throw LoadError(LoadErrorKind::truncated, "payload shorter than T*N_v*C floats");
  }
  const std::uint64_t count = frames * tokens * channels;
  if (bytes.size() != kGridHeaderBytes + count * 4) {
    throw LoadError(LoadErrorKind::trailing_bytes, "payload longer than T*N_v*C floats");
  }
  std::vector<float> data(count);
  const unsigned char* p = bytes.data() + kGridHeaderBytes;
  for (std::uint64_t i = 0; i < count; ++i, p += 4) {
    data[i] = std::bit_cast<float>(detail::get_u32(p));
    if (!std::isfinite(data[i])) {
      throw LoadError(LoadErrorKind::non_finite, "non-finite value at index " + std::to_string(i));
    }
  }
  return TokenGrid(frames, tokens, channels, std::move(data));
}

inline TokenGrid load_token_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadErrorKind::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_token_grid(bytes);
}

inline void save_token_grid(const TokenGrid& grid, const std::filesystem::path& path) {
  const auto bytes = encode_token_grid(grid);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace prunevid
