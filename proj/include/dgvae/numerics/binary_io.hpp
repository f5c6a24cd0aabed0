#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "dgvae/error.hpp"
#include "dgvae/numerics/tensor.hpp"

namespace dgvae::bin {

// Fixed little-endian encoding regardless of host byte order.

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline void put_string(std::ostream& out, std::string_view s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void put_tensor(std::ostream& out, const DenseTensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u64(out, e);
  for (double v : t.values()) put_f64(out, v);
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(source_ + ": truncated file");
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string string(std::size_t max_len = 1u << 24) {
    const auto n = u64();
    if (n > max_len) throw FormatError(source_ + ": string length out of range");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  DenseTensor tensor() {
    const auto rank = u32();
    if (rank == 0 || rank > 4) throw FormatError(source_ + ": bad tensor rank");
    std::vector<std::size_t> shape(rank);
    std::uint64_t total = 1;
    for (auto& e : shape) {
      e = u64();
      if (e == 0 || e > (1ull << 32)) throw FormatError(source_ + ": bad tensor extent");
      total *= e;
      if (total > (1ull << 34)) throw FormatError(source_ + ": tensor too large");
    }
    DenseTensor t(shape);
    for (double& v : t.values()) v = f64();
    return t;
  }

  void expect_magic(std::string_view magic) {
    std::string got(magic.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(magic.size()));
    if (static_cast<std::size_t>(in_.gcount()) != magic.size() || got != magic)
      throw FormatError(source_ + ": bad magic header (not a " + std::string(magic) + " file)");
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  const std::string& source() const { return source_; }

 private:
  std::istream& in_;
  std::string source_;
};

}  // namespace dgvae::bin
