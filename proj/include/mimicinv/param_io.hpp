// Copyright 2026 The mimicinv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Parameter files. Little-endian, no padding:
//
//   "MGNW"  u32 version(=1)  u32 count
//   count x { u16 name_len, name bytes (UTF-8), u8 rank, u32 extents[rank],
//             f64 data[prod(extents)] (row-major) }

#ifndef MIMICINV_PARAM_IO_HPP
#define MIMICINV_PARAM_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "mimicinv/nn.hpp"

namespace mimicinv {

inline constexpr char kParamMagic[4] = {'M', 'G', 'N', 'W'};
inline constexpr std::uint32_t kParamVersion = 1;

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(u >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                    std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    need(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return std::bit_cast<T>(u);
  }

  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const noexcept { return pos_ == bytes_.size(); }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("parameter file truncated");
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_params(const Params& params) {
  std::vector<unsigned char> out(std::begin(kParamMagic), std::end(kParamMagic));
  detail::put_le<std::uint32_t>(out, kParamVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) throw FormatError("parameter name too long: " + name);
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw FormatError("tensor rank too large: " + name);
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) {
      if (e > std::numeric_limits<std::uint32_t>::max()) throw FormatError("extent too large: " + name);
      detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    }
    for (double v : t.data()) detail::put_le<double>(out, v);
  }
  return out;
}

inline Params decode_params(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kParamMagic, 4) != 0) {
    throw FormatError("bad magic: not a parameter file");
  }
  detail::ByteReader in(bytes.subspan(4));
  const auto version = in.get<std::uint32_t>();
  if (version != kParamVersion) throw FormatError("unsupported parameter file version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  Params params;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = in.get<std::uint16_t>();
    std::string name = in.string(len);
    const auto rank = in.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& e : shape) e = in.get<std::uint32_t>();
    const std::size_t n = numel(shape);
    if (n > in.remaining() / 8) throw FormatError("parameter file truncated in tensor " + name);
    std::vector<double> data(n);
    for (auto& v : data) v = in.get<double>();
    if (!params.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw FormatError("duplicate tensor name " + name);
    }
  }
  if (!in.done()) throw FormatError("trailing bytes after parameter table");
  return params;
}

inline void save_params(const Params& params, const std::string& path) {
  auto bytes = encode_params(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline Params load_params(const std::string& path) { return decode_params(read_file_bytes(path)); }

/// Load and validate against a network's slot table.
inline Params load_params(const std::string& path, const Network& net) {
  Params p = load_params(path);
  try {
    check_params(net, p);
  } catch (const ShapeError& e) {
    throw FormatError(path + ": shape table mismatch: " + e.what());
  }
  return p;
}

}  // namespace mimicinv

#endif  // MIMICINV_PARAM_IO_HPP
