// Copyright 2026 The adagg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adagg/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <istream>
#include <ostream>

#include "adagg/error.hpp"

namespace adagg::io {

namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  out.write(buf.data(), buf.size());
}

}  // namespace

void Writer::magic(std::string_view tag) { out_.write(tag.data(), static_cast<std::streamsize>(tag.size())); }
void Writer::u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
void Writer::u32(std::uint32_t v) { put_le(out_, v); }
void Writer::u64(std::uint64_t v) { put_le(out_, v); }
void Writer::f64(double v) { put_le(out_, std::bit_cast<std::uint64_t>(v)); }

void Writer::f64s(std::span<const double> v) {
  for (double x : v) f64(x);
}

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void Reader::read_exact(char* dst, std::size_t n) {
  in_.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw FormatError("unexpected end of container");
  }
}

void Reader::expect_magic(std::string_view tag) {
  std::string got(tag.size(), '\0');
  read_exact(got.data(), got.size());
  if (got != tag) {
    throw FormatError("bad magic: expected '" + std::string(tag) + "'");
  }
}

std::uint8_t Reader::u8() {
  char c = 0;
  read_exact(&c, 1);
  return static_cast<std::uint8_t>(c);
}

std::uint32_t Reader::u32() {
  std::array<unsigned char, 4> b{};
  read_exact(reinterpret_cast<char*>(b.data()), b.size());
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

std::uint64_t Reader::u64() {
  std::array<unsigned char, 8> b{};
  read_exact(reinterpret_cast<char*>(b.data()), b.size());
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

void Reader::f64s(std::span<double> out) {
  for (double& x : out) x = f64();
}

std::string Reader::str() {
  const std::uint32_t n = u32();
  if (n > (1u << 26)) throw FormatError("string length out of range");
  std::string s(n, '\0');
  read_exact(s.data(), n);
  return s;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace adagg::io
