// syncasr/binary-io.h

// Copyright 2026   syncasr authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Little-endian primitives shared by the checkpoint and feature formats.

#ifndef SYNCASR_BINARY_IO_H_
#define SYNCASR_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace syncasr {

/// Malformed or truncated binary file; the message carries the byte offset.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void WriteU32(std::ostream &os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char *>(b), 4);
}

inline void WriteF64(std::ostream &os, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char *>(b), 8);
}

/// Sequential reader that reports the byte offset of truncation.
class ByteReader {
 public:
  ByteReader(std::istream &is, std::string source)
      : is_(is), source_(std::move(source)) {}

  void Read(void *dst, std::size_t n) {
    is_.read(static_cast<char *>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      throw FormatError(source_ + ": truncated at byte " +
                               std::to_string(pos_ + is_.gcount()) +
                               " (needed " + std::to_string(n) + " more)");
    pos_ += n;
  }

  std::uint32_t U32() {
    unsigned char b[4];
    Read(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  double F64() {
    unsigned char b[8];
    Read(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }

  std::size_t position() const { return pos_; }
  bool AtEnd() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream &is_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace syncasr

#endif  // SYNCASR_BINARY_IO_H_
