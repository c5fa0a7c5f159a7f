// Copyright 2026 The salfb Authors
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

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "salfb/common.hpp"

namespace salfb::detail {

inline void append_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void append_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void append_f32le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  append_u32le(out, bits);
}

/// Cursor over an in-memory file image; every failure names the byte offset
/// and what was expected there.
class ByteReader {
 public:
  ByteReader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  std::size_t offset() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }
  bool exhausted() const { return pos_ >= bytes_.size(); }
  const std::string& bytes() const { return bytes_; }

  void require(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw IoError(origin_ + ": truncated file, expected " + std::to_string(n) + " bytes of " + what +
                    " at offset " + std::to_string(pos_) + " but only " + std::to_string(bytes_.size() - pos_) +
                    " remain (file is " + std::to_string(bytes_.size()) + " bytes)");
    }
  }

  std::uint8_t take_u8(const char* what) {
    require(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint16_t take_u16le(const char* what) {
    require(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }

  std::uint32_t take_u32le(const char* what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }

  float take_f32le(const char* what) {
    const std::uint32_t bits = take_u32le(what);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string take_bytes(std::size_t n, const char* what) {
    require(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void skip(std::size_t n) { pos_ += n; }

  const std::string& origin() const { return origin_; }

 private:
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void spew(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace salfb::detail
