#pragma once

// Little-endian byte packing shared by the checkpoint and index formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "pdn/common.h"

namespace pdn::detail {

class ByteWriter {
 public:
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::byte*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      unsigned char tmp[sizeof(T)];
      std::memcpy(tmp, &v, sizeof(T));
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
      raw(tmp, sizeof(T));
    } else {
      raw(&v, sizeof(T));
    }
  }
  void str(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void seal() {
    Fnv1a h;
    h.update(bytes_);
    put<std::uint64_t>(h.digest());
  }
  std::vector<std::byte>& bytes() { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::byte> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IntegrityError(what_ + ": truncated at byte " + std::to_string(pos_));
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
      unsigned char tmp[sizeof(T)];
      std::memcpy(tmp, &v, sizeof(T));
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
      std::memcpy(&v, tmp, sizeof(T));
    }
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void expect_magic(std::string_view magic) {
    need(magic.size());
    if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0) throw IntegrityError(what_ + ": bad magic");
    pos_ += magic.size();
  }
  /// Verifies the trailing FNV-1a checksum; must be called before parsing the body.
  void verify_seal() const {
    if (bytes_.size() < 8) throw IntegrityError(what_ + ": truncated (no checksum)");
    Fnv1a h;
    h.update(bytes_.first(bytes_.size() - 8));
    ByteReader tail(bytes_.last(8), what_);
    if (tail.get<std::uint64_t>() != h.digest()) throw IntegrityError(what_ + ": checksum mismatch (truncated or corrupt)");
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace pdn::detail
