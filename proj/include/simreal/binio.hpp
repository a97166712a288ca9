#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "simreal/common.hpp"

namespace simreal::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&value);
    buffer_.insert(buffer_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }
  void put_doubles(const double* data, std::size_t n) {
    const auto* p = reinterpret_cast<const char*>(data);
    buffer_.insert(buffer_.end(), p, p + n * sizeof(double));
  }
  const std::vector<char>& bytes() const { return buffer_; }

 private:
  std::vector<char> buffer_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size, std::string what) : data_(data), size_(size), what_(std::move(what)) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  std::string get_bytes(std::size_t n) { return std::string(take(n), n); }
  void get_doubles(double* out, std::size_t n) {
    const char* src = take(n * sizeof(double));
    if (n > 0) std::memcpy(out, src, n * sizeof(double));
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const char* take(std::size_t n) {
    if (n > size_ - pos_) throw TruncatedError(what_ + ": truncated file");
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& bytes);

}  // namespace simreal::binio
