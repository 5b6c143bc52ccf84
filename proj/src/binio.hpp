#pragma once

// Little-endian binary helpers shared by the FNOD and FNOM formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "sok/errors.hpp"

namespace sok::binio {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os_.write(buf, sizeof(T));
  }
  void u8(std::uint8_t v) { put(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(v); }
  void f32(float v) { put(v); }
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f64s(const std::vector<double>& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (double x : v) f64(x);
  }
  void u64s(const std::vector<std::size_t>& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (auto x : v) u64(x);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}
  template <class T>
  T get() {
    char buf[sizeof(T)];
    is_.read(buf, sizeof(T));
    if (is_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
      throw IntegrityError(what_ + ": file truncated");
    }
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }
  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return get<double>(); }
  float f32() { return get<float>(); }
  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (is_.gcount() != static_cast<std::streamsize>(n)) throw IntegrityError(what_ + ": file truncated");
  }
  std::uint32_t count(std::uint32_t limit = 1u << 20) {
    const auto n = u32();
    if (n > limit) throw IntegrityError(what_ + ": implausible element count " + std::to_string(n));
    return n;
  }
  std::string str() {
    std::string s(count(), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  std::vector<double> f64s() {
    std::vector<double> v(count());
    for (auto& x : v) x = f64();
    return v;
  }
  std::vector<std::size_t> u64s() {
    std::vector<std::size_t> v(count());
    for (auto& x : v) x = static_cast<std::size_t>(u64());
    return v;
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace sok::binio
