#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinface/numerics/autograd.hpp"

namespace kinface::data {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary layout, all integers little-endian:
//   "KSNC" | u32 version | u32 entry count
//   per entry: u16 name length | UTF-8 name | u8 dtype | u8 rank | rank x u64 dims | raw values
//   u32 CRC-32 of every preceding byte
inline constexpr char kCheckpointMagic[4] = {'K', 'S', 'N', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { Float32 = 0, Float64 = 1 };

struct CheckpointEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::Float32;
  std::vector<std::uint8_t> raw;  // little-endian values

  std::size_t element_size() const { return dtype == DType::Float32 ? 4 : 8; }

  template <Real T>
  Tensor<T> as_tensor() const {
    constexpr DType want = std::is_same_v<T, float> ? DType::Float32 : DType::Float64;
    if (dtype != want) throw CheckpointError("entry " + name + " has a different dtype");
    std::vector<T> values(shape_size(shape));
    for (std::size_t i = 0; i < values.size(); ++i) {
      using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
      Bits b = 0;
      for (std::size_t k = 0; k < sizeof(Bits); ++k) b |= static_cast<Bits>(raw[i * sizeof(Bits) + k]) << (8 * k);
      values[i] = std::bit_cast<T>(b);
    }
    return Tensor<T>(shape, std::move(values));
  }

  template <Real T>
  static CheckpointEntry from(std::string name, const Tensor<T>& t) {
    using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
    CheckpointEntry e{std::move(name), t.shape(), std::is_same_v<T, float> ? DType::Float32 : DType::Float64, {}};
    e.raw.reserve(t.size() * sizeof(Bits));
    for (T v : t.data()) {
      const Bits b = std::bit_cast<Bits>(v);
      for (std::size_t k = 0; k < sizeof(Bits); ++k) e.raw.push_back(static_cast<std::uint8_t>(b >> (8 * k)));
    }
    return e;
  }
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    for (std::size_t k = 0; k < sizeof(U); ++k) bytes.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * k)));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<std::uint64_t>(data_[pos_ + k]) << (8 * k);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw CheckpointError("corrupt checkpoint: truncated data");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t chunk = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(chunk));
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::set<std::string> seen;
  detail::ByteWriter w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(ckpt.format_version);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    if (!seen.insert(e.name).second) throw CheckpointError("duplicate checkpoint entry " + e.name);
    if (e.name.size() > 0xFFFF) throw CheckpointError("entry name too long: " + e.name);
    if (e.shape.size() > 0xFF) throw CheckpointError("entry rank too large: " + e.name);
    if (e.raw.size() != shape_size(e.shape) * e.element_size())
      throw CheckpointError("entry " + e.name + " payload does not match its shape");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.put<std::uint64_t>(d);
    w.put_bytes(e.raw.data(), e.raw.size());
  }
  w.put<std::uint32_t>(detail::crc32_of(w.bytes));
  return std::move(w.bytes);
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) throw CheckpointError("corrupt checkpoint: file too short");
  const auto body = bytes.first(bytes.size() - 4);
  detail::ByteReader tail(bytes.last(4));
  if (tail.get<std::uint32_t>() != detail::crc32_of(body))
    throw CheckpointError("corrupt checkpoint: checksum mismatch (truncated or damaged file)");

  detail::ByteReader r(body);
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) throw CheckpointError("not a checkpoint: bad magic");
  Checkpoint ckpt;
  ckpt.format_version = r.get<std::uint32_t>();
  if (ckpt.format_version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ckpt.format_version));
  const auto count = r.get<std::uint32_t>();
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto len = r.get<std::uint16_t>();
    const auto name = r.take(len);
    e.name.assign(name.begin(), name.end());
    if (!seen.insert(e.name).second) throw CheckpointError("corrupt checkpoint: duplicate entry " + e.name);
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw CheckpointError("corrupt checkpoint: unknown dtype code " + std::to_string(dtype));
    e.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>();
      if (d == 0) throw CheckpointError("corrupt checkpoint: zero dimension in " + e.name);
      e.shape.push_back(static_cast<std::size_t>(d));
    }
    const auto payload = r.take(shape_size(e.shape) * e.element_size());
    e.raw.assign(payload.begin(), payload.end());
    ckpt.entries.push_back(std::move(e));
  }
  if (r.position() != body.size()) throw CheckpointError("corrupt checkpoint: trailing bytes");
  return ckpt;
}

template <Real T>
Checkpoint make_checkpoint(const ParameterSet<T>& params) {
  Checkpoint ckpt;
  for (const auto& p : params) ckpt.entries.push_back(CheckpointEntry::from(p.name(), p.value()));
  return ckpt;
}

/// Writes under an exclusive advisory lock on the target file.
inline void write_file_locked(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT, 0644);
  if (fd < 0) throw CheckpointError("cannot open " + path.string() + " for writing");
  struct Closer {
    int fd;
    ~Closer() {
      ::flock(fd, LOCK_UN);
      ::close(fd);
    }
  } closer{fd};
  if (::flock(fd, LOCK_EX) != 0) throw CheckpointError("cannot lock " + path.string());
  if (::ftruncate(fd, 0) != 0) throw CheckpointError("cannot truncate " + path.string());
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
    if (n <= 0) throw CheckpointError("write failed for " + path.string());
    off += static_cast<std::size_t>(n);
  }
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

template <Real T>
void save_checkpoint(const ParameterSet<T>& params, const std::filesystem::path& path) {
  write_file_locked(path, encode_checkpoint(make_checkpoint(params)));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

/**
 * Copies checkpoint values into `params`. The name sets must match exactly
 * and every shape must agree; otherwise nothing is modified and the error
 * lists the offending names.
 */
template <Real T>
void restore_parameters(const Checkpoint& ckpt, ParameterSet<T>& params) {
  std::vector<std::string> missing, extra, mismatched;
  std::set<std::string> expected;
  for (const auto& p : params) {
    expected.insert(p.name());
    const auto* e = ckpt.find(p.name());
    if (!e)
      missing.push_back(p.name());
    else if (e->shape != p.value().shape())
      mismatched.push_back(p.name() + " " + shape_string(e->shape) + " vs " + shape_string(p.value().shape()));
  }
  for (const auto& e : ckpt.entries)
    if (!expected.count(e.name)) extra.push_back(e.name);
  if (!missing.empty() || !extra.empty() || !mismatched.empty()) {
    std::string msg = "checkpoint does not match architecture;";
    auto list = [&](const char* what, const std::vector<std::string>& names) {
      if (names.empty()) return;
      msg += std::string(" ") + what + ":";
      for (const auto& n : names) msg += " " + n;
      msg += ";";
    };
    list("missing", missing);
    list("extra", extra);
    list("shape mismatch", mismatched);
    throw CheckpointError(msg);
  }
  std::vector<Tensor<T>> values;
  for (const auto& p : params) values.push_back(ckpt.find(p.name())->template as_tensor<T>());
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value() = std::move(values[i]);
}

template <Real T>
void load_checkpoint_into(const std::filesystem::path& path, ParameterSet<T>& params) {
  const Checkpoint ckpt = load_checkpoint(path);
  restore_parameters(ckpt, params);
}

}  // namespace kinface::data
