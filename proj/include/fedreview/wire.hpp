#pragma once

// Binary message format shared by the socket transport and .fedlora
// checkpoints. Little-endian throughout:
//
//   "FDLR" | version u16 | msg_type u8 | round u32 | client_id u32 |
//   sample_count u64 | entry_count u32 |
//   entry_count x { name_len u16 | name | rows u32 | cols u32 | rows*cols f64 } |
//   crc32 u32 over every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "fedreview/lora.hpp"

namespace fedreview {

inline constexpr std::uint16_t kWireVersion = 1;
inline constexpr char kWireMagic[4] = {'F', 'D', 'L', 'R'};

enum class MessageType : std::uint8_t { update = 1, aggregate = 2, done = 3 };

inline std::string to_string(MessageType t) {
  switch (t) {
    case MessageType::update:
      return "update";
    case MessageType::aggregate:
      return "aggregate";
    case MessageType::done:
      return "done";
  }
  return "?";
}

struct WireMessage {
  MessageType type = MessageType::update;
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::uint64_t sample_count = 0;
  std::vector<NamedEntry> entries;

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

// What a client shares after local training.
struct AdapterUpdate {
  std::uint32_t client_id = 0;
  std::uint32_t round = 0;
  std::uint64_t sample_count = 0;
  std::vector<NamedEntry> entries;

  friend bool operator==(const AdapterUpdate&, const AdapterUpdate&) = default;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace detail {

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* field) {
    need(sizeof(U), field);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  double get_f64(const char* field) { return std::bit_cast<double>(get<std::uint64_t>(field)); }
  std::string get_string(std::size_t n, const char* field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) throw ProtocolError(std::string("message truncated in field ") + field);
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_message(const WireMessage& m) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kWireMagic, 4));
  w.put(kWireVersion);
  w.put(static_cast<std::uint8_t>(m.type));
  w.put(m.round);
  w.put(m.client_id);
  w.put(m.sample_count);
  if (m.entries.size() > UINT32_MAX) throw ProtocolError("too many entries for entry_count");
  w.put(static_cast<std::uint32_t>(m.entries.size()));
  for (const auto& e : m.entries) {
    if (e.name.size() > UINT16_MAX) throw ProtocolError("entry name too long for name_len: " + e.name);
    if (e.value.rows() > UINT32_MAX || e.value.cols() > UINT32_MAX) {
      throw ProtocolError("entry '" + e.name + "' too large for rows/cols");
    }
    w.put(static_cast<std::uint16_t>(e.name.size()));
    w.put_bytes(e.name);
    w.put(static_cast<std::uint32_t>(e.value.rows()));
    w.put(static_cast<std::uint32_t>(e.value.cols()));
    for (double v : e.value.values()) w.put_f64(v);
  }
  const std::uint32_t crc = crc32_of(w.bytes());
  w.put(crc);
  return std::move(w.bytes());
}

inline WireMessage decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw ProtocolError("message truncated in field crc32");
  const std::span<const std::uint8_t> body = bytes.first(bytes.size() - 4);
  detail::ByteReader tail(bytes.last(4));
  detail::ByteReader r(body);

  if (r.get_string(4, "magic") != std::string_view(kWireMagic, 4)) throw ProtocolError("bad magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kWireVersion) {
    throw ProtocolError("unsupported version " + std::to_string(version) + " (expected " +
                        std::to_string(kWireVersion) + ")");
  }
  if (tail.get<std::uint32_t>("crc32") != crc32_of(body)) throw ProtocolError("crc32 mismatch");
  WireMessage m;
  const auto type = r.get<std::uint8_t>("msg_type");
  if (type < 1 || type > 3) throw ProtocolError("unknown msg_type " + std::to_string(type));
  m.type = static_cast<MessageType>(type);
  m.round = r.get<std::uint32_t>("round");
  m.client_id = r.get<std::uint32_t>("client_id");
  m.sample_count = r.get<std::uint64_t>("sample_count");
  const auto count = r.get<std::uint32_t>("entry_count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("name_len");
    NamedEntry e;
    e.name = r.get_string(len, "name");
    const auto rows = r.get<std::uint32_t>("rows");
    const auto cols = r.get<std::uint32_t>("cols");
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
    if (n > r.remaining() / 8) throw ProtocolError("message truncated in field values of '" + e.name + "'");
    e.value = Matrix(rows, cols);
    for (double& v : e.value.values()) v = r.get_f64("values");
    m.entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw ProtocolError("trailing bytes after entries");
  return m;
}

inline std::vector<std::uint8_t> encode_update(const AdapterUpdate& u) {
  return encode_message({MessageType::update, u.round, u.client_id, u.sample_count, u.entries});
}

inline AdapterUpdate decode_update(std::span<const std::uint8_t> bytes) {
  WireMessage m = decode_message(bytes);
  if (m.type != MessageType::update) {
    throw ProtocolError("msg_type " + to_string(m.type) + " where an update was expected");
  }
  return {m.client_id, m.round, m.sample_count, std::move(m.entries)};
}

// ---------------------------------------------------------------- checkpoints

inline void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path + "'");
}

inline std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_checkpoint(const std::string& path, const AdapterSet& adapters, std::uint32_t round) {
  write_bytes(path, encode_message({MessageType::aggregate, round, 0, 0, export_state(adapters)}));
}

inline WireMessage read_checkpoint(const std::string& path) { return decode_message(read_bytes(path)); }

}  // namespace fedreview
