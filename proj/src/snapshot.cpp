#include "snapper/snapshot.hpp"

#include "snapper/byte_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace snapper {
namespace {

using Kind = DatasetFormatError::Kind;
using io::Reader;
using io::Writer;

void validate_a_priori(const Geodetic& g) {
  if (!(g.lat_deg >= -90.0 && g.lat_deg <= 90.0) || !(g.lon_deg >= -180.0 && g.lon_deg <= 180.0)) {
    throw DatasetFormatError(Kind::InvalidField, "a-priori position out of range");
  }
}

}  // namespace

std::vector<std::int8_t> Snapshot::samples() const {
  if (payload.size() != SignalConstants::kPayloadBytes) {
    throw std::invalid_argument("snapshot payload must be " + std::to_string(SignalConstants::kPayloadBytes) + " bytes");
  }
  return unpack_bits(payload, SignalConstants::kSamplesPerSnapshot);
}

Snapshot Snapshot::from_samples(std::uint64_t timestamp_ms, double temperature_c, double battery_v,
                                std::span<const std::int8_t> samples) {
  if (samples.size() != SignalConstants::kSamplesPerSnapshot) {
    throw std::invalid_argument("snapshot must hold exactly 49104 samples");
  }
  Snapshot s;
  s.timestamp_ms = timestamp_ms;
  s.temperature_centi_c = static_cast<std::int16_t>(std::lround(temperature_c * 100.0));
  s.battery_mv = static_cast<std::uint16_t>(std::lround(std::clamp(battery_v, 0.0, 65.535) * 1000.0));
  s.payload = pack_bits(samples);
  return s;
}

std::string format_device_id(std::uint64_t id) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, id >>= 4) out[static_cast<std::size_t>(i)] = kHex[id & 0xF];
  return out;
}

std::uint64_t parse_device_id(const std::string& hex) {
  if (hex.size() != 16) throw std::invalid_argument("device id must be 16 hex digits");
  std::uint64_t v = 0;
  for (char c : hex) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw std::invalid_argument("device id must be 16 hex digits");
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return v;
}

std::vector<std::uint8_t> pack_bits(std::span<const std::int8_t> samples) {
  std::vector<std::uint8_t> out((samples.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto s = samples[i];
    if (s == 1) {
      out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    } else if (s != -1) {
      throw std::invalid_argument("sample " + std::to_string(i) + " is not +1 or -1");
    }
  }
  return out;
}

std::vector<std::int8_t> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t n) {
  if (n > bytes.size() * 8) {
    throw std::invalid_argument("requested " + std::to_string(n) + " samples from " + std::to_string(bytes.size() * 8) +
                                " available bits");
  }
  std::vector<std::int8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (bytes[i / 8] >> (i % 8)) & 1u ? 1 : -1;
  return out;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  validate_a_priori(dataset.a_priori);
  for (std::size_t i = 0; i < dataset.snapshots.size(); ++i) {
    const Snapshot& s = dataset.snapshots[i];
    if (s.payload.size() != SignalConstants::kPayloadBytes) {
      throw DatasetFormatError(Kind::InvalidSnapshot,
                               "snapshot " + std::to_string(i) + " has " + std::to_string(s.payload.size()) +
                                   " payload bytes, expected " + std::to_string(SignalConstants::kPayloadBytes),
                               i);
    }
    if (i > 0 && s.timestamp_ms <= dataset.snapshots[i - 1].timestamp_ms) {
      throw DatasetFormatError(Kind::InvalidSnapshot,
                               "snapshot " + std::to_string(i) + " timestamp is not strictly increasing", i);
    }
  }
  std::vector<std::uint8_t> out;
  out.reserve(snpr::kHeaderBytes + dataset.snapshots.size() * snpr::kRecordBytes);
  Writer w(out);
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(snpr::kMagic), 4});
  w.put(snpr::kVersion);
  w.put(dataset.device_id);
  w.put(static_cast<std::uint32_t>(dataset.snapshots.size()));
  w.put(dataset.a_priori.lat_deg);
  w.put(dataset.a_priori.lon_deg);
  for (const Snapshot& s : dataset.snapshots) snpr::append_record(out, s);
  return out;
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), snpr::kMagic, 4) != 0) {
    throw DatasetFormatError(Kind::BadMagic, "bad magic");
  }
  if (bytes.size() < snpr::kHeaderBytes) throw DatasetFormatError(Kind::Truncated, "truncated header");
  Reader r(bytes.subspan(4));
  if (const auto version = r.get<std::uint8_t>(); version != snpr::kVersion) {
    throw DatasetFormatError(Kind::VersionMismatch, "unsupported format version " + std::to_string(version));
  }
  Dataset d;
  d.device_id = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  d.a_priori.lat_deg = r.get<double>();
  d.a_priori.lon_deg = r.get<double>();
  validate_a_priori(d.a_priori);

  d.snapshots.reserve(std::min<std::size_t>(count, r.remaining() / snpr::kRecordBytes + 1));
  for (std::uint32_t i = 0; i < count; ++i) {
    if (r.remaining() < snpr::kRecordBytes) {
      throw DatasetFormatError(Kind::Truncated, "truncated record " + std::to_string(i), i);
    }
    Snapshot s = snpr::read_record(r.get_bytes(snpr::kRecordBytes));
    if (s.battery_mv > Snapshot::kMaxDecodableBatteryMv) {
      throw DatasetFormatError(Kind::InvalidField, "record " + std::to_string(i) + " battery voltage out of range", i);
    }
    if (!d.snapshots.empty() && s.timestamp_ms <= d.snapshots.back().timestamp_ms) {
      throw DatasetFormatError(Kind::InvalidField, "record " + std::to_string(i) + " timestamp is not increasing", i);
    }
    d.snapshots.push_back(std::move(s));
  }
  if (r.remaining() != 0) {
    throw DatasetFormatError(Kind::TrailingBytes, std::to_string(r.remaining()) + " bytes after final record");
  }
  return d;
}

namespace snpr {

void append_record(std::vector<std::uint8_t>& out, const Snapshot& s) {
  if (s.payload.size() != SignalConstants::kPayloadBytes) {
    throw std::invalid_argument("snapshot payload must be " + std::to_string(SignalConstants::kPayloadBytes) + " bytes");
  }
  Writer w(out);
  w.put(s.timestamp_ms);
  w.put(s.temperature_centi_c);
  w.put(s.battery_mv);
  w.put_bytes(s.payload);
}

Snapshot read_record(std::span<const std::uint8_t> record) {
  if (record.size() != kRecordBytes) throw std::invalid_argument("record must be " + std::to_string(kRecordBytes) + " bytes");
  Reader r(record);
  Snapshot s;
  s.timestamp_ms = r.get<std::uint64_t>();
  s.temperature_centi_c = r.get<std::int16_t>();
  s.battery_mv = r.get<std::uint16_t>();
  const auto payload = r.get_bytes(SignalConstants::kPayloadBytes);
  s.payload.assign(payload.begin(), payload.end());
  return s;
}

}  // namespace snpr

}  // namespace snapper
