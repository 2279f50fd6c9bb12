#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snapper/constants.hpp"
#include "snapper/error.hpp"
#include "snapper/geodesy.hpp"

namespace snapper {

// One 12 ms, 1-bit capture plus the metadata the tag records with it.
// Samples are kept packed: bit i of byte i/8 (LSB first) is sample i, 1 = +1.
struct Snapshot {
  std::uint64_t timestamp_ms = 0;  // receiver clock, ms since Unix epoch
  std::int16_t temperature_centi_c = 0;
  std::uint16_t battery_mv = 0;
  std::vector<std::uint8_t> payload;

  static constexpr std::uint16_t kMinValidBatteryMv = 3000;
  static constexpr std::uint16_t kMaxValidBatteryMv = 4200;
  static constexpr std::uint16_t kMaxDecodableBatteryMv = 5500;

  double temperature_c() const { return temperature_centi_c / 100.0; }
  double battery_v() const { return battery_mv / 1000.0; }
  bool battery_valid() const { return battery_mv >= kMinValidBatteryMv && battery_mv <= kMaxValidBatteryMv; }

  // Unpacked ±1 samples; requires a full-length payload.
  std::vector<std::int8_t> samples() const;

  static Snapshot from_samples(std::uint64_t timestamp_ms, double temperature_c, double battery_v,
                               std::span<const std::int8_t> samples);

  friend bool operator==(const Snapshot&, const Snapshot&) = default;
};

struct Dataset {
  std::uint64_t device_id = 0;
  std::vector<Snapshot> snapshots;
  Geodetic a_priori;
  // Not part of the file format; decoding restores the default.
  double a_priori_uncertainty_m = 10'000.0;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

std::string format_device_id(std::uint64_t id);
// Accepts exactly 16 hex digits. Throws std::invalid_argument.
std::uint64_t parse_device_id(const std::string& hex);

// Packs ±1 samples LSB-first; unused high bits of the final byte are zero.
std::vector<std::uint8_t> pack_bits(std::span<const std::int8_t> samples);
std::vector<std::int8_t> unpack_bits(std::span<const std::uint8_t> bytes, std::size_t n);

class DatasetFormatError : public Error {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, InvalidSnapshot, InvalidField, TrailingBytes };

  DatasetFormatError(Kind kind, std::string message, std::optional<std::size_t> record = std::nullopt)
      : Error(std::move(message)), kind_(kind), record_(record) {}

  Kind kind() const { return kind_; }
  std::optional<std::size_t> record_index() const { return record_; }

 private:
  Kind kind_;
  std::optional<std::size_t> record_;
};

// ".snpr" dataset file: little-endian, 33-byte header followed by
// 12-byte record headers each carrying a 6 138-byte packed payload.
namespace snpr {
inline constexpr char kMagic[4] = {'S', 'N', 'P', 'R'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 33;
inline constexpr std::size_t kRecordHeaderBytes = 12;
inline constexpr std::size_t kRecordBytes = kRecordHeaderBytes + SignalConstants::kPayloadBytes;

void append_record(std::vector<std::uint8_t>& out, const Snapshot& s);
// Decodes exactly kRecordBytes bytes.
Snapshot read_record(std::span<const std::uint8_t> record);
}  // namespace snpr

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

}  // namespace snapper
