#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "snapper/ephemeris.hpp"

namespace snapper::rinex {

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct NavFile {
  double version = 0.0;
  std::vector<GpsEphemeris> ephemerides;
  // Records of other constellations that were skipped.
  std::size_t skipped_records = 0;
};

// Parses a RINEX 3.x (or 2.x GPS) navigation file. Only GPS records are kept.
NavFile parse_nav(std::string_view text);
NavFile read_nav_file(const std::string& path);

// Writes RINEX 3.04 GPS navigation text.
std::string write_nav(const std::vector<GpsEphemeris>& ephemerides);

}  // namespace snapper::rinex
