#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <string>

namespace snapper {

// GPS system time split into whole seconds since the GPS epoch
// (1980-01-06T00:00:00) and a fraction in [0, 1). A plain double loses
// sub-microsecond resolution at ~1.4e9 s, which is a whole sample at 4 MHz.
class GpsTime {
 public:
  static constexpr std::int64_t kSecondsPerWeek = 604'800;
  static constexpr std::int64_t kUnixToGpsSeconds = 315'964'800;
  // GPS-UTC offset valid since 2017-01-01.
  static constexpr std::int64_t kLeapSeconds = 18;

  constexpr GpsTime() = default;
  GpsTime(std::int64_t seconds, double fraction) : seconds_(seconds), fraction_(fraction) { normalize(); }

  static GpsTime from_seconds(double s) {
    const double whole = std::floor(s);
    return {static_cast<std::int64_t>(whole), s - whole};
  }
  static GpsTime from_week_tow(int week, double tow) {
    const double whole = std::floor(tow);
    return {week * kSecondsPerWeek + static_cast<std::int64_t>(whole), tow - whole};
  }
  // Unix milliseconds are UTC; the fixed leap-second offset converts to GPS.
  static GpsTime from_unix_ms(std::int64_t unix_ms) {
    const std::int64_t ms = unix_ms - (kUnixToGpsSeconds - kLeapSeconds) * 1000;
    const std::int64_t sec = ms >= 0 ? ms / 1000 : -((-ms + 999) / 1000);
    return {sec, static_cast<double>(ms - sec * 1000) / 1000.0};
  }

  std::int64_t to_unix_ms() const {
    const std::int64_t sec = seconds_ + kUnixToGpsSeconds - kLeapSeconds;
    return sec * 1000 + static_cast<std::int64_t>(std::llround(fraction_ * 1000.0));
  }

  std::int64_t seconds() const { return seconds_; }
  double fraction() const { return fraction_; }
  int week() const { return static_cast<int>(floor_div(seconds_, kSecondsPerWeek)); }
  double tow() const { return static_cast<double>(seconds_ - week() * kSecondsPerWeek) + fraction_; }
  double as_seconds() const { return static_cast<double>(seconds_) + fraction_; }

  GpsTime& operator+=(double dt) {
    const double whole = std::floor(dt);
    seconds_ += static_cast<std::int64_t>(whole);
    fraction_ += dt - whole;
    normalize();
    return *this;
  }
  GpsTime& operator-=(double dt) { return *this += -dt; }
  friend GpsTime operator+(GpsTime t, double dt) { return t += dt; }
  friend GpsTime operator-(GpsTime t, double dt) { return t -= dt; }
  friend double operator-(const GpsTime& a, const GpsTime& b) {
    return static_cast<double>(a.seconds_ - b.seconds_) + (a.fraction_ - b.fraction_);
  }
  friend bool operator==(const GpsTime&, const GpsTime&) = default;
  friend std::partial_ordering operator<=>(const GpsTime& a, const GpsTime& b) {
    if (a.seconds_ != b.seconds_) return a.seconds_ <=> b.seconds_;
    return a.fraction_ <=> b.fraction_;
  }

 private:
  static std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    const std::int64_t q = a / b;
    return (a % b != 0 && ((a < 0) != (b < 0))) ? q - 1 : q;
  }
  void normalize() {
    if (fraction_ >= 1.0 || fraction_ < 0.0) {
      const double whole = std::floor(fraction_);
      seconds_ += static_cast<std::int64_t>(whole);
      fraction_ -= whole;
    }
    if (fraction_ >= 1.0) {  // rounding in the subtraction above
      seconds_ += 1;
      fraction_ = 0.0;
    }
  }

  std::int64_t seconds_ = 0;
  double fraction_ = 0.0;
};

// Formats Unix milliseconds as ISO-8601 UTC with millisecond precision.
std::string format_iso8601_ms(std::int64_t unix_ms);
// Parses "YYYY-MM-DDTHH:MM:SS[.sss]Z". Throws std::invalid_argument.
std::int64_t parse_iso8601_ms(const std::string& text);
// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d);

}  // namespace snapper
