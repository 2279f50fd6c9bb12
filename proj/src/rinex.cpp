#include "snapper/rinex.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace snapper::rinex {
namespace {

constexpr std::size_t kFieldWidth = 19;

struct Line {
  std::string_view text;
  std::size_t number;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0, number = 1;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view l = text.substr(start, end - start);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    lines.push_back({l, number++});
    start = end + 1;
  }
  return lines;
}

std::string_view label_of(std::string_view line) { return line.size() > 60 ? line.substr(60) : std::string_view{}; }

bool has_label(std::string_view line, std::string_view label) { return label_of(line).find(label) != std::string_view::npos; }

double parse_number(std::string_view field, std::size_t line) {
  std::string s(field);
  for (char& c : s) {
    if (c == 'D' || c == 'd') c = 'E';
  }
  const auto first = s.find_first_not_of(' ');
  if (first == std::string::npos) return 0.0;
  const auto last = s.find_last_not_of(' ');
  s = s.substr(first, last - first + 1);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw ParseError(line, "malformed number '" + s + "'");
  return v;
}

// Field k (0-based) of a line whose fields start at `offset`.
double field(const Line& l, std::size_t offset, std::size_t k) {
  const std::size_t start = offset + k * kFieldWidth;
  if (start >= l.text.size()) return 0.0;
  return parse_number(l.text.substr(start, kFieldWidth), l.number);
}

int parse_int(std::string_view s, std::size_t line) {
  const double v = parse_number(s, line);
  if (v != std::floor(v)) throw ParseError(line, "expected integer, got '" + std::string(s) + "'");
  return static_cast<int>(v);
}

GpsTime calendar_to_gps(int y, int mo, int d, int h, int mi, double s) {
  const std::int64_t days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  const std::int64_t unix_s = days * 86'400 + h * 3'600 + mi * 60;
  return GpsTime(unix_s - GpsTime::kUnixToGpsSeconds, 0.0) + s;
}

void check_record(const GpsEphemeris& e, std::size_t line) {
  if (!e.plausible()) throw ParseError(line, "implausible orbit or clock parameters for G" + std::to_string(e.prn));
}

}  // namespace

NavFile parse_nav(std::string_view text) {
  const auto lines = split_lines(text);
  NavFile nav;
  if (lines.empty() || !has_label(lines[0].text, "RINEX VERSION / TYPE")) {
    throw ParseError(1, "missing RINEX VERSION / TYPE header");
  }
  const Line& first = lines[0];
  nav.version = parse_number(first.text.substr(0, 9), first.number);
  if (first.text.size() <= 20 || first.text[20] != 'N') throw ParseError(1, "not a navigation file");
  const bool v3 = nav.version >= 3.0;
  if (!v3 && nav.version < 2.0) throw ParseError(1, "unsupported RINEX version");

  std::size_t i = 1;
  for (; i < lines.size(); ++i) {
    if (label_of(lines[i].text).find_first_not_of(' ') == std::string_view::npos) {
      throw ParseError(lines[i].number, "malformed header line (no label)");
    }
    if (has_label(lines[i].text, "END OF HEADER")) break;
  }
  if (i == lines.size()) throw ParseError(lines.back().number, "missing END OF HEADER");
  ++i;

  const std::size_t epoch_offset = v3 ? 23 : 22;
  const std::size_t orbit_offset = v3 ? 4 : 3;
  const auto is_record_start = [&](std::string_view l) {
    return !l.empty() && l[0] != ' ';
  };

  while (i < lines.size()) {
    const Line& head = lines[i];
    if (head.text.find_first_not_of(' ') == std::string_view::npos) {
      ++i;
      continue;
    }
    if (!is_record_start(head.text) && v3) throw ParseError(head.number, "expected start of a navigation record");

    const char system = v3 ? head.text[0] : 'G';
    if (system != 'G') {
      ++nav.skipped_records;
      ++i;
      while (i < lines.size() && !is_record_start(lines[i].text)) ++i;
      continue;
    }
    if (head.text.size() < epoch_offset) throw ParseError(head.number, "short epoch line");
    if (i + 7 >= lines.size()) {
      throw ParseError(lines.back().number, "short record for " + std::string(head.text.substr(0, 3)));
    }
    std::array<Line, 8> rec;
    for (std::size_t k = 0; k < 8; ++k) {
      rec[k] = lines[i + k];
      if (k > 0 && is_record_start(rec[k].text) && v3) {
        throw ParseError(rec[k].number, "short record for " + std::string(head.text.substr(0, 3)));
      }
    }

    GpsEphemeris e;
    int y, mo, d, h, mi;
    double sec;
    if (v3) {
      e.prn = parse_int(head.text.substr(1, 2), head.number);
      y = parse_int(head.text.substr(4, 4), head.number);
      mo = parse_int(head.text.substr(9, 2), head.number);
      d = parse_int(head.text.substr(12, 2), head.number);
      h = parse_int(head.text.substr(15, 2), head.number);
      mi = parse_int(head.text.substr(18, 2), head.number);
      sec = parse_number(head.text.substr(21, 2), head.number);
    } else {
      e.prn = parse_int(head.text.substr(0, 2), head.number);
      y = parse_int(head.text.substr(3, 2), head.number);
      y += y < 80 ? 2000 : 1900;
      mo = parse_int(head.text.substr(6, 2), head.number);
      d = parse_int(head.text.substr(9, 2), head.number);
      h = parse_int(head.text.substr(12, 2), head.number);
      mi = parse_int(head.text.substr(15, 2), head.number);
      sec = parse_number(head.text.substr(17, 5), head.number);
    }
    if (e.prn < 1 || e.prn > 32) throw ParseError(head.number, "PRN out of range");

    e.af0 = field(head, epoch_offset, 0);
    e.af1 = field(head, epoch_offset, 1);
    e.af2 = field(head, epoch_offset, 2);
    const auto orbit = [&](std::size_t line, std::size_t k) { return field(rec[line], orbit_offset, k); };
    e.iode = static_cast<int>(orbit(1, 0));
    e.crs = orbit(1, 1);
    e.delta_n = orbit(1, 2);
    e.m0 = orbit(1, 3);
    e.cuc = orbit(2, 0);
    e.e = orbit(2, 1);
    e.cus = orbit(2, 2);
    e.sqrt_a = orbit(2, 3);
    e.toe = orbit(3, 0);
    e.cic = orbit(3, 1);
    e.omega0 = orbit(3, 2);
    e.cis = orbit(3, 3);
    e.i0 = orbit(4, 0);
    e.crc = orbit(4, 1);
    e.omega = orbit(4, 2);
    e.omegadot = orbit(4, 3);
    e.idot = orbit(5, 0);
    e.week = static_cast<int>(orbit(5, 2));
    e.health = static_cast<int>(orbit(6, 1));
    e.tgd = orbit(6, 2);

    const GpsTime toc = calendar_to_gps(y, mo, d, h, mi, sec);
    e.toc = toc - GpsTime(static_cast<std::int64_t>(e.week) * GpsTime::kSecondsPerWeek, 0.0);
    check_record(e, head.number);
    nav.ephemerides.push_back(e);
    i += 8;
  }
  return nav;
}

NavFile read_nav_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open navigation file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_nav(ss.str());
}

std::string write_nav(const std::vector<GpsEphemeris>& ephemerides) {
  std::string out;
  char buf[128];
  const auto header = [&](const char* body, const char* label) {
    std::snprintf(buf, sizeof buf, "%-60s%-20s\n", body, label);
    out += buf;
  };
  header("     3.04           N: GNSS NAV DATA    G: GPS", "RINEX VERSION / TYPE");
  header("snapper             snapper", "PGM / RUN BY / DATE");
  header("    18", "LEAP SECONDS");
  header("", "END OF HEADER");

  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%19.12E", v);
    out += buf;
  };
  const auto orbit_line = [&](double a, double b, double c, double d) {
    out += "    ";
    num(a);
    num(b);
    num(c);
    num(d);
    out += '\n';
  };
  for (const auto& e : ephemerides) {
    const GpsTime toc = e.toc_time();
    const std::int64_t unix_s = toc.seconds() + GpsTime::kUnixToGpsSeconds;
    const std::int64_t days = unix_s >= 0 ? unix_s / 86'400 : -((-unix_s + 86'399) / 86'400);
    const std::int64_t rem = unix_s - days * 86'400;
    const std::string iso = format_iso8601_ms(unix_s * 1000);
    std::snprintf(buf, sizeof buf, "G%02d %.4s %.2s %.2s %02lld %02lld %02lld", e.prn, iso.c_str(), iso.c_str() + 5,
                  iso.c_str() + 8, static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                  static_cast<long long>(rem % 60));
    out += buf;
    num(e.af0);
    num(e.af1);
    num(e.af2);
    out += '\n';
    orbit_line(e.iode, e.crs, e.delta_n, e.m0);
    orbit_line(e.cuc, e.e, e.cus, e.sqrt_a);
    orbit_line(e.toe, e.cic, e.omega0, e.cis);
    orbit_line(e.i0, e.crc, e.omega, e.omegadot);
    orbit_line(e.idot, 1.0, e.week, 0.0);
    orbit_line(2.0, e.health, e.tgd, e.iode);
    out += "    ";
    num(e.toe);
    num(4.0);
    out += '\n';
  }
  return out;
}

}  // namespace snapper::rinex
