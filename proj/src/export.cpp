#include "snapper/export.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace snapper {
namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      case '\'':
        out += "&apos;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

ExportFormat parse_export_format(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "csv") return ExportFormat::Csv;
  if (n == "json") return ExportFormat::Json;
  if (n == "gpx") return ExportFormat::Gpx;
  if (n == "kml") return ExportFormat::Kml;
  throw std::invalid_argument("unknown export format: " + name);
}

const char* to_string(ExportFormat f) {
  switch (f) {
    case ExportFormat::Csv:
      return "csv";
    case ExportFormat::Json:
      return "json";
    case ExportFormat::Gpx:
      return "gpx";
    case ExportFormat::Kml:
      return "kml";
  }
  return "csv";
}

const char* mime_type(ExportFormat f) {
  switch (f) {
    case ExportFormat::Csv:
      return "text/csv";
    case ExportFormat::Json:
      return "application/json";
    case ExportFormat::Gpx:
      return "application/gpx+xml";
    case ExportFormat::Kml:
      return "application/vnd.google-earth.kml+xml";
  }
  return "application/octet-stream";
}

std::int64_t fix_unix_ms(const Fix& f) { return f.solved_time.to_unix_ms(); }

std::string export_csv(std::span<const Fix> fixes) {
  std::string out = "time,lat,lon,confidence,temperature_c,battery_v\n";
  for (const auto& f : fixes) {
    out += format_iso8601_ms(fix_unix_ms(f));
    out += ',' + fmt("%.7f", f.position.lat_deg);
    out += ',' + fmt("%.7f", f.position.lon_deg);
    out += ',';
    out += to_string(f.confidence);
    out += ',' + fmt("%.2f", f.temperature_c);
    out += ',' + fmt("%.3f", f.battery_v);
    out += '\n';
  }
  return out;
}

std::string export_json(std::span<const Fix> fixes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : fixes) {
    arr.push_back({
        {"time", format_iso8601_ms(fix_unix_ms(f))},
        {"lat", f.position.lat_deg},
        {"lon", f.position.lon_deg},
        {"height", f.position.height_m},
        {"ecef", {f.ecef.x(), f.ecef.y(), f.ecef.z()}},
        {"coarse_time_correction_s", f.coarse_time_correction_s},
        {"common_bias_m", f.common_bias_m},
        {"residual_rms_m", f.residual_rms_m},
        {"n_sats", f.n_sats},
        {"confidence", to_string(f.confidence)},
        {"iterations", f.iterations},
        {"timestamp_ms", f.timestamp_ms},
        {"temperature_c", f.temperature_c},
        {"battery_v", f.battery_v},
    });
  }
  return arr.dump(2) + "\n";
}

std::string export_gpx(std::span<const Fix> fixes, const std::string& name) {
  std::string out =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<gpx version=\"1.1\" creator=\"snapper\" xmlns=\"http://www.topografix.com/GPX/1/1\" "
      "xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" "
      "xsi:schemaLocation=\"http://www.topografix.com/GPX/1/1 http://www.topografix.com/GPX/1/1/gpx.xsd\">\n"
      "  <trk>\n"
      "    <name>" +
      xml_escape(name) +
      "</name>\n"
      "    <trkseg>\n";
  for (const auto& f : fixes) {
    out += "      <trkpt lat=\"" + fmt("%.7f", f.position.lat_deg) + "\" lon=\"" + fmt("%.7f", f.position.lon_deg) +
           "\">";
    out += "<ele>" + fmt("%.2f", f.position.height_m) + "</ele>";
    out += "<time>" + format_iso8601_ms(fix_unix_ms(f)) + "</time>";
    out += "</trkpt>\n";
  }
  out +=
      "    </trkseg>\n"
      "  </trk>\n"
      "</gpx>\n";
  return out;
}

std::string export_kml(std::span<const Fix> fixes, const std::string& name) {
  const auto coord = [](const Fix& f) {
    return fmt("%.7f", f.position.lon_deg) + "," + fmt("%.7f", f.position.lat_deg) + "," +
           fmt("%.2f", f.position.height_m);
  };
  std::string out =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n"
      "  <Document>\n"
      "    <name>" +
      xml_escape(name) + "</name>\n";
  // A LineString needs at least two coordinates.
  if (fixes.size() >= 2) {
    out += "    <Placemark>\n      <name>track</name>\n      <LineString>\n        <coordinates>";
    for (std::size_t i = 0; i < fixes.size(); ++i) out += (i ? " " : "") + coord(fixes[i]);
    out += "</coordinates>\n      </LineString>\n    </Placemark>\n";
  }
  for (const auto& f : fixes) {
    out += "    <Placemark><TimeStamp><when>" + format_iso8601_ms(fix_unix_ms(f)) + "</when></TimeStamp>";
    out += "<Point><coordinates>" + coord(f) + "</coordinates></Point></Placemark>\n";
  }
  out += "  </Document>\n</kml>\n";
  return out;
}

std::string export_track(std::span<const Fix> fixes, ExportFormat format, const std::string& name) {
  switch (format) {
    case ExportFormat::Csv:
      return export_csv(fixes);
    case ExportFormat::Json:
      return export_json(fixes);
    case ExportFormat::Gpx:
      return export_gpx(fixes, name);
    case ExportFormat::Kml:
      return export_kml(fixes, name);
  }
  throw std::invalid_argument("unknown export format");
}

}  // namespace snapper
