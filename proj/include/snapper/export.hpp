#pragma once

#include <span>
#include <string>

#include "snapper/navigation.hpp"

namespace snapper {

enum class ExportFormat { Csv, Json, Gpx, Kml };

// Accepts csv, json, gpx, kml (case-insensitive). Throws std::invalid_argument.
ExportFormat parse_export_format(const std::string& name);
const char* to_string(ExportFormat f);
const char* mime_type(ExportFormat f);

std::string export_csv(std::span<const Fix> fixes);
std::string export_json(std::span<const Fix> fixes);
std::string export_gpx(std::span<const Fix> fixes, const std::string& name = "snapper track");
std::string export_kml(std::span<const Fix> fixes, const std::string& name = "snapper track");
std::string export_track(std::span<const Fix> fixes, ExportFormat format, const std::string& name = "snapper track");

// Track time of a fix as Unix ms (UTC).
std::int64_t fix_unix_ms(const Fix& f);

}  // namespace snapper
