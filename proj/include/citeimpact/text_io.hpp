#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace citeimpact {

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

// Strict parse of an entire field; rejects NaN, infinities and trailing junk.
bool parse_finite_double(std::string_view text, double& out);
bool parse_int64(std::string_view text, std::int64_t& out);

// RFC 4180 quoting, applied only when the field needs it.
std::string csv_field(std::string_view field);

// Splits one CSV record. Quoted fields may contain commas and doubled quotes
// but not line breaks.
std::vector<std::string> split_csv_line(std::string_view line);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

}  // namespace citeimpact
