#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace trialz::csv {

using Row = std::vector<std::string>;

/// A parsed CSV file: header plus data rows. Line numbers are 1-based and
/// refer to the physical line on which each record starts.
struct Table {
    std::string source;
    Row header;
    std::vector<Row> rows;
    std::vector<std::size_t> lines;

    /// Index of `name` in the header; throws SchemaError naming the file.
    std::size_t column(std::string_view name) const;
};

/// RFC-4180 parser. Accepts LF or CRLF line endings and a UTF-8 BOM.
Table parse(std::string_view text, std::string source = "<memory>");
Table read_file(const std::filesystem::path& path);

/// Quote a field if it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const Row& row);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double value);

/// Fixed number of significant digits, for human-facing tables.
std::string format_sig(double value, int digits);

}  // namespace trialz::csv
