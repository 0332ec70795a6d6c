#include "trialz/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "trialz/error.hpp"

namespace trialz::csv {

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw SchemaError(source + ": missing column '" + std::string(name) + "'");
}

Table parse(std::string_view text, std::string source) {
    Table table;
    table.source = std::move(source);
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    std::vector<Row> records;
    std::vector<std::size_t> starts;
    Row row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;
    std::size_t record_line = 1;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // A bare empty line is skipped rather than read as one empty field.
        if (!(row.size() == 1 && row[0].empty())) {
            records.push_back(std::move(row));
            starts.push_back(record_line);
        }
        row.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started || !field.empty())
                    throw SchemaError(table.source + ":" + std::to_string(line) +
                                      ": stray quote inside unquoted field");
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                end_field();
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') break;
                [[fallthrough]];
            case '\n':
                end_record();
                ++line;
                record_line = line;
                break;
            default:
                field.push_back(c);
        }
    }
    if (in_quotes)
        throw SchemaError(table.source + ":" + std::to_string(record_line) +
                          ": unterminated quoted field");
    if (!field.empty() || field_started || !row.empty()) end_record();

    if (records.empty()) throw SchemaError(table.source + ": empty file (no header)");
    table.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size())
            throw SchemaError(table.source + ":" + std::to_string(starts[r]) + ": expected " +
                              std::to_string(table.header.size()) + " fields, found " +
                              std::to_string(records[r].size()));
        table.rows.push_back(std::move(records[r]));
        table.lines.push_back(starts[r]);
    }
    return table;
}

Table read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const Row& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << escape(row[i]);
    }
    out << '\n';
}

std::string format_double(double value) {
    if (std::isnan(value)) return "NA";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general);
    (void)ec;
    return std::string(buf, ptr);
}

std::string format_sig(double value, int digits) {
    if (std::isnan(value)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, value);
    return buf;
}

}  // namespace trialz::csv
