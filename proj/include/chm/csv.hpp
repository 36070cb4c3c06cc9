#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace chm {

/// Comma-delimited table with a header row. Fields are unquoted and must not
/// contain commas; blank lines and lines starting with '#' are skipped.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based source line of each row, for error messages.
    std::vector<std::size_t> lines;

    /// Index of a named column; FormatError when absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

double parse_double(std::string_view field, std::string_view what);
long long parse_int(std::string_view field, std::string_view what);

std::vector<std::string> split(std::string_view s, char delim);
std::string trim(std::string_view s);

}  // namespace chm
