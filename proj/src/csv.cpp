#include "chm/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "chm/error.hpp"

namespace chm {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(delim, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::size_t CsvTable::column(std::string_view name) const {
    auto it = std::ranges::find(header, name);
    if (it == header.end()) throw FormatError("missing CSV column: " + std::string(name));
    return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(std::string_view name) const { return std::ranges::find(header, name) != header.end(); }

CsvTable parse_csv(std::string_view text) {
    CsvTable t;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        const std::string line = trim(text.substr(start, end - start));
        ++line_no;
        start = end + 1;
        if (line.empty() || line.front() == '#') {
            if (end == text.size()) break;
            continue;
        }
        auto fields = split(line, ',');
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
        } else {
            if (fields.size() != t.header.size()) {
                throw FormatError("CSV line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
            }
            t.rows.push_back(std::move(fields));
            t.lines.push_back(line_no);
        }
        if (end == text.size()) break;
    }
    if (!have_header) throw FormatError("CSV input has no header row");
    return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

double parse_double(std::string_view field, std::string_view what) {
    const std::string s = trim(field);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw FormatError("invalid number for " + std::string(what) + ": '" + s + "'");
    }
    return v;
}

long long parse_int(std::string_view field, std::string_view what) {
    const std::string s = trim(field);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw FormatError("invalid integer for " + std::string(what) + ": '" + s + "'");
    }
    return v;
}

}  // namespace chm
