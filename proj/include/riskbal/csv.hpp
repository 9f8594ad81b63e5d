#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace riskbal::csv {

// Minimal RFC 4180 reader: comma separated, double quotes escape commas and quotes.
// Lines starting with '#' are provenance comments and are skipped. Blank lines are skipped.
inline std::vector<std::string> split_line(std::string_view line)
{
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string trim(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
    return std::string(s.substr(b, e - b));
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column position by name, or npos.
    std::size_t column(std::string_view name) const
    {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return k;
        return npos;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

inline Table read(std::istream& in)
{
    Table t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_line(line);
        for (auto& f : fields) f = trim(f);
        if (!have_header) {
            // UTF-8 byte order mark
            if (fields[0].size() >= 3 && fields[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
                fields[0].erase(0, 3);
            t.header = std::move(fields);
            have_header = true;
        } else {
            t.rows.push_back(std::move(fields));
        }
    }
    if (!have_header) throw SchemaError("csv: missing header row");
    return t;
}

// Parses a finite real number occupying the whole field.
inline bool parse_double(const std::string& s, double& out)
{
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size() && std::isfinite(out);
}

// Fixed 12-significant-digit rendering used by every output file.
inline std::string fmt(double v)
{
    if (v == 0.0) return "0";  // folds -0
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields)
{
    for (std::size_t k = 0; k < fields.size(); ++k) {
        if (k) out << ',';
        out << quote(fields[k]);
    }
    out << '\n';
}

}  // namespace riskbal::csv
