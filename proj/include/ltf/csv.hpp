#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ltf/error.hpp"

namespace ltf {

// %.17g round-trips IEEE doubles exactly through strtod.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw ParseError("trailing characters in number '" + s + "'", line);
        return v;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        throw ParseError("malformed number '" + s + "'", line);
    }
}

inline long parse_long(const std::string& s, std::size_t line) {
    long v = 0;
    const auto* b = s.data();
    const auto* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) throw ParseError("malformed integer '" + s + "'", line);
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

class CsvWriter {
  public:
    explicit CsvWriter(const std::string& path) : os_(path) {
        if (!os_) throw IoError("cannot open for write: " + path);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ',';
            os_ << cells[i];
        }
        os_ << '\n';
    }
    void close() {
        os_.close();
        if (os_.fail()) throw IoError("csv write failed");
    }

  private:
    std::ofstream os_;
};

// Reads all rows; first row is returned separately as the header.
struct CsvFile {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> row_lines;  // 1-based source line per row
};

inline CsvFile read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for read: " + path);
    CsvFile f;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (f.header.empty()) {
            f.header = split_csv_line(line);
        } else {
            f.rows.push_back(split_csv_line(line));
            f.row_lines.push_back(lineno);
        }
    }
    if (f.header.empty()) throw ParseError("empty csv: " + path, 0);
    return f;
}

}  // namespace ltf
