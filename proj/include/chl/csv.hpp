#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chl/util.hpp"

namespace chl {

// Minimal CSV: comma separator, no quoting (none of our schemas need it).
// Lines starting with '#' are kept separately as comments.
struct CsvFile {
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvFile read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open: " + path);
    CsvFile csv;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            csv.comments.push_back(line);
            continue;
        }
        auto cells = split_csv_line(line);
        if (!have_header) {
            csv.header = std::move(cells);
            have_header = true;
        } else {
            csv.rows.push_back(std::move(cells));
        }
    }
    return csv;
}

// YYYY-MM-DD with range checks; throws format_error.
void validate_date(const std::string& date);

}  // namespace chl
