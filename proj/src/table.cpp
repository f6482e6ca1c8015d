#include "hglm/table.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hglm/errors.hpp"

namespace hglm {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace

DataTable DataTable::from_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_csv_string(buf.str(), path);
}

DataTable DataTable::from_csv_string(const std::string& text, const std::string& origin) {
    DataTable t;
    t.origin_ = origin;
    std::stringstream ss(text);
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (!have_header) {
            for (const auto& c : cells)
                if (c.empty()) throw data_error(origin + ": empty column name in header");
            t.names_ = cells;
            have_header = true;
            continue;
        }
        if (cells.size() != t.names_.size())
            throw data_error(origin + ": line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " fields, expected " +
                             std::to_string(t.names_.size()));
        for (const auto& c : cells)
            if (c.empty() || c == "NA" || c == "nan" || c == "NaN")
                throw data_error(origin + ": missing value at line " + std::to_string(line_no));
        t.rows_.push_back(std::move(cells));
    }
    if (!have_header) throw data_error(origin + ": missing header row");
    if (t.rows_.empty()) throw data_error(origin + ": no data rows");
    return t;
}

bool DataTable::has_column(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

Eigen::Index DataTable::column_index(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw data_error(origin_ + ": no column named '" + name + "'");
    return static_cast<Eigen::Index>(it - names_.begin());
}

Eigen::VectorXd DataTable::numeric_column(const std::string& name) const {
    Eigen::Index j = column_index(name);
    Eigen::VectorXd out(n_rows());
    for (Eigen::Index i = 0; i < n_rows(); ++i) {
        const std::string& cell = rows_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        char* end = nullptr;
        double val = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str() || *end != '\0')
            throw data_error(origin_ + ": column '" + name + "' row " + std::to_string(i + 1) +
                             ": '" + cell + "' is not a number");
        out[i] = val;
    }
    return out;
}

std::vector<std::string> DataTable::string_column(const std::string& name) const {
    Eigen::Index j = column_index(name);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n_rows()));
    for (const auto& row : rows_) out.push_back(row[static_cast<std::size_t>(j)]);
    return out;
}

}  // namespace hglm
