#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace hglm {

// A column-labeled table read from CSV. Cells are kept as strings; numeric
// access parses on demand so grouping columns may hold arbitrary labels.
class DataTable {
  public:
    static DataTable from_csv_file(const std::string& path);
    static DataTable from_csv_string(const std::string& text, const std::string& origin = "<string>");

    Eigen::Index n_rows() const { return static_cast<Eigen::Index>(rows_.size()); }
    const std::vector<std::string>& column_names() const { return names_; }
    bool has_column(const std::string& name) const;

    // Throws data_error if the column is missing or a cell does not parse.
    Eigen::VectorXd numeric_column(const std::string& name) const;
    std::vector<std::string> string_column(const std::string& name) const;

  private:
    Eigen::Index column_index(const std::string& name) const;

    std::vector<std::string> names_;
    std::vector<std::vector<std::string>> rows_;
    std::string origin_;
};

}  // namespace hglm
