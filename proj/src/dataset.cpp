#include "cde/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

namespace cde {

void Dataset::validate() const {
    if (features.rows() != response.size()) {
        throw std::invalid_argument("dataset: feature rows do not match response length");
    }
    if (features.cols() < 1) throw std::invalid_argument("dataset: need at least one feature");
    if (static_cast<std::size_t>(features.cols()) != feature_names.size()) {
        throw std::invalid_argument("dataset: feature name count mismatch");
    }
    if (!features.allFinite() || !response.allFinite()) {
        throw std::invalid_argument("dataset: non-finite values");
    }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.name = name;
    out.feature_names = feature_names;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.response.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        if (r >= features.rows()) throw std::out_of_range("dataset subset: row index out of range");
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(r);
        out.response(static_cast<Eigen::Index>(i)) = response(r);
    }
    return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(std::move(cur));
    for (auto& cell : cells) {
        const auto b = cell.find_first_not_of(" \t");
        const auto e = cell.find_last_not_of(" \t");
        cell = b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1);
    }
    return cells;
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "?" ||
           cell == "null";
}

std::optional<double> parse_number(const std::string& cell) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return v;
}

struct RawTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

RawTable read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV file: " + path.string());
    RawTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("CSV file is empty: " + path.string());
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    t.header = split_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto cells = split_line(line);
        if (cells.size() != t.header.size()) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(t.header.size()) + " cells, got " +
                                     std::to_string(cells.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    return t;
}

std::size_t column_index(const RawTable& t, const std::string& column) {
    auto it = std::find(t.header.begin(), t.header.end(), column);
    if (it == t.header.end()) throw std::invalid_argument("column not found: " + column);
    return static_cast<std::size_t>(it - t.header.begin());
}

}  // namespace

CsvShape inspect_csv(const std::filesystem::path& path) {
    auto t = read_table(path);
    return {t.header, t.rows.size()};
}

std::vector<double> load_csv_column(const std::filesystem::path& path, const std::string& column) {
    const auto t = read_table(path);
    const auto col = column_index(t, column);
    std::vector<double> out;
    out.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto v = parse_number(t.rows[r][col]);
        if (!v || !std::isfinite(*v)) {
            throw std::invalid_argument("column " + column + " row " + std::to_string(r + 1) +
                                        ": not a finite number");
        }
        out.push_back(*v);
    }
    return out;
}

Dataset load_csv_dataset(const std::filesystem::path& path, const std::string& target,
                         CsvOptions options) {
    const auto t = read_table(path);
    const std::size_t n = t.rows.size();
    if (n < 2) throw std::invalid_argument("CSV needs at least 2 data rows: " + path.string());
    const std::size_t target_col = column_index(t, target);

    struct Column {
        std::size_t source;
        bool numeric = true;
        bool has_missing = false;
    };
    std::vector<Column> columns;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        Column col{c};
        for (const auto& row : t.rows) {
            if (is_missing(row[c])) {
                col.has_missing = true;
            } else if (!parse_number(row[c])) {
                col.numeric = false;
            }
        }
        if (c == target_col) {
            if (!col.numeric) throw std::invalid_argument("target column is not numeric: " + target);
            if (col.has_missing) throw std::invalid_argument("target column has missing values: " + target);
        } else {
            columns.push_back(col);
        }
        if (col.has_missing && !options.impute) {
            throw std::invalid_argument("missing value in column " + t.header[c] +
                                        " (enable imputation to fill it)");
        }
    }

    std::vector<std::vector<double>> out_cols;
    Dataset ds;
    ds.name = path.stem().string();
    for (const auto& col : columns) {
        const std::string& label = t.header[col.source];
        if (col.numeric) {
            std::vector<double> values(n);
            std::vector<double> missing(n, 0.0);
            double sum = 0.0;
            std::size_t present = 0;
            for (std::size_t r = 0; r < n; ++r) {
                const auto& cell = t.rows[r][col.source];
                if (is_missing(cell)) {
                    missing[r] = 1.0;
                    continue;
                }
                values[r] = *parse_number(cell);
                if (!std::isfinite(values[r])) {
                    throw std::invalid_argument("non-finite value in column " + label);
                }
                sum += values[r];
                ++present;
            }
            if (col.has_missing) {
                const double mean = present > 0 ? sum / static_cast<double>(present) : 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    if (missing[r] != 0.0) values[r] = mean;
                }
            }
            out_cols.push_back(std::move(values));
            ds.feature_names.push_back(label);
            if (col.has_missing) {
                out_cols.push_back(std::move(missing));
                ds.feature_names.push_back(label + "_missing");
            }
        } else {
            std::set<std::string> categories;
            for (const auto& row : t.rows) {
                if (!is_missing(row[col.source])) categories.insert(row[col.source]);
            }
            for (const auto& cat : categories) {
                std::vector<double> ind(n, 0.0);
                for (std::size_t r = 0; r < n; ++r) ind[r] = t.rows[r][col.source] == cat ? 1.0 : 0.0;
                out_cols.push_back(std::move(ind));
                ds.feature_names.push_back(label + "=" + cat);
            }
            if (col.has_missing) {
                std::vector<double> ind(n, 0.0);
                for (std::size_t r = 0; r < n; ++r) ind[r] = is_missing(t.rows[r][col.source]) ? 1.0 : 0.0;
                out_cols.push_back(std::move(ind));
                ds.feature_names.push_back(label + "_missing");
            }
        }
    }

    ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_cols.size()));
    for (std::size_t c = 0; c < out_cols.size(); ++c) {
        for (std::size_t r = 0; r < n; ++r) {
            ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = out_cols[c][r];
        }
    }
    ds.response.resize(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        const double y = *parse_number(t.rows[r][target_col]);
        if (!std::isfinite(y)) throw std::invalid_argument("non-finite target value");
        ds.response(static_cast<Eigen::Index>(r)) = y;
    }
    ds.validate();
    return ds;
}

}  // namespace cde
