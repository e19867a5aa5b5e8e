#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cde {

/// Encoded covariates plus a univariate response.
struct Dataset {
    Eigen::MatrixXd features;  // n x d, categorical columns already one-hot encoded
    Eigen::VectorXd response;
    std::vector<std::string> feature_names;
    std::string name;

    Eigen::Index n() const { return features.rows(); }
    Eigen::Index d() const { return features.cols(); }

    /// Throws std::invalid_argument when shapes or values break the invariants.
    void validate() const;

    /// Row subset in the given order.
    Dataset subset(std::span<const std::size_t> rows) const;
};

struct CsvOptions {
    bool impute = false;
};

/// Reads a comma-separated file with a header row. Non-numeric columns become
/// one indicator per observed category; with `impute`, missing numeric cells
/// get the column mean plus an appended missingness indicator.
Dataset load_csv_dataset(const std::filesystem::path& path, const std::string& target,
                         CsvOptions options = {});

/// Reads one numeric column; every cell must be present.
std::vector<double> load_csv_column(const std::filesystem::path& path, const std::string& column);

/// Number of data rows and the header of a CSV file.
struct CsvShape {
    std::vector<std::string> header;
    std::size_t rows = 0;
};
CsvShape inspect_csv(const std::filesystem::path& path);

}  // namespace cde
