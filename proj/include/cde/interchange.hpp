#pragma once

// JSON Lines prediction interchange. Line 1 is a header object, every further
// line one predictive distribution in test-set row order:
//   {"type":"grid","grid":[...],"density":[...]}
//   {"type":"bar","edges":[...],"masses":[...]}
//   {"type":"quantiles","levels":[...],"values":[...]}

#include "cde/core.hpp"

#include <filesystem>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cde {

struct PredictionHeader {
    std::string method;
    std::string dataset;
    int rep = 0;
    long n_train = 0;
    double fit_time_s = 0.0;
    double predict_time_s = 0.0;

    friend bool operator==(const PredictionHeader&, const PredictionHeader&) = default;
};

struct PredictionFile {
    PredictionHeader header;
    std::vector<PredictionRecord> records;
};

/// Parse or validation failure; `line()` is 1-based within the file.
class InterchangeError : public std::runtime_error {
public:
    InterchangeError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

PredictionFile read_predictions(std::istream& in);
PredictionFile read_predictions(const std::filesystem::path& path);

void write_predictions(const PredictionFile& file, std::ostream& out);
void write_predictions(const PredictionFile& file, const std::filesystem::path& path);

}  // namespace cde
