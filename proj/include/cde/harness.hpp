#pragma once

// Benchmark protocol: nested train/test splits, per-split tuning and scoring,
// the JSONL results store, significance tables and CSV reports.

#include "cde/dataset.hpp"
#include "cde/methods.hpp"
#include "cde/scoring.hpp"
#include "cde/significance.hpp"
#include "cde/synthetic.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace cde {

/// %.17g; non-finite values become "nan", "inf" or "-inf".
std::string format_double(double v);

struct SplitPlan {
    long n_target = 0;
    int reps = 5;
    double test_fraction = 0.25;
    std::uint64_t seed = 0;

    /// 50 repetitions at n = 50, 5 otherwise.
    static SplitPlan standard(long n_target, std::uint64_t seed);
    /// Rows used per repetition: n_target / (1 - test_fraction), rounded.
    long total_rows() const;
};

struct Split {
    int rep = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Rep r shuffles all rows with a seed derived from (seed, dataset, r); train is
/// the first n_target rows of that order and test the following ones, so the
/// training rows at a smaller n are a prefix of those at a larger n.
std::vector<Split> make_splits(std::size_t n_rows, const std::string& dataset, const SplitPlan& plan);

struct SplitFile {
    std::string dataset;
    long n = 0;
    std::uint64_t seed = 0;
    Split split;
};

/// Split-index files: one JSON object per repetition, named split_n<N>_rep<R>.json.
std::filesystem::path split_file_name(long n, int rep);
void write_split_file(const SplitFile& s, const std::filesystem::path& path);
SplitFile read_split_file(const std::filesystem::path& path);

struct RunRecord {
    std::string dataset;
    std::string method;
    long n = 0;
    int rep = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricBundle metrics;
    Hyperparams hyperparams;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

using RunKey = std::tuple<std::string, std::string, long, int>;  // dataset, method, n, rep

class ResultsStore {
public:
    /// Throws std::invalid_argument when the key is already present.
    void add(RunRecord r);
    const std::map<RunKey, RunRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    friend bool operator==(const ResultsStore&, const ResultsStore&) = default;

private:
    std::map<RunKey, RunRecord> records_;
};

void write_store_jsonl(const ResultsStore& store, std::ostream& out);
void write_store_jsonl(const ResultsStore& store, const std::filesystem::path& path);
ResultsStore read_store_jsonl(std::istream& in);
ResultsStore read_store_jsonl(const std::filesystem::path& path);

struct DatasetSource {
    std::string name;
    std::optional<SyntheticKind> synthetic;
    std::filesystem::path path;  // CSV sources
    std::string target;          // empty: last column
    bool impute = false;
};

struct BenchConfig {
    std::vector<DatasetSource> datasets;
    std::vector<std::string> methods;
    std::vector<long> sizes;
    std::uint64_t seed = 0;
    std::filesystem::path out;
    std::vector<std::filesystem::path> external_predictions;
    std::vector<std::string> foundation;  // methods starred in the significance report
    int workers = 1;
    bool tune = true;  // false: registry defaults instead of random search
    double alpha = 0.1;
};

/// JSON config; relative paths resolve against the config file's directory.
BenchConfig load_config(const std::filesystem::path& path);
BenchConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir);

/// Loaded dataset plus the oracle hook for synthetic ones. Synthetic sources
/// are sampled with `rows` rows.
struct LoadedDataset {
    Dataset data;
    FitContext context;
};
LoadedDataset load_dataset(const DatasetSource& src, std::size_t rows, std::uint64_t seed);

/// One (dataset, method, n, rep) evaluation; failures become records with ok = false.
RunRecord run_job(const LoadedDataset& ds, const Split& split, const std::string& method, long n,
                  std::uint64_t master_seed, bool tune_method);

/// Runs every job, scores external prediction files against the same splits,
/// and writes the reports into config.out.
ResultsStore run_benchmark(const BenchConfig& config);

// Reports

struct Cell {
    bool present = false;
    bool failed = false;
    double mean = 0.0;
    double se = 0.0;
    int reps = 0;
};

struct RankTable {
    Metric metric = Metric::cde_loss;
    std::vector<std::string> methods;                 // sorted
    std::vector<std::pair<std::string, long>> columns;  // (dataset, n), sorted
    std::vector<std::vector<Cell>> cells;              // [method][column]
    std::vector<std::vector<double>> ranks;            // NaN where the method did not run
    std::vector<double> average_rank;                  // NaN if it never ran
};

/// Per (dataset, n): mean over reps per method and average-tie ranks among the
/// methods whose every rep succeeded.
RankTable rank_table(const ResultsStore& store, Metric metric);

struct SignificanceResult {
    std::string foundation;
    std::string competitor;
    std::string dataset;
    long n = 0;
    Metric metric = Metric::cde_loss;
    WelchResult welch;
    bool reject = false;
};

/// Welch comparisons of each foundation method against every other method that
/// ran on the same (dataset, n), Holm-corrected per (foundation, dataset, n, metric).
std::vector<SignificanceResult> significance_table(const ResultsStore& store, const std::vector<std::string>& foundation,
                                                   const std::vector<Metric>& metrics, double alpha = 0.1);

void write_heatmap_csv(const RankTable& t, std::ostream& out);
void write_ranks_csv(const ResultsStore& store, std::ostream& out);
void write_significance_csv(const std::vector<SignificanceResult>& rows, std::ostream& out);
void write_stars_csv(const std::vector<SignificanceResult>& rows, std::ostream& out);

/// heatmap_<metric>.csv for every metric, ranks.csv, significance.csv,
/// stars.csv and runs.jsonl. Only fit-time values depend on the machine.
void emit_reports(const ResultsStore& store, const std::filesystem::path& out_dir,
                  const std::vector<std::string>& foundation = {}, double alpha = 0.1);

}  // namespace cde
