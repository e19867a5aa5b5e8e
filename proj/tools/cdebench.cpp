// cdebench: run benchmarks, score interchange files, build reports, export splits.

#include "cde/harness.hpp"
#include "cde/interchange.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace cde;

namespace {

fs::path store_file(const fs::path& p) { return fs::is_directory(p) ? p / "runs.jsonl" : p; }

int cmd_run(const fs::path& config_path, int workers) {
    BenchConfig cfg = load_config(config_path);
    if (workers > 0) cfg.workers = workers;
    const ResultsStore store = run_benchmark(cfg);
    std::size_t failed = 0;
    for (const auto& [key, r] : store.records()) {
        if (!r.ok) {
            ++failed;
            std::cerr << "failed: " << r.dataset << " / " << r.method << " / n=" << r.n << " / rep " << r.rep << ": "
                      << r.error << '\n';
        }
    }
    std::cout << store.size() << " runs, " << failed << " failed; reports in " << cfg.out.string() << '\n';
    return 0;
}

int cmd_score(const fs::path& pred, const fs::path& truth, const std::string& target, const fs::path& train) {
    const auto y = load_csv_column(truth, target);
    // The benchmark grid comes from training responses; without them the outcomes stand in.
    const auto y_grid = train.empty() ? y : load_csv_column(train, target);
    const auto grid = make_eval_grid(y_grid);
    const MetricBundle b = score_prediction_file(pred, y, grid);
    std::cout << "{\"cde_loss\":" << format_double(b.cde_loss) << ",\"log_lik\":" << format_double(b.log_lik)
              << ",\"crps\":" << format_double(b.crps) << ",\"pit_ks\":" << format_double(b.pit_ks)
              << ",\"coverage90\":" << format_double(b.coverage90)
              << ",\"fit_time\":" << format_double(b.fit_time_s + b.predict_time_s) << "}\n";
    return 0;
}

int cmd_report(const fs::path& store_path, const std::string& metric, const fs::path& out) {
    const auto m = parse_metric(metric);
    if (!m) throw CLI::ValidationError("--metric", "unknown metric '" + metric + "'");
    const ResultsStore store = read_store_jsonl(store_file(store_path));
    if (!out.empty()) emit_reports(store, out);
    write_heatmap_csv(rank_table(store, *m), std::cout);
    return 0;
}

int cmd_significance(const fs::path& store_path, const std::vector<std::string>& foundation, double alpha,
                     bool stars) {
    const ResultsStore store = read_store_jsonl(store_file(store_path));
    const auto rows = significance_table(store, foundation,
                                         {Metric::cde_loss, Metric::log_lik, Metric::crps, Metric::pit_ks}, alpha);
    if (stars) {
        write_stars_csv(rows, std::cout);
    } else {
        write_significance_csv(rows, std::cout);
    }
    return 0;
}

int cmd_splits(const fs::path& dataset, long n, std::uint64_t seed, const fs::path& out, std::string name) {
    const auto shape = inspect_csv(dataset);
    if (name.empty()) name = dataset.stem().string();
    const auto splits = make_splits(shape.rows, name, SplitPlan::standard(n, seed));
    fs::create_directories(out);
    for (const auto& s : splits) write_split_file({name, n, seed, s}, out / split_file_name(n, s.rep));
    std::cout << splits.size() << " split files written to " << out.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conditional density estimation benchmark"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a benchmark config");
    fs::path config;
    int workers = 0;
    run->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    run->add_option("--workers", workers, "Worker threads (overrides the config)");

    auto* score = app.add_subcommand("score", "Score an interchange prediction file");
    fs::path pred, truth, train;
    std::string target;
    score->add_option("--pred", pred, "Prediction JSONL")->required()->check(CLI::ExistingFile);
    score->add_option("--truth", truth, "CSV with the test outcomes in record order")->required()->check(CLI::ExistingFile);
    score->add_option("--target", target, "Outcome column")->required();
    score->add_option("--train", train, "CSV of training outcomes for the evaluation grid")->check(CLI::ExistingFile);

    auto* report = app.add_subcommand("report", "Print a metric heatmap from a results store");
    fs::path store;
    std::string metric = "cde_loss";
    fs::path report_out;
    report->add_option("--store", store, "Results directory or runs.jsonl")->required()->check(CLI::ExistingPath);
    report->add_option("--metric", metric, "cde_loss | log_lik | crps | pit_ks | coverage90 | fit_time");
    report->add_option("--out", report_out, "Also write every report into this directory");

    auto* sig = app.add_subcommand("significance", "Welch/Holm comparisons for foundation methods");
    fs::path sig_store;
    std::vector<std::string> foundation;
    double alpha = 0.1;
    bool stars = false;
    sig->add_option("--store", sig_store, "Results directory or runs.jsonl")->required()->check(CLI::ExistingPath);
    sig->add_option("--foundation", foundation, "Foundation method names")->required();
    sig->add_option("--alpha", alpha, "Family-wise level")->check(CLI::Range(0.0, 1.0));
    sig->add_flag("--stars", stars, "Print only the star summary");

    auto* splits = app.add_subcommand("splits", "Export train/test split indices");
    fs::path dataset, split_out;
    long n = 0;
    std::uint64_t seed = 0;
    std::string name;
    splits->add_option("--dataset", dataset, "CSV dataset")->required()->check(CLI::ExistingFile);
    splits->add_option("--n", n, "Training size")->required()->check(CLI::PositiveNumber);
    splits->add_option("--seed", seed, "Master seed")->required();
    splits->add_option("--out", split_out, "Output directory")->required();
    splits->add_option("--name", name, "Dataset name used for seeding (default: file stem)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(config, workers);
        if (*score) return cmd_score(pred, truth, target, train);
        if (*report) return cmd_report(store, metric, report_out);
        if (*sig) return cmd_significance(sig_store, foundation, alpha, stars);
        if (*splits) return cmd_splits(dataset, n, seed, split_out, name);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "cdebench: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
