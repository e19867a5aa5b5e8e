#include "cde/harness.hpp"

#include "cde/interchange.hpp"
#include "cde/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace cde {

using nlohmann::json;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

SplitPlan SplitPlan::standard(long n_target, std::uint64_t seed) {
    SplitPlan p;
    p.n_target = n_target;
    p.reps = n_target == 50 ? 50 : 5;
    p.seed = seed;
    return p;
}

long SplitPlan::total_rows() const {
    return std::lround(static_cast<double>(n_target) / (1.0 - test_fraction));
}

std::vector<Split> make_splits(std::size_t n_rows, const std::string& dataset, const SplitPlan& plan) {
    if (plan.n_target < 1 || plan.reps < 1) throw std::invalid_argument("split plan needs n >= 1 and reps >= 1");
    if (!(plan.test_fraction > 0.0 && plan.test_fraction < 1.0)) throw std::invalid_argument("test fraction must lie in (0,1)");
    const auto total = static_cast<std::size_t>(plan.total_rows());
    if (total > n_rows) {
        throw std::invalid_argument("dataset '" + dataset + "' has " + std::to_string(n_rows) + " rows; n = " +
                                    std::to_string(plan.n_target) + " needs " + std::to_string(total));
    }
    const auto n = static_cast<std::size_t>(plan.n_target);
    std::vector<Split> out;
    for (int r = 0; r < plan.reps; ++r) {
        std::vector<std::size_t> perm(n_rows);
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(derive_seed(plan.seed, {fnv1a64(dataset), static_cast<std::uint64_t>(r)}));
        std::shuffle(perm.begin(), perm.end(), rng);
        Split s;
        s.rep = r;
        s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
        s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n), perm.begin() + static_cast<std::ptrdiff_t>(total));
        out.push_back(std::move(s));
    }
    return out;
}

std::filesystem::path split_file_name(long n, int rep) {
    return "split_n" + std::to_string(n) + "_rep" + std::to_string(rep) + ".json";
}

void write_split_file(const SplitFile& s, const std::filesystem::path& path) {
    json j;
    j["dataset"] = s.dataset;
    j["n"] = s.n;
    j["rep"] = s.split.rep;
    j["seed"] = s.seed;
    j["train"] = s.split.train;
    j["test"] = s.split.test;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump() << '\n';
}

SplitFile read_split_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    const json j = json::parse(in);
    SplitFile s;
    s.dataset = j.at("dataset").get<std::string>();
    s.n = j.at("n").get<long>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.split.rep = j.at("rep").get<int>();
    s.split.train = j.at("train").get<std::vector<std::size_t>>();
    s.split.test = j.at("test").get<std::vector<std::size_t>>();
    return s;
}

// ---------------------------------------------------------------------------
// results store

void ResultsStore::add(RunRecord r) {
    RunKey key{r.dataset, r.method, r.n, r.rep};
    if (records_.count(key)) {
        throw std::invalid_argument("duplicate run record for " + r.dataset + " / " + r.method + " / n=" +
                                    std::to_string(r.n) + " / rep " + std::to_string(r.rep));
    }
    records_.emplace(std::move(key), std::move(r));
}

namespace {

// Hand-built so every double carries 17 significant digits.
std::string number_json(double v) {
    if (!std::isfinite(v)) return "null";
    return format_double(v);
}

double number_from_json(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

const std::vector<std::pair<const char*, double MetricBundle::*>>& metric_fields() {
    static const std::vector<std::pair<const char*, double MetricBundle::*>> f{
        {"cde_loss", &MetricBundle::cde_loss},
        {"log_lik", &MetricBundle::log_lik},
        {"crps", &MetricBundle::crps},
        {"pit_ks", &MetricBundle::pit_ks},
        {"coverage90", &MetricBundle::coverage90},
        {"fit_time_s", &MetricBundle::fit_time_s},
        {"predict_time_s", &MetricBundle::predict_time_s},
        {"log_lik_clamp_fraction", &MetricBundle::log_lik_clamp_fraction},
    };
    return f;
}

}  // namespace

void write_store_jsonl(const ResultsStore& store, std::ostream& out) {
    for (const auto& [key, r] : store.records()) {
        out << "{\"dataset\":" << json(r.dataset).dump() << ",\"method\":" << json(r.method).dump()
            << ",\"n\":" << r.n << ",\"rep\":" << r.rep << ",\"seed\":" << r.seed
            << ",\"ok\":" << (r.ok ? "true" : "false") << ",\"error\":" << json(r.error).dump() << ",\"hyperparams\":{";
        bool first = true;
        for (const auto& [name, v] : r.hyperparams) {
            out << (first ? "" : ",") << json(name).dump() << ':' << number_json(v);
            first = false;
        }
        out << "},\"metrics\":";
        if (r.ok) {
            out << '{';
            first = true;
            for (const auto& [name, field] : metric_fields()) {
                out << (first ? "" : ",") << '"' << name << "\":" << number_json(r.metrics.*field);
                first = false;
            }
            out << '}';
        } else {
            out << "null";
        }
        out << "}\n";
    }
}

void write_store_jsonl(const ResultsStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_store_jsonl(store, out);
}

ResultsStore read_store_jsonl(std::istream& in) {
    ResultsStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            RunRecord r;
            r.dataset = j.at("dataset").get<std::string>();
            r.method = j.at("method").get<std::string>();
            r.n = j.at("n").get<long>();
            r.rep = j.at("rep").get<int>();
            r.seed = j.at("seed").get<std::uint64_t>();
            r.ok = j.at("ok").get<bool>();
            r.error = j.at("error").get<std::string>();
            for (const auto& [name, v] : j.at("hyperparams").items()) r.hyperparams[name] = number_from_json(v);
            if (r.ok) {
                const json& m = j.at("metrics");
                for (const auto& [name, field] : metric_fields()) r.metrics.*field = number_from_json(m.at(name));
            }
            store.add(std::move(r));
        } catch (const std::exception& e) {
            throw std::runtime_error("results store line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return store;
}

ResultsStore read_store_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    return read_store_jsonl(in);
}

// ---------------------------------------------------------------------------
// config

BenchConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
    const json j = json::parse(json_text);
    BenchConfig c;
    auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base_dir / p; };
    for (const auto& d : j.at("datasets")) {
        DatasetSource src;
        if (d.is_string()) {
            const auto s = d.get<std::string>();
            if (auto kind = parse_synthetic(s)) {
                src.name = s;
                src.synthetic = kind;
            } else {
                src.path = resolve(s);
                src.name = src.path.stem().string();
            }
        } else {
            src.path = resolve(d.at("path").get<std::string>());
            src.name = d.value("name", src.path.stem().string());
            src.target = d.value("target", std::string{});
            src.impute = d.value("impute", false);
        }
        for (const auto& other : c.datasets)
            if (other.name == src.name) throw std::invalid_argument("dataset name '" + src.name + "' appears twice");
        c.datasets.push_back(std::move(src));
    }
    c.methods = j.at("methods").get<std::vector<std::string>>();
    for (const auto& m : c.methods) find_method(m);  // unknown names fail early
    c.sizes = j.at("sizes").get<std::vector<long>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out = resolve(j.at("out").get<std::string>());
    for (const auto& p : j.value("external_predictions", std::vector<std::string>{})) c.external_predictions.push_back(resolve(p));
    c.foundation = j.value("foundation", std::vector<std::string>{});
    c.workers = j.value("workers", 1);
    c.tune = j.value("tune", true);
    c.alpha = j.value("alpha", 0.1);
    if (c.workers < 1) throw std::invalid_argument("workers must be >= 1");
    if (c.sizes.empty() || c.datasets.empty()) throw std::invalid_argument("config needs datasets and sizes");
    return c;
}

BenchConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

LoadedDataset load_dataset(const DatasetSource& src, std::size_t rows, std::uint64_t seed) {
    LoadedDataset out;
    if (src.synthetic) {
        out.data = sample_synthetic(*src.synthetic, static_cast<Eigen::Index>(rows), derive_seed(seed, {fnv1a64(src.name)}));
        out.context.dgp = src.synthetic;
    } else {
        std::string target = src.target;
        if (target.empty()) {
            const auto shape = inspect_csv(src.path);
            if (shape.header.empty()) throw std::invalid_argument(src.path.string() + ": empty header");
            target = shape.header.back();
        }
        out.data = load_csv_dataset(src.path, target, CsvOptions{src.impute});
    }
    out.data.name = src.name;
    return out;
}

// ---------------------------------------------------------------------------
// runner

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Job {
    std::size_t dataset = 0;
    long n = 0;
    std::size_t split = 0;
    std::string method;
};

}  // namespace

RunRecord run_job(const LoadedDataset& ds, const Split& split, const std::string& method, long n,
                  std::uint64_t master_seed, bool tune_method) {
    RunRecord r;
    r.dataset = ds.data.name;
    r.method = method;
    r.n = n;
    r.rep = split.rep;
    r.seed = derive_seed(master_seed, {fnv1a64(ds.data.name), static_cast<std::uint64_t>(n),
                                       static_cast<std::uint64_t>(split.rep), fnv1a64(method)});
    try {
        const MethodSpec& spec = find_method(method);
        const Dataset train = ds.data.subset(split.train);
        const Dataset test = ds.data.subset(split.test);
        const auto grid = make_eval_grid(std::span<const double>(train.response.data(), split.train.size()));

        const auto t0 = std::chrono::steady_clock::now();
        r.hyperparams = tune_method ? tune(spec, train, derive_seed(r.seed, {1}), ds.context).chosen : spec.defaults;
        const Predictor predict = spec.fit(train, r.hyperparams, derive_seed(r.seed, {2}), ds.context);
        const double fit_s = seconds_since(t0);

        const auto t1 = std::chrono::steady_clock::now();
        std::vector<PredictionRecord> records;
        records.reserve(split.test.size());
        for (Eigen::Index i = 0; i < test.n(); ++i) records.push_back(predict(test.features.row(i), grid));
        const double predict_s = seconds_since(t1);

        r.metrics = score_records(records, std::span<const double>(test.response.data(), split.test.size()), grid,
                                  {fit_s, predict_s});
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
        r.metrics = {};
    }
    return r;
}

ResultsStore run_benchmark(const BenchConfig& config) {
    long max_n = *std::max_element(config.sizes.begin(), config.sizes.end());
    std::vector<LoadedDataset> data;
    std::vector<std::string> load_errors;
    for (const auto& src : config.datasets) {
        try {
            data.push_back(load_dataset(src, static_cast<std::size_t>(SplitPlan::standard(max_n, config.seed).total_rows()), config.seed));
            load_errors.emplace_back();
        } catch (const std::exception& e) {
            data.push_back(LoadedDataset{});
            data.back().data.name = src.name;
            load_errors.emplace_back(e.what());
        }
    }

    ResultsStore store;
    // splits[d][size index]
    std::vector<std::vector<std::vector<Split>>> splits(data.size());
    std::vector<Job> jobs;
    for (std::size_t d = 0; d < data.size(); ++d) {
        for (std::size_t s = 0; s < config.sizes.size(); ++s) {
            const long n = config.sizes[s];
            const auto plan = SplitPlan::standard(n, config.seed);
            std::string err = load_errors[d];
            if (err.empty()) {
                try {
                    splits[d].push_back(make_splits(static_cast<std::size_t>(data[d].data.n()), data[d].data.name, plan));
                } catch (const std::exception& e) {
                    err = e.what();
                }
            }
            if (!err.empty()) {
                splits[d].emplace_back();
                for (const auto& m : config.methods) {
                    for (int rep = 0; rep < plan.reps; ++rep) {
                        RunRecord r;
                        r.dataset = data[d].data.name;
                        r.method = m;
                        r.n = n;
                        r.rep = rep;
                        r.error = err;
                        store.add(std::move(r));
                    }
                }
                continue;
            }
            for (std::size_t k = 0; k < splits[d][s].size(); ++k)
                for (const auto& m : config.methods) jobs.push_back({d, n, k, m});
        }
    }

    std::vector<RunRecord> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
            const Job& job = jobs[j];
            const auto size_idx = static_cast<std::size_t>(
                std::find(config.sizes.begin(), config.sizes.end(), job.n) - config.sizes.begin());
            results[j] = run_job(data[job.dataset], splits[job.dataset][size_idx][job.split], job.method, job.n,
                                 config.seed, config.tune);
        }
    };
    const int workers = std::min<int>(config.workers, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& r : results) store.add(std::move(r));

    for (const auto& path : config.external_predictions) {
        RunRecord r;
        try {
            const PredictionFile file = read_predictions(path);
            r.dataset = file.header.dataset;
            r.method = file.header.method;
            r.n = file.header.n_train;
            r.rep = file.header.rep;
            const auto d = std::find_if(data.begin(), data.end(), [&](const auto& x) { return x.data.name == r.dataset; });
            if (d == data.end()) throw std::invalid_argument("dataset '" + r.dataset + "' is not in the config");
            const auto di = static_cast<std::size_t>(d - data.begin());
            const auto si = static_cast<std::size_t>(std::find(config.sizes.begin(), config.sizes.end(), r.n) - config.sizes.begin());
            if (si == config.sizes.size()) throw std::invalid_argument("n = " + std::to_string(r.n) + " is not in the config");
            if (!load_errors[di].empty()) throw std::invalid_argument(load_errors[di]);
            const auto& reps = splits[di][si];
            if (r.rep < 0 || static_cast<std::size_t>(r.rep) >= reps.size()) throw std::invalid_argument("rep out of range");
            const Split& split = reps[static_cast<std::size_t>(r.rep)];
            const Dataset train = d->data.subset(split.train);
            const Dataset test = d->data.subset(split.test);
            const auto grid = make_eval_grid(std::span<const double>(train.response.data(), split.train.size()));
            r.metrics = score_records(file.records, std::span<const double>(test.response.data(), split.test.size()),
                                      grid, {file.header.fit_time_s, file.header.predict_time_s});
            r.ok = true;
        } catch (const std::exception& e) {
            if (r.method.empty()) r.method = path.stem().string();
            if (r.dataset.empty()) r.dataset = "?";
            r.ok = false;
            r.error = path.filename().string() + ": " + e.what();
            r.metrics = {};
        }
        store.add(std::move(r));
    }

    std::filesystem::create_directories(config.out);
    emit_reports(store, config.out, config.foundation, config.alpha);
    return store;
}

}  // namespace cde
