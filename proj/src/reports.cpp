#include "cde/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

namespace cde {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string column_label(const std::pair<std::string, long>& col) { return col.first + "/n=" + std::to_string(col.second); }

Cell summarize(const ResultsStore& store, const std::string& method, const std::string& dataset, long n, Metric metric) {
    Cell c;
    std::vector<double> vals;
    for (const auto& [key, r] : store.records()) {
        if (r.method != method || r.dataset != dataset || r.n != n) continue;
        c.present = true;
        if (!r.ok) {
            c.failed = true;
            continue;
        }
        vals.push_back(metric_value(r.metrics, metric));
    }
    c.reps = static_cast<int>(vals.size());
    if (vals.empty()) {
        c.failed = c.present;
        return c;
    }
    double s = 0.0;
    for (double v : vals) s += v;
    c.mean = s / static_cast<double>(vals.size());
    if (vals.size() > 1) {
        double ss = 0.0;
        for (double v : vals) ss += (v - c.mean) * (v - c.mean);
        c.se = std::sqrt(ss / static_cast<double>(vals.size() - 1) / static_cast<double>(vals.size()));
    }
    return c;
}

const std::vector<Metric>& tested_metrics() {
    static const std::vector<Metric> m{Metric::cde_loss, Metric::log_lik, Metric::crps, Metric::pit_ks};
    return m;
}

}  // namespace

RankTable rank_table(const ResultsStore& store, Metric metric) {
    RankTable t;
    t.metric = metric;
    std::set<std::string> methods;
    std::set<std::pair<std::string, long>> columns;
    for (const auto& [key, r] : store.records()) {
        methods.insert(r.method);
        columns.insert({r.dataset, r.n});
    }
    t.methods.assign(methods.begin(), methods.end());
    t.columns.assign(columns.begin(), columns.end());
    const std::size_t M = t.methods.size();
    const std::size_t C = t.columns.size();
    t.cells.assign(M, std::vector<Cell>(C));
    t.ranks.assign(M, std::vector<double>(C, kNaN));
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t c = 0; c < C; ++c)
            t.cells[m][c] = summarize(store, t.methods[m], t.columns[c].first, t.columns[c].second, metric);
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<std::size_t> who;
        std::vector<double> keys;
        for (std::size_t m = 0; m < M; ++m) {
            const Cell& cell = t.cells[m][c];
            if (!cell.present || cell.failed) continue;
            who.push_back(m);
            keys.push_back(rank_key(metric, cell.mean));
        }
        const auto r = average_ranks(keys);
        for (std::size_t k = 0; k < who.size(); ++k) t.ranks[who[k]][c] = r[k];
    }
    t.average_rank.assign(M, kNaN);
    for (std::size_t m = 0; m < M; ++m) {
        double s = 0.0;
        int cnt = 0;
        for (double r : t.ranks[m])
            if (!std::isnan(r)) {
                s += r;
                ++cnt;
            }
        if (cnt > 0) t.average_rank[m] = s / cnt;
    }
    return t;
}

std::vector<SignificanceResult> significance_table(const ResultsStore& store, const std::vector<std::string>& foundation,
                                                   const std::vector<Metric>& metrics, double alpha) {
    std::vector<SignificanceResult> out;
    const std::set<std::string> fset(foundation.begin(), foundation.end());
    for (Metric metric : metrics) {
        const RankTable t = rank_table(store, metric);
        for (const auto& f : foundation) {
            const auto fi = std::find(t.methods.begin(), t.methods.end(), f);
            if (fi == t.methods.end()) continue;
            const auto fm = static_cast<std::size_t>(fi - t.methods.begin());
            for (std::size_t c = 0; c < t.columns.size(); ++c) {
                const Cell& fc = t.cells[fm][c];
                if (!fc.present || fc.failed) continue;
                std::vector<SignificanceResult> family;
                for (std::size_t m = 0; m < t.methods.size(); ++m) {
                    if (fset.count(t.methods[m])) continue;
                    const Cell& cc = t.cells[m][c];
                    if (!cc.present || cc.failed) continue;
                    SignificanceResult s;
                    s.foundation = f;
                    s.competitor = t.methods[m];
                    s.dataset = t.columns[c].first;
                    s.n = t.columns[c].second;
                    s.metric = metric;
                    const Direction dir = metric_direction(metric);
                    if (fc.reps >= 2 && cc.reps >= 2 && (fc.se > 0.0 || cc.se > 0.0)) {
                        s.welch = welch_one_sided(fc.mean, fc.se, fc.reps, cc.mean, cc.se, cc.reps, dir);
                    } else {
                        // No spread to test against: only a strict improvement with zero
                        // variance on both sides counts as evidence.
                        const double gap = dir == Direction::lower_better ? cc.mean - fc.mean : fc.mean - cc.mean;
                        const bool sure = fc.reps >= 2 && cc.reps >= 2 && gap > 0.0;
                        s.welch = {sure ? std::numeric_limits<double>::infinity() : 0.0, kNaN, sure ? 0.0 : 1.0};
                    }
                    family.push_back(std::move(s));
                }
                std::vector<double> ps;
                for (const auto& s : family) ps.push_back(s.welch.p);
                const auto rej = holm_bonferroni(ps, alpha);
                for (std::size_t k = 0; k < family.size(); ++k) {
                    family[k].reject = rej[k];
                    out.push_back(std::move(family[k]));
                }
            }
        }
    }
    return out;
}

void write_heatmap_csv(const RankTable& t, std::ostream& out) {
    out << "method";
    for (const auto& col : t.columns) out << ',' << csv_field(column_label(col));
    out << ",avg_rank\n";
    for (std::size_t m = 0; m < t.methods.size(); ++m) {
        out << csv_field(t.methods[m]);
        for (const Cell& c : t.cells[m]) {
            out << ',';
            if (!c.present) continue;
            if (c.failed) {
                out << "×";
            } else {
                out << format_double(c.mean) << " (" << format_double(c.se) << ')';
            }
        }
        out << ',' << (std::isnan(t.average_rank[m]) ? "×" : format_double(t.average_rank[m])) << '\n';
    }
}

void write_ranks_csv(const ResultsStore& store, std::ostream& out) {
    std::vector<RankTable> tables;
    for (Metric m : all_metrics())
        if (m != Metric::fit_time) tables.push_back(rank_table(store, m));
    out << "method";
    for (const auto& t : tables) out << ',' << metric_name(t.metric);
    out << '\n';
    if (tables.empty()) return;
    for (std::size_t m = 0; m < tables.front().methods.size(); ++m) {
        out << csv_field(tables.front().methods[m]);
        for (const auto& t : tables) out << ',' << (std::isnan(t.average_rank[m]) ? "×" : format_double(t.average_rank[m]));
        out << '\n';
    }
}

void write_significance_csv(const std::vector<SignificanceResult>& rows, std::ostream& out) {
    out << "foundation,competitor,dataset,n,metric,t,df,p,reject\n";
    for (const auto& r : rows) {
        out << csv_field(r.foundation) << ',' << csv_field(r.competitor) << ',' << csv_field(r.dataset) << ',' << r.n << ','
            << metric_name(r.metric) << ',' << format_double(r.welch.t) << ',' << format_double(r.welch.df) << ','
            << format_double(r.welch.p) << ',' << (r.reject ? 1 : 0) << '\n';
    }
}

void write_stars_csv(const std::vector<SignificanceResult>& rows, std::ostream& out) {
    // A star needs every comparison in the (foundation, dataset, n, metric) family rejected.
    std::map<std::tuple<std::string, std::string, long, int>, bool> all_rejected;
    std::vector<std::tuple<std::string, std::string, long, int>> order;
    for (const auto& r : rows) {
        const auto key = std::make_tuple(r.foundation, r.dataset, r.n, static_cast<int>(r.metric));
        auto [it, fresh] = all_rejected.emplace(key, true);
        if (fresh) order.push_back(key);
        it->second = it->second && r.reject;
    }
    out << "foundation,dataset,n,metric,star\n";
    for (const auto& key : order) {
        const auto& [f, d, n, m] = key;
        out << csv_field(f) << ',' << csv_field(d) << ',' << n << ',' << metric_name(static_cast<Metric>(m)) << ','
            << (all_rejected[key] ? "*" : "") << '\n';
    }
}

void emit_reports(const ResultsStore& store, const std::filesystem::path& out_dir,
                  const std::vector<std::string>& foundation, double alpha) {
    if (store.empty()) throw std::invalid_argument("results store is empty");
    std::filesystem::create_directories(out_dir);
    auto open = [&](const std::string& name) {
        std::ofstream f(out_dir / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
        return f;
    };
    for (Metric m : all_metrics()) {
        auto f = open("heatmap_" + metric_name(m) + ".csv");
        write_heatmap_csv(rank_table(store, m), f);
    }
    {
        auto f = open("ranks.csv");
        write_ranks_csv(store, f);
    }
    const auto sig = significance_table(store, foundation, tested_metrics(), alpha);
    {
        auto f = open("significance.csv");
        write_significance_csv(sig, f);
    }
    {
        auto f = open("stars.csv");
        write_stars_csv(sig, f);
    }
    write_store_jsonl(store, out_dir / "runs.jsonl");
}

}  // namespace cde
