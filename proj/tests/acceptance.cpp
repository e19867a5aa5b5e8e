// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 4 8`.

#include "cde/harness.hpp"
#include "cde/linalg.hpp"
#include "cde/neural.hpp"
#include "cde/parametric.hpp"
#include "cde/scoring.hpp"
#include "cde/synthetic.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

using namespace cde;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::span<const double> view(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

struct Scores {
    double cde, ll, crps;
};

// Fits `method` (registry defaults unless hp given) and scores it on the test set.
Scores evaluate(const std::string& method, const Dataset& train, const Dataset& test, const EvalGrid& grid,
                std::uint64_t seed, const FitContext& ctx, const Hyperparams* hp = nullptr) {
    const MethodSpec& spec = find_method(method);
    const Predictor p = spec.fit(train, hp ? *hp : spec.defaults, seed, ctx);
    std::vector<PredictionRecord> recs;
    recs.reserve(static_cast<std::size_t>(test.n()));
    for (Eigen::Index i = 0; i < test.n(); ++i) recs.push_back(p(test.features.row(i), grid));
    const auto b = score_records(recs, view(test.response), grid, {});
    return {b.cde_loss, b.log_lik, b.crps};
}

std::vector<GridDensity> oracle_densities(SyntheticKind kind, const Dataset& test, const EvalGrid& grid) {
    std::vector<GridDensity> out;
    out.reserve(static_cast<std::size_t>(test.n()));
    for (Eigen::Index i = 0; i < test.n(); ++i) out.push_back(synthetic_density(kind, test.features.row(i), grid));
    return out;
}

// ---------------------------------------------------------------------------

Outcome oracle_score_sanity() {
    const auto t0 = Clock::now();
    const auto train = sample_synthetic(SyntheticKind::hetero_gauss, 2000, 101);
    const auto test = sample_synthetic(SyntheticKind::hetero_gauss, 20000, 202);
    const auto grid = make_eval_grid(view(train.response));
    const double loss = cde_loss(oracle_densities(SyntheticKind::hetero_gauss, test, grid), view(test.response));
    // E[1/sigma(X)] factorizes over the independent uniform coordinates; Simpson per factor.
    const Eigen::Vector4d g = hetero_gauss_gamma();
    double e_inv_sigma = std::exp(-0.5 * g(0));
    for (int j = 1; j <= 3; ++j) {
        const int m = 2000;
        double s = 0.0;
        for (int k = 0; k <= m; ++k) {
            const double x = -1.0 + 2.0 * k / m;
            s += (k == 0 || k == m ? 1 : (k % 2 ? 4 : 2)) * std::exp(-0.5 * g(j) * x);
        }
        e_inv_sigma *= 0.5 * s * (2.0 / m) / 3.0;
    }
    const double analytic = -e_inv_sigma / (2.0 * std::sqrt(std::numbers::pi));
    const double secs = seconds_since(t0);
    const bool ok = std::abs(loss - analytic) <= 0.01 && secs < 30.0;
    return {ok, "cde_loss=" + fmt("%.5f", loss) + " analytic=" + fmt("%.5f", analytic) + " |diff|=" +
                    fmt("%.5f", std::abs(loss - analytic)) + " time=" + fmt("%.1f", secs) + "s"};
}

Outcome propriety_ordering() {
    const auto t0 = Clock::now();
    std::vector<std::string> methods;
    for (const auto& m : method_names())
        if (m != "Oracle" && m != "Fail") methods.push_back(m);
    int wins = 0;
    std::string losses;
    for (int rep = 0; rep < 5; ++rep) {
        const auto train = sample_synthetic(SyntheticKind::hetero_gauss, 2000, 1000 + rep);
        const auto test = sample_synthetic(SyntheticKind::hetero_gauss, 20000, 2000 + rep);
        const auto grid = make_eval_grid(view(train.response));
        const FitContext ctx{SyntheticKind::hetero_gauss};
        const Scores o = evaluate("Oracle", train, test, grid, 0, ctx);
        bool all = true;
        for (const auto& m : methods) {
            Scores s{};
            try {
                s = evaluate(m, train, test, grid, 77 + static_cast<std::uint64_t>(rep), ctx);
            } catch (const std::exception& e) {
                losses += " rep" + std::to_string(rep) + ":" + m + "(error: " + e.what() + ")";
                all = false;
                continue;
            }
            if (!(o.cde < s.cde && o.ll > s.ll && o.crps < s.crps)) {
                all = false;
                losses += " rep" + std::to_string(rep) + ":" + m;
            }
        }
        wins += all;
    }
    const double secs = seconds_since(t0);
    return {wins >= 4 && secs < 600.0, "oracle best on all 3 metrics vs " + std::to_string(methods.size()) +
                                           " estimators in " + std::to_string(wins) + "/5 reps; time=" +
                                           fmt("%.0f", secs) + "s" + (losses.empty() ? "" : "; beaten:" + losses)};
}

Outcome oracle_calibration() {
    const auto train = sample_synthetic(SyntheticKind::hetero_gauss, 2000, 303);
    const auto test = sample_synthetic(SyntheticKind::hetero_gauss, 5000, 404);
    const auto grid = make_eval_grid(view(train.response));
    std::vector<CdfCurve> cdfs;
    for (const auto& d : oracle_densities(SyntheticKind::hetero_gauss, test, grid)) cdfs.push_back(density_to_cdf(d));
    const double ks = ks_uniform(pit_values(cdfs, view(test.response)));
    const double p = ks_uniform_pvalue(ks, 5000);
    const double cov = coverage90(cdfs, view(test.response));
    return {p > 0.01 && cov >= 0.88 && cov <= 0.92,
            "KS=" + fmt("%.4f", ks) + " p=" + fmt("%.3f", p) + " coverage90=" + fmt("%.4f", cov)};
}

Outcome hetero_mle_recovery() {
    const auto ds = sample_synthetic(SyntheticKind::hetero_gauss, 20000, 505);
    const auto fit = fit_gauss_hetero(ds);
    const double eb = (fit.beta - hetero_gauss_beta()).cwiseAbs().maxCoeff();
    const double eg = (fit.gamma - hetero_gauss_gamma()).cwiseAbs().maxCoeff();
    // gradient of the negative log-likelihood vs central differences at random points
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    const auto small = sample_synthetic(SyntheticKind::hetero_gauss, 200, 606);
    const Eigen::MatrixXd D = with_intercept(small.features);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd b(4), c(4);
        for (int k = 0; k < 4; ++k) {
            b(k) = g(rng);
            c(k) = 0.5 * g(rng);
        }
        const double lambda = trial % 2 ? 0.3 : 0.0;
        Eigen::VectorXd grad;
        hetero_negloglik(D, small.response, b, c, lambda, &grad);
        Eigen::VectorXd fd(8);
        for (int k = 0; k < 8; ++k) {
            const double h = 1e-6 * std::max(1.0, std::abs(k < 4 ? b(k) : c(k - 4)));
            Eigen::VectorXd bp = b, bm = b, cp = c, cm = c;
            if (k < 4) {
                bp(k) += h;
                bm(k) -= h;
            } else {
                cp(k - 4) += h;
                cm(k - 4) -= h;
            }
            fd(k) = (hetero_negloglik(D, small.response, bp, cp, lambda) - hetero_negloglik(D, small.response, bm, cm, lambda)) /
                    (2 * h);
        }
        worst = std::max(worst, (grad - fd).norm() / std::max(grad.norm(), 1e-12));
    }
    return {eb < 0.05 && eg < 0.1 && worst < 1e-5, "|beta err|_inf=" + fmt("%.4f", eb) + " |gamma err|_inf=" +
                                                         fmt("%.4f", eg) + " grad rel err=" + fmt("%.2e", worst)};
}

Outcome bimodal_surrogate() {
    const auto t0 = Clock::now();
    const long n = 2000;
    const auto plan = SplitPlan::standard(n, 31);
    const auto data = sample_synthetic(SyntheticKind::bimodal, plan.total_rows(), 4242);
    const auto splits = make_splits(static_cast<std::size_t>(data.n()), "bimodal", plan);
    const FitContext ctx{SyntheticKind::bimodal};
    int good = 0;
    std::string rows;
    for (const auto& s : splits) {
        const Dataset train = data.subset(s.train);
        const Dataset test = data.subset(s.test);
        const auto grid = make_eval_grid(view(train.response));
        const auto seed = static_cast<std::uint64_t>(s.rep) * 7919 + 1;
        const double o = evaluate("Oracle", train, test, grid, 0, ctx).cde;
        const auto tuned = tune(find_method("MDN"), train, seed, ctx).chosen;
        const double mdn = evaluate("MDN", train, test, grid, seed, ctx, &tuned).cde;
        const double flex = evaluate("FlexCode-RF", train, test, grid, seed, ctx).cde;
        const double lg = evaluate("LinearGauss-Homo", train, test, grid, seed, ctx).cde;
        auto gap = [&](double v) { return (v - o) / std::abs(o); };
        const bool ok = gap(mdn) <= 0.15 && gap(flex) <= 0.15 && gap(lg) >= 0.30;
        good += ok;
        rows += " [seed" + std::to_string(s.rep) + " oracle=" + fmt("%.3f", o) + " MDN+" + fmt("%.1f", 100 * gap(mdn)) +
                "% FlexCode+" + fmt("%.1f", 100 * gap(flex)) + "% LG-Homo+" + fmt("%.1f", 100 * gap(lg)) + "%]";
    }
    return {good >= 4, std::to_string(good) + "/5 seeds;" + rows + " time=" + fmt("%.0f", seconds_since(t0)) + "s"};
}

Outcome conversion_fidelity() {
    double worst_crps = 0.0, worst_cdf = 0.0;
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-3, 3), s(0.3, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const double mu = u(rng), sigma = s(rng);
        const EvalGrid grid(mu - 6 * sigma, mu + 6 * sigma);
        QuantileFunction q{testing::levels_199(), {}};
        for (double l : q.levels) q.values.push_back(testing::normal_quantile(l, mu, sigma));
        BarDistribution bar;
        for (int k = 0; k <= 50; ++k) bar.edges.push_back(mu - 5 * sigma + 10 * sigma * k / 50.0);
        for (int k = 0; k < 50; ++k)
            bar.masses.push_back(testing::normal_cdf(bar.edges[k + 1], mu, sigma) - testing::normal_cdf(bar.edges[k], mu, sigma));
        const double total = std::accumulate(bar.masses.begin(), bar.masses.end(), 0.0);
        for (auto& m : bar.masses) m /= total;
        for (const PredictionRecord& rec : {PredictionRecord{q, {}}, PredictionRecord{bar, {}}}) {
            for (double z : {-2.0, -0.7, 0.0, 0.4, 1.5}) {
                const double y = mu + z * sigma;
                const double ref = testing::normal_crps(y, mu, sigma);
                worst_crps = std::max(worst_crps, std::abs(crps(rec, y, grid) - ref) / ref);
            }
            worst_cdf = std::max(worst_cdf, std::abs(to_cdf(rec, grid).at(mu) - 0.5));
        }
    }
    return {worst_crps < 0.02 && worst_cdf <= 0.01,
            "max CRPS rel err=" + fmt("%.4f", worst_crps) + " max |CDF(mu)-0.5|=" + fmt("%.5f", worst_cdf)};
}

bool near_kink(const MlpParams& p, const Eigen::MatrixXd& X) {
    std::vector<Eigen::MatrixXd> pre;
    mlp_forward(p, X, &pre);
    for (const auto& z : pre)
        if (z.cwiseAbs().minCoeff() < 1e-3) return true;
    return false;
}

double fd_error(MlpParams p, const Eigen::VectorXd& analytic, const std::function<double(const MlpParams&)>& loss) {
    const Eigen::VectorXd theta = p.flatten();
    Eigen::VectorXd fd(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        const double h = 1e-5 * std::max(1.0, std::abs(theta(k)));
        Eigen::VectorXd t = theta;
        t(k) += h;
        p.assign(t);
        const double up = loss(p);
        t(k) -= 2 * h;
        p.assign(t);
        fd(k) = (up - loss(p)) / (2 * h);
    }
    return (analytic - fd).norm() / std::max({analytic.norm(), fd.norm(), 1e-12});
}

Outcome neural_gradients() {
    std::mt19937_64 rng(2718);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> dim(1, 4), hid(2, 6), bat(3, 10), comp(1, 4), bins(2, 8);
    auto gauss = [&](Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd M(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) M(i, j) = g(rng);
        return M;
    };
    double worst_mdn = 0.0, worst_cat = 0.0;
    for (int done = 0; done < 20;) {
        const int d = dim(rng), h = hid(rng), B = bat(rng), K = comp(rng);
        auto p = init_mlp({d, h, 3 * K}, rng);
        const Eigen::MatrixXd X = gauss(d, B);
        const Eigen::VectorXd y = gauss(B, 1);
        if (near_kink(p, X)) continue;
        MlpParams gr;
        mdn_batch_loss(p, K, X, y, &gr);
        worst_mdn = std::max(worst_mdn, fd_error(p, gr.flatten(), [&](const MlpParams& q) { return mdn_batch_loss(q, K, X, y); }));
        ++done;
    }
    for (int done = 0; done < 20;) {
        const int d = dim(rng), h = hid(rng), B = bat(rng), nb = bins(rng);
        auto p = init_mlp({d, h, h, nb}, rng);
        const Eigen::MatrixXd X = gauss(d, B);
        std::vector<int> labels(static_cast<std::size_t>(B));
        std::uniform_int_distribution<int> lab(0, nb - 1);
        for (auto& l : labels) l = lab(rng);
        if (near_kink(p, X)) continue;
        MlpParams gr;
        catmlp_batch_loss(p, X, labels, &gr);
        worst_cat = std::max(worst_cat, fd_error(p, gr.flatten(), [&](const MlpParams& q) { return catmlp_batch_loss(q, X, labels); }));
        ++done;
    }
    return {worst_mdn < 1e-4 && worst_cat < 1e-4,
            "MDN max rel err=" + fmt("%.2e", worst_mdn) + " CatMLP max rel err=" + fmt("%.2e", worst_cat) + " (20 instances each)"};
}

Outcome significance_machinery() {
    // exhaustive closed testing with Bonferroni local tests
    auto oracle = [](const std::vector<double>& p, double alpha) {
        const std::size_t m = p.size();
        std::vector<bool> out(m, true);
        for (unsigned mask = 1; mask < (1u << m); ++mask) {
            double mn = 2.0;
            int size = 0;
            for (std::size_t i = 0; i < m; ++i)
                if (mask & (1u << i)) {
                    mn = std::min(mn, p[i]);
                    ++size;
                }
            if (mn > alpha / size)
                for (std::size_t i = 0; i < m; ++i)
                    if (mask & (1u << i)) out[i] = false;
        }
        return out;
    };
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 0.15);
    std::uniform_int_distribution<int> lattice(0, 15);
    int mismatches = 0, cases = 0;
    for (std::size_t m = 1; m <= 6; ++m)
        for (int t = 0; t < 1000; ++t) {
            std::vector<double> p(m);
            for (auto& v : p) v = t % 2 ? u(rng) : lattice(rng) / 150.0;
            ++cases;
            mismatches += holm_bonferroni(p, 0.1) != oracle(p, 0.1);
        }
    const auto w = welch_one_sided(-1.00, 0.02, 5, -0.90, 0.02, 5, Direction::lower_better);
    const bool welch_ok = std::abs(w.t - 3.536) < 1e-3 && std::abs(w.p - 0.0038) < 1e-3 && std::abs(w.df - 8) < 1e-3;
    return {mismatches == 0 && welch_ok, "Holm mismatches " + std::to_string(mismatches) + "/" + std::to_string(cases) +
                                             "; Welch t=" + fmt("%.4f", w.t) + " p=" + fmt("%.5f", w.p) + " df=" + fmt("%.3f", w.df)};
}

Outcome discrete_surrogate() {
    const auto t0 = Clock::now();
    const long n = 500;
    const auto plan = SplitPlan::standard(n, 57);
    const auto data = sample_synthetic(SyntheticKind::discrete, plan.total_rows(), 5757);
    const auto splits = make_splits(static_cast<std::size_t>(data.n()), "discrete", plan);
    const FitContext ctx{SyntheticKind::discrete};
    int wins = 0;
    std::string rows;
    for (const auto& s : splits) {
        const Dataset train = data.subset(s.train);
        const Dataset test = data.subset(s.test);
        const auto grid = make_eval_grid(view(train.response));
        const auto seed = static_cast<std::uint64_t>(s.rep) + 11;
        const auto tuned = tune(find_method("CatMLP"), train, seed, ctx).chosen;
        const double cat = evaluate("CatMLP", train, test, grid, seed, ctx, &tuned).cde;
        const double lg = evaluate("LinearGauss-Homo", train, test, grid, seed, ctx).cde;
        wins += cat < lg;
        rows += " [" + fmt("%.3f", cat) + " vs " + fmt("%.3f", lg) + "]";
    }
    return {wins >= 4, "CatMLP beats LinearGauss-Homo in " + std::to_string(wins) + "/5 seeds;" + rows +
                           " time=" + fmt("%.0f", seconds_since(t0)) + "s"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string strip_timings(std::string s) {
    for (const char* key : {"\"fit_time_s\":", "\"predict_time_s\":"})
        for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos)) s.erase(pos, s.find_first_of(",}", pos) - pos);
    return s;
}

Outcome end_to_end() {
    const fs::path dir = fs::temp_directory_path() / ("cde_acceptance_e2e_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "config.json");
        cfg << R"({"datasets":["hetero_gauss","bimodal","discrete"],)"
            << R"("methods":["LinearGauss-Homo","Student-t-Ridge","FlexCode-RF","MDN","CatMLP","Fail"],)"
            << R"("sizes":[500],"seed":2024,"out":"OUT"})";
    }
    std::vector<double> secs;
    for (const char* out : {"run1", "run2"}) {
        std::string text = slurp(dir / "config.json");
        text.replace(text.find("OUT"), 3, out);
        std::ofstream(dir / (std::string(out) + ".json")) << text;
        const auto t0 = Clock::now();
        const std::string cmd = std::string(CDEBENCH_EXE) + " run --config " + (dir / (std::string(out) + ".json")).string() +
                                " > " + (dir / (std::string(out) + ".log")).string() + " 2>&1";
        if (std::system(cmd.c_str()) != 0) return {false, "cdebench run exited non-zero; see " + (dir / out).string() + ".log"};
        secs.push_back(seconds_since(t0));
    }
    int compared = 0;
    std::vector<std::string> differing;
    for (const auto& e : fs::directory_iterator(dir / "run1")) {
        const auto name = e.path().filename();
        if (name == "heatmap_fit_time.csv") continue;
        std::string a = slurp(e.path()), b = slurp(dir / "run2" / name);
        if (name == "runs.jsonl") {
            a = strip_timings(a);
            b = strip_timings(b);
        }
        ++compared;
        if (a != b) differing.push_back(name.string());
    }
    const auto store = read_store_jsonl(dir / "run1" / "runs.jsonl");
    int fail_records = 0, ok_records = 0;
    for (const auto& [k, r] : store.records()) (r.ok ? ok_records : fail_records)++;
    const std::string heat = slurp(dir / "run1" / "heatmap_cde_loss.csv");
    const bool cross = heat.find("Fail,×,×,×,×") != std::string::npos;
    const bool ok = differing.empty() && compared >= 9 && cross && store.size() == 90 && fail_records == 15 &&
                    secs[0] < 1200 && secs[1] < 1200;
    std::string detail = std::to_string(store.size()) + " records (" + std::to_string(fail_records) +
                         " failed, Fail cells " + (cross ? "×" : "missing") + "); " + std::to_string(compared) +
                         " output files compared, " + std::to_string(differing.size()) + " differ; run times " +
                         fmt("%.0f", secs[0]) + "s/" + fmt("%.0f", secs[1]) + "s";
    for (const auto& d : differing) detail += " [" + d + "]";
    if (ok) fs::remove_all(dir);
    return {ok, detail};
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "oracle-score sanity", oracle_score_sanity},
        {2, "propriety ordering", propriety_ordering},
        {3, "oracle calibration", oracle_calibration},
        {4, "hetero MLE recovery", hetero_mle_recovery},
        {5, "bimodal DGP surrogate", bimodal_surrogate},
        {6, "conversion fidelity", conversion_fidelity},
        {7, "neural gradients", neural_gradients},
        {8, "significance machinery", significance_machinery},
        {9, "discrete-support surrogate", discrete_surrogate},
        {10, "end-to-end cdebench run", end_to_end},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << " -- " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
