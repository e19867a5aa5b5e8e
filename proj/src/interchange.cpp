#include "cde/interchange.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace cde {

using nlohmann::json;

namespace {

std::vector<double> number_array(const json& obj, const char* key) {
    if (!obj.contains(key) || !obj[key].is_array()) {
        throw std::invalid_argument(std::string("missing array field \"") + key + "\"");
    }
    std::vector<double> out;
    out.reserve(obj[key].size());
    for (const auto& v : obj[key]) {
        if (!v.is_number()) throw std::invalid_argument(std::string("non-numeric entry in \"") + key + "\"");
        out.push_back(v.get<double>());
    }
    return out;
}

PredictionRecord parse_record(const json& obj) {
    if (!obj.is_object() || !obj.contains("type") || !obj["type"].is_string()) {
        throw std::invalid_argument("record must be an object with a string \"type\"");
    }
    const auto type = obj["type"].get<std::string>();
    PredictionRecord rec;
    if (type == "grid") {
        const auto points = number_array(obj, "grid");
        GridDensity gd{EvalGrid::from_points(points), number_array(obj, "density")};
        if (gd.values.size() != gd.grid.size()) {
            throw std::invalid_argument("density length does not match grid length");
        }
        bool positive = false;
        for (double v : gd.values) {
            if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("density entries must be finite and >= 0");
            positive = positive || v > 0.0;
        }
        if (!positive) throw std::invalid_argument("density is zero everywhere");
        rec.payload = std::move(gd);
    } else if (type == "bar") {
        BarDistribution bar{number_array(obj, "edges"), number_array(obj, "masses")};
        bar.validate();
        rec.payload = std::move(bar);
    } else if (type == "quantiles") {
        QuantileFunction q{number_array(obj, "levels"), number_array(obj, "values")};
        q.validate();
        rec.payload = std::move(q);
    } else {
        throw std::invalid_argument("unknown encoding type \"" + type + "\"");
    }
    return rec;
}

PredictionHeader parse_header(const json& obj) {
    if (!obj.is_object()) throw std::invalid_argument("header must be a JSON object");
    PredictionHeader h;
    h.method = obj.at("method").get<std::string>();
    h.dataset = obj.at("dataset").get<std::string>();
    h.rep = obj.at("rep").get<int>();
    h.n_train = obj.at("n_train").get<long>();
    h.fit_time_s = obj.at("fit_time_s").get<double>();
    h.predict_time_s = obj.at("predict_time_s").get<double>();
    return h;
}

json record_json(const PredictionRecord& rec) {
    return std::visit(
        [](const auto& p) -> json {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GridDensity>) {
                return {{"type", "grid"}, {"grid", p.grid.points()}, {"density", p.values}};
            } else if constexpr (std::is_same_v<T, BarDistribution>) {
                return {{"type", "bar"}, {"edges", p.edges}, {"masses", p.masses}};
            } else {
                return {{"type", "quantiles"}, {"levels", p.levels}, {"values", p.values}};
            }
        },
        rec.payload);
}

}  // namespace

PredictionFile read_predictions(std::istream& in) {
    PredictionFile file;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            const json obj = json::parse(line);
            if (!have_header) {
                file.header = parse_header(obj);
                have_header = true;
            } else {
                auto rec = parse_record(obj);
                rec.index = file.records.size();
                file.records.push_back(std::move(rec));
            }
        } catch (const std::exception& e) {
            throw InterchangeError(lineno, e.what());
        }
    }
    if (!have_header) throw InterchangeError(lineno, "missing header line");
    return file;
}

PredictionFile read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prediction file: " + path.string());
    return read_predictions(in);
}

void write_predictions(const PredictionFile& file, std::ostream& out) {
    const auto& h = file.header;
    json header = {{"method", h.method},         {"dataset", h.dataset},
                   {"rep", h.rep},               {"n_train", h.n_train},
                   {"fit_time_s", h.fit_time_s}, {"predict_time_s", h.predict_time_s}};
    out << header.dump() << '\n';
    for (const auto& rec : file.records) out << record_json(rec).dump() << '\n';
}

void write_predictions(const PredictionFile& file, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write prediction file: " + path.string());
    write_predictions(file, out);
}

}  // namespace cde
