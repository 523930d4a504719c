#include "cocoafuse/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "cocoafuse/error.hpp"

namespace cocoafuse {

void Trial::validate() const {
    if (!(metric_se >= 0.0)) throw usage_error("trial '" + id + "': negative standard error");
    if (n_experts < 1 || n_params < 1) throw usage_error("trial '" + id + "': counts must be at least 1");
    if (!std::isfinite(metric)) throw usage_error("trial '" + id + "': non-finite metric");
}

bool dominates(const Trial& a, const Trial& b) {
    const bool no_worse = a.metric >= b.metric && a.n_experts <= b.n_experts && a.n_params <= b.n_params;
    const bool better = a.metric > b.metric || a.n_experts < b.n_experts || a.n_params < b.n_params;
    return no_worse && better;
}

namespace {

bool visit_order(const Trial& a, const Trial& b) {
    return std::tie(a.n_experts, a.n_params, a.id) < std::tie(b.n_experts, b.n_params, b.id);
}

}  // namespace

std::vector<Trial> pareto_front(const std::vector<Trial>& trials) {
    if (trials.empty()) throw usage_error("pareto_front: no trials");
    std::vector<Trial> front;
    for (const auto& t : trials) {
        t.validate();
        const bool dominated =
            std::any_of(trials.begin(), trials.end(), [&](const Trial& o) { return dominates(o, t); });
        if (!dominated) front.push_back(t);
    }
    std::sort(front.begin(), front.end(), visit_order);
    return front;
}

double improvement_lower_bound(const Trial& candidate, const Trial& incumbent) {
    const double mu = candidate.metric - incumbent.metric;
    if (mu <= 0.0) return 0.0;
    const double var = candidate.metric_se * candidate.metric_se + incumbent.metric_se * incumbent.metric_se;
    return std::min(mu * mu / (mu * mu + var), 1.0 - 1e-12);
}

SelectionResult select(const std::vector<Trial>& trials, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw usage_error("select: tau must be in (0, 1)");
    SelectionResult r;
    r.tau = tau;
    r.front = pareto_front(trials);
    r.selected = r.front.front();
    r.visits.push_back({r.selected.id, 0.0, true});
    for (std::size_t i = 1; i < r.front.size(); ++i) {
        const double b = improvement_lower_bound(r.front[i], r.selected);
        const bool accept = b > tau;
        r.visits.push_back({r.front[i].id, b, accept});
        if (accept) r.selected = r.front[i];
    }
    return r;
}

namespace {

nlohmann::json trial_json(const Trial& t) {
    return {{"id", t.id}, {"metric", t.metric}, {"se", t.metric_se}, {"n_experts", t.n_experts}, {"n_params", t.n_params}};
}

}  // namespace

nlohmann::json to_json(const SelectionResult& r) {
    nlohmann::json front = nlohmann::json::array();
    for (const auto& t : r.front) front.push_back(trial_json(t));
    nlohmann::json visits = nlohmann::json::array();
    for (const auto& v : r.visits) visits.push_back({{"id", v.id}, {"bound", v.bound}, {"accepted", v.accepted}});
    return {{"selected", trial_json(r.selected)}, {"tau", r.tau}, {"pareto_front", front}, {"visits", visits}};
}

std::vector<Trial> trials_from_json(const nlohmann::json& doc) {
    const nlohmann::json& arr = doc.is_object() && doc.contains("trials") ? doc.at("trials") : doc;
    if (!arr.is_array()) throw config_error("trial manifest must be an array");
    std::vector<Trial> out;
    try {
        for (const auto& j : arr) {
            Trial t;
            t.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
            t.metric = j.at("metric").get<double>();
            t.metric_se = j.value("se", j.value("metric_se", 0.0));
            t.n_experts = j.at("n_experts").get<int>();
            t.n_params = j.at("n_params").get<int>();
            out.push_back(t);
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("trial manifest: ") + e.what());
    }
    return out;
}

std::vector<Trial> load_trials(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open trial manifest '" + path + "'");
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        try {
            return trials_from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw config_error("trial manifest: " + std::string(e.what()));
        }
    }
    std::string line;
    if (!std::getline(in, line)) throw data_error("trial manifest is empty");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    auto col = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw data_error("trial manifest: missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_id = col("id"), c_m = col("metric"), c_se = col("se"), c_e = col("n_experts"),
                      c_p = col("n_params");
    std::vector<Trial> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size()) throw data_error("trial manifest line " + std::to_string(lineno) + ": wrong width");
        try {
            Trial t;
            t.id = cells[c_id];
            t.metric = std::stod(cells[c_m]);
            t.metric_se = std::stod(cells[c_se]);
            t.n_experts = std::stoi(cells[c_e]);
            t.n_params = std::stoi(cells[c_p]);
            out.push_back(t);
        } catch (const std::logic_error&) {
            throw data_error("trial manifest line " + std::to_string(lineno) + ": bad number");
        }
    }
    return out;
}

}  // namespace cocoafuse
