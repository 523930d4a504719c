#pragma once

// Complexity-aware model selection over fitted trials.

#include <string>
#include <vector>

#include <json.hpp>

namespace cocoafuse {

struct Trial {
    std::string id;
    double metric = 0.0;  // PSIS-LOO, larger is better
    double metric_se = 0.0;
    int n_experts = 1;
    int n_params = 1;

    void validate() const;
};

/// True when `a` dominates `b` (metric max, complexities min).
bool dominates(const Trial& a, const Trial& b);

/// Non-dominated trials, sorted by (n_experts, n_params, id).
std::vector<Trial> pareto_front(const std::vector<Trial>& trials);

/// One-sided Cantelli bound on P(candidate > incumbent).
double improvement_lower_bound(const Trial& candidate, const Trial& incumbent);

struct SelectionStep {
    std::string id;
    double bound = 0.0;
    bool accepted = false;
};

struct SelectionResult {
    Trial selected;
    std::vector<Trial> front;
    std::vector<SelectionStep> visits;
    double tau = 0.5;
};

SelectionResult select(const std::vector<Trial>& trials, double tau = 0.5);

nlohmann::json to_json(const SelectionResult& r);

/// Manifest as a JSON array of objects or CSV with columns
/// id, metric, se, n_experts, n_params.
std::vector<Trial> load_trials(const std::string& path);
std::vector<Trial> trials_from_json(const nlohmann::json& doc);

}  // namespace cocoafuse
