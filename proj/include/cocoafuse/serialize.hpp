#pragma once

// Posterior artifacts on disk: posterior.json header plus draws.csv and
// loglik.csv matrices.

#include <string>
#include <vector>

#include <json.hpp>

#include "cocoafuse/sampler.hpp"

namespace cocoafuse {

nlohmann::json to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(const nlohmann::json& doc, SamplerConfig base = {});

struct ParameterSummary {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double q05 = 0.0;
    double q95 = 0.0;
    double rhat = 1.0;
    bool degenerate = false;
    double ess = 0.0;
};

std::vector<ParameterSummary> summarize(const PosteriorSample& post);
std::string summary_csv(const std::vector<ParameterSummary>& rows);

void write_posterior(const std::string& dir, const PosteriorSample& post);
PosteriorSample read_posterior(const std::string& dir);

}  // namespace cocoafuse
