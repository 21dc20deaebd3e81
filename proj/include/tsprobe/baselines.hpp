#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsprobe/probes.hpp"

namespace tsprobe::baselines {

enum class HeuristicKind { majority, prior, uniform };

std::string to_string(HeuristicKind k);
HeuristicKind heuristic_from_string(const std::string& s);

/// Every prediction is the modal training class; ties go to the smallest
/// class index. Label-only by signature.
std::vector<int> majority_predict(const std::vector<int>& train_labels, int n_test);

/// I.i.d. draws from the empirical training class distribution.
std::vector<int> prior_predict(const std::vector<int>& train_labels, int n_test, uint64_t seed);

/// I.i.d. uniform over 1..num_classes; requires num_classes >= 2.
std::vector<int> uniform_predict(int num_classes, int n_test, uint64_t seed);

struct RandomProbeRun {
    probes::LayerwiseResult layerwise;
    std::string control_name;
};

/// Full extract -> probe pipeline on a freshly initialized control of the
/// reference architecture. Results carry method tag "random_probe".
RandomProbeRun random_probe_run(const model_bridge::ModelAdapter& reference,
                                const dataset::TimeSeriesDataset& train,
                                const dataset::TimeSeriesDataset& test,
                                const prompting::PromptTemplate& tmpl,
                                const model_bridge::ExtractJob& job,
                                const probes::ProbeConfig& probe_config, uint64_t seed,
                                const std::filesystem::path& store_root,
                                const std::vector<prompting::ShotExample>& shots = {});

}  // namespace tsprobe::baselines
