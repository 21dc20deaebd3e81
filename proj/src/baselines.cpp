#include "tsprobe/baselines.hpp"

#include <algorithm>
#include <map>
#include <random>

#include "tsprobe/errors.hpp"
#include "tsprobe/util.hpp"

namespace tsprobe::baselines {

std::string to_string(HeuristicKind k) {
    switch (k) {
        case HeuristicKind::majority: return "majority";
        case HeuristicKind::prior: return "prior";
        case HeuristicKind::uniform: return "uniform";
    }
    return "majority";
}

HeuristicKind heuristic_from_string(const std::string& s) {
    if (s == "majority") return HeuristicKind::majority;
    if (s == "prior") return HeuristicKind::prior;
    if (s == "uniform") return HeuristicKind::uniform;
    throw ConfigError("unknown heuristic: " + s);
}

std::vector<int> majority_predict(const std::vector<int>& train_labels, int n_test) {
    if (train_labels.empty()) throw DomainError("majority_predict: empty training labels");
    std::map<int, int> counts;
    for (int y : train_labels) ++counts[y];
    int best_class = counts.begin()->first;
    int best_count = counts.begin()->second;
    for (const auto& [cls, count] : counts) {
        if (count > best_count) {  // ties keep the smaller class index (map order)
            best_count = count;
            best_class = cls;
        }
    }
    return std::vector<int>(static_cast<size_t>(n_test), best_class);
}

namespace {

// platform-stable uniform in [0,1) from a seeded splitmix stream
struct UnitStream {
    uint64_t state;
    explicit UnitStream(uint64_t seed) : state(util::mix64(seed)) {}
    double next() { return util::u64_to_unit(util::splitmix64(state)); }
};

}  // namespace

std::vector<int> prior_predict(const std::vector<int>& train_labels, int n_test, uint64_t seed) {
    if (train_labels.empty()) throw DomainError("prior_predict: empty training labels");
    std::map<int, int> counts;
    for (int y : train_labels) ++counts[y];
    std::vector<std::pair<int, double>> cdf;
    double acc = 0.0;
    for (const auto& [cls, count] : counts) {
        acc += static_cast<double>(count) / static_cast<double>(train_labels.size());
        cdf.emplace_back(cls, acc);
    }
    cdf.back().second = 1.0;

    UnitStream rng(seed);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n_test));
    for (int i = 0; i < n_test; ++i) {
        double u = rng.next();
        for (const auto& [cls, bound] : cdf) {
            if (u < bound) {
                out.push_back(cls);
                break;
            }
        }
    }
    return out;
}

std::vector<int> uniform_predict(int num_classes, int n_test, uint64_t seed) {
    if (num_classes < 2) throw DomainError("uniform_predict: need at least 2 classes");
    UnitStream rng(seed ^ 0x7fb5d329728ea185ULL);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(n_test));
    for (int i = 0; i < n_test; ++i)
        out.push_back(1 + static_cast<int>(rng.next() * num_classes));
    return out;
}

RandomProbeRun random_probe_run(const model_bridge::ModelAdapter& reference,
                                const dataset::TimeSeriesDataset& train,
                                const dataset::TimeSeriesDataset& test,
                                const prompting::PromptTemplate& tmpl,
                                const model_bridge::ExtractJob& job,
                                const probes::ProbeConfig& probe_config, uint64_t seed,
                                const std::filesystem::path& store_root,
                                const std::vector<prompting::ShotExample>& shots) {
    auto control = model_bridge::make_random_control(reference, seed);

    auto extract_split = [&](const dataset::TimeSeriesDataset& data) {
        auto key = model_bridge::make_store_key(control->name(), data.id, data.split,
                                                job.modality, tmpl.style, tmpl.shots_per_class,
                                                job.extraction_style, job.serial_config);
        auto store = model_bridge::ActivationStore::create_or_open(
            store_root, key, control->num_layers(), control->hidden_dim());
        model_bridge::extract_dataset(data, tmpl, *control, store, job, shots);
        return store;
    };
    auto train_store = extract_split(train);
    auto test_store = extract_split(test);

    std::map<std::string, int> y_train, y_test;
    for (int i = 0; i < train.num_samples; ++i)
        y_train[train.sample_ids[static_cast<size_t>(i)]] = train.y[static_cast<size_t>(i)];
    for (int i = 0; i < test.num_samples; ++i)
        y_test[test.sample_ids[static_cast<size_t>(i)]] = test.y[static_cast<size_t>(i)];

    RandomProbeRun run;
    run.control_name = control->name();
    run.layerwise = probes::train_layerwise(train_store, y_train, test_store, y_test,
                                            train.num_classes(), probe_config);
    return run;
}

}  // namespace tsprobe::baselines
