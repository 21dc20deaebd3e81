#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tsprobe/dataset.hpp"
#include "tsprobe/harness.hpp"
#include "tsprobe/model_bridge.hpp"
#include "tsprobe/prompting.hpp"

namespace tsprobe::testing {

/// Unique scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        auto base = std::filesystem::temp_directory_path();
        path = base / ("tsprobe-test-" + std::to_string(::getpid()) + "-" +
                       std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

/// Gaussian series around a per-class mean: class c values ~ N(10c, sigma).
/// The stub's payload statistics make this linearly separable at its planted
/// layer.
inline dataset::SourceTable mean_shifted_table(dataset::Split split, int per_class,
                                               int num_classes, int length, uint64_t seed,
                                               double sigma = 0.3) {
    dataset::SourceTable table;
    table.split = split;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (int c = 1; c <= num_classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            std::vector<float> row(static_cast<size_t>(length));
            for (int t = 0; t < length; ++t)
                row[static_cast<size_t>(t)] = static_cast<float>(10.0 * c + noise(rng));
            table.sequences.push_back(std::move(row));
            table.lengths.push_back(length);
            table.labels.push_back(c);
        }
    }
    return table;
}

inline dataset::IngestMeta toy_meta(const std::string& id, int num_classes, int length,
                                    int channels = 1) {
    dataset::IngestMeta meta;
    meta.id = id;
    meta.num_channels = channels;
    meta.length = length;
    for (int c = 1; c <= num_classes; ++c) meta.class_names.push_back("class" + std::to_string(c));
    return meta;
}

/// Ingests a mean-shifted toy dataset and returns its id.
inline std::string make_toy_dataset(dataset::DatasetStore& store, const std::string& id,
                                    int train_per_class, int test_per_class, int num_classes,
                                    int length, uint64_t seed = 7) {
    auto meta = toy_meta(id, num_classes, length);
    store.ingest({mean_shifted_table(dataset::Split::train, train_per_class, num_classes, length,
                                     seed),
                  mean_shifted_table(dataset::Split::test, test_per_class, num_classes, length,
                                     seed + 1)},
                 meta);
    return id;
}

inline prompting::PromptTemplate toy_template(int num_classes,
                                              const std::string& dataset_id = "toy") {
    prompting::PromptTemplate tmpl;
    tmpl.dataset_id = dataset_id;
    tmpl.task_description =
        "Play as a signal analysis expert: decide which regime produced this series.";
    tmpl.question = "Which regime produced this series?";
    tmpl.hints = {"Mean level: higher regimes sit at higher values.",
                  "Spread: all regimes share similar variability."};
    auto letters = dataset::option_letters(num_classes);
    for (int c = 0; c < num_classes; ++c)
        tmpl.options.emplace_back(letters[static_cast<size_t>(c)],
                                  "class" + std::to_string(c + 1));
    return tmpl;
}

/// Environment rooted in a temp dir with a planted stub registered.
inline harness::Environment toy_env(const std::filesystem::path& root, int num_classes,
                                    const std::string& dataset_id = "toy") {
    harness::Environment env;
    env.data_root = root / "data";
    env.out_root = root / "out";
    env.adapters["stub"] = std::make_shared<model_bridge::StubAdapter>();
    env.templates[dataset_id] = toy_template(num_classes, dataset_id);
    return env;
}

}  // namespace tsprobe::testing
