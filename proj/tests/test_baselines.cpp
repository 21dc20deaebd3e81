#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "tsprobe/baselines.hpp"
#include "tsprobe/errors.hpp"
#include "tsprobe/metrics.hpp"

using namespace tsprobe;
using tsprobe::testing::TempDir;

TEST_SUITE("baselines") {

TEST_CASE("majority: modal class everywhere, ties to the smaller index") {
    std::vector<int> train{1, 1, 1, 1, 1, 1, 2, 2, 2, 2};
    auto preds = baselines::majority_predict(train, 5);
    CHECK(preds == std::vector<int>(5, 1));

    std::vector<int> tie{1, 1, 1, 1, 1, 2, 2, 2, 2, 2};
    CHECK(baselines::majority_predict(tie, 3) == std::vector<int>(3, 1));

    CHECK_THROWS_AS(baselines::majority_predict({}, 3), DomainError);
}

TEST_CASE("majority macro F1 on a 60/40 split equals the hand-computed 0.375") {
    // test labels 60% class 1, 40% class 2; always predicting class 1 gives
    // class-1 F1 = 0.75 and class-2 F1 = 0
    std::vector<int> y_test;
    for (int i = 0; i < 60; ++i) y_test.push_back(1);
    for (int i = 0; i < 40; ++i) y_test.push_back(2);
    auto preds = baselines::majority_predict({1, 1, 2}, 100);
    auto r = metrics::macro_f1(y_test, preds, 2);
    CHECK(r.per_class[0].f1 == doctest::Approx(0.75));
    CHECK(r.per_class[1].f1 == 0.0);
    CHECK(r.macro_f1 == doctest::Approx(0.375));
}

TEST_CASE("majority macro F1 equals modal-class F1 / C on random fixtures") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        int C = 2 + static_cast<int>(rng() % 5);
        std::vector<int> train, test;
        for (int i = 0; i < 100; ++i) train.push_back(1 + static_cast<int>(rng() % C));
        for (int i = 0; i < 80; ++i) test.push_back(1 + static_cast<int>(rng() % C));
        auto preds = baselines::majority_predict(train, 80);
        auto r = metrics::macro_f1(test, preds, C);
        int modal = preds[0];
        CHECK(r.macro_f1 ==
              doctest::Approx(r.per_class[static_cast<size_t>(modal - 1)].f1 / C));
    }
}

TEST_CASE("prior: degenerate training distribution, reproducibility, concentration") {
    CHECK(baselines::prior_predict(std::vector<int>(7, 1), 5, 3) == std::vector<int>(5, 1));

    std::vector<int> train{1, 2, 1, 2, 1, 2};
    CHECK(baselines::prior_predict(train, 100, 5) == baselines::prior_predict(train, 100, 5));
    CHECK(baselines::prior_predict(train, 100, 5) != baselines::prior_predict(train, 100, 6));

    // balanced binary, large n: frequencies within +-1% of 0.5
    auto big = baselines::prior_predict(train, 100000, 11);
    double frac1 =
        static_cast<double>(std::count(big.begin(), big.end(), 1)) / static_cast<double>(big.size());
    CHECK(std::abs(frac1 - 0.5) < 0.01);
}

TEST_CASE("uniform: class range, reproducibility, C>=2 required") {
    auto preds = baselines::uniform_predict(4, 1000, 2);
    for (int p : preds) {
        CHECK(p >= 1);
        CHECK(p <= 4);
    }
    CHECK(baselines::uniform_predict(4, 1000, 2) == preds);
    CHECK_THROWS_AS(baselines::uniform_predict(1, 10, 0), DomainError);
}

TEST_CASE("uniform expected macro F1 matches a monte carlo reference") {
    // balanced binary labels; uniform guessing lands near F1 = 0.5
    std::vector<int> y_test;
    for (int i = 0; i < 2000; ++i) y_test.push_back(1 + i % 2);
    double sum = 0.0;
    const int seeds = 30;
    for (int s = 0; s < seeds; ++s) {
        auto preds = baselines::uniform_predict(2, static_cast<int>(y_test.size()),
                                                static_cast<uint64_t>(s));
        sum += metrics::macro_f1(y_test, preds, 2).macro_f1;
    }
    // MC reference band: mean of F1 under uniform guessing on balanced binary
    CHECK(sum / seeds == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("heuristics never read features (signature-level property)") {
    // the API takes labels and counts only; this is a compile-time contract,
    // asserted here by construction
    static_assert(std::is_invocable_v<decltype(&baselines::majority_predict),
                                      const std::vector<int>&, int>);
    static_assert(std::is_invocable_v<decltype(&baselines::uniform_predict), int, int, uint64_t>);
    CHECK(true);
}

TEST_CASE("random_probe_run produces a near-chance curve and is seed-stable") {
    TempDir tmp;
    dataset::DatasetStore store(tmp.path / "data");
    testing::make_toy_dataset(store, "toy", 15, 10, 2, 24);
    auto train = store.load_split("toy", dataset::Split::train);
    auto test = store.load_split("toy", dataset::Split::test);
    auto tmpl = testing::toy_template(2);

    model_bridge::StubAdapter reference;
    model_bridge::ExtractJob job;
    probes::ProbeConfig cfg;
    cfg.max_iterations = 300;

    auto run1 = baselines::random_probe_run(reference, train, test, tmpl, job, cfg, 42,
                                            tmp.path / "acts");
    auto run2 = baselines::random_probe_run(reference, train, test, tmpl, job, cfg, 42,
                                            tmp.path / "acts2");
    CHECK(run1.layerwise.curve.per_layer_f1 == run2.layerwise.curve.per_layer_f1);

    // control features are label-independent: every layer near chance
    // (the planted-signal pathway exists only in the pretrained stub)
    for (double f1 : run1.layerwise.curve.per_layer_f1) CHECK(f1 < 0.85);
    CHECK(run1.control_name.find("random") != std::string::npos);
}

}  // TEST_SUITE
