#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "tsprobe/errors.hpp"
#include "tsprobe/metrics.hpp"

using namespace tsprobe;

namespace {

// Brute-force per-class counter oracle, written directly from the one-vs-rest
// definitions and kept independent of the library implementation.
double oracle_macro_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred, int C) {
    double total = 0.0;
    for (int c = 1; c <= C; ++c) {
        long tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < y_true.size(); ++i) {
            if (y_true[i] == c && y_pred[i] == c) ++tp;
            if (y_true[i] != c && y_pred[i] == c) ++fp;
            if (y_true[i] == c && y_pred[i] != c) ++fn;
        }
        double p = (tp + fp) ? double(tp) / double(tp + fp) : 0.0;
        double r = (tp + fn) ? double(tp) / double(tp + fn) : 0.0;
        double f1 = (p + r > 0) ? 2 * p * r / (p + r) : 0.0;
        total += f1;
    }
    return total / C;
}

// Monte Carlo oracle for pass@K: sample K of the n generations without
// replacement, success iff at least one sampled generation was correct.
double mc_pass_at_k(const std::vector<int>& correct_counts, int n, int k, int draws,
                    uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int> idx(static_cast<size_t>(n));
    double hits = 0.0;
    for (int d = 0; d < draws; ++d) {
        const int c = correct_counts[static_cast<size_t>(d) % correct_counts.size()];
        // generations: first c correct, rest wrong; sample K indices
        std::iota(idx.begin(), idx.end(), 0);
        bool any = false;
        for (int j = 0; j < k; ++j) {
            std::uniform_int_distribution<int> pick(j, n - 1);
            std::swap(idx[static_cast<size_t>(j)], idx[static_cast<size_t>(pick(rng))]);
            if (idx[static_cast<size_t>(j)] < c) any = true;
        }
        if (any) hits += 1.0;
    }
    return hits / draws;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("macro f1 exact hand examples") {
    // perfect predictions
    CHECK(metrics::macro_f1({1, 2, 3}, {1, 2, 3}, 3).macro_f1 == doctest::Approx(1.0));

    // y=[A,A,B,B], yhat=[A,B,B,B]: class A F1=2/3, class B F1=0.8
    auto r = metrics::macro_f1({1, 1, 2, 2}, {1, 2, 2, 2}, 2);
    CHECK(r.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(r.per_class[1].f1 == doctest::Approx(0.8));
    CHECK(r.macro_f1 == doctest::Approx((2.0 / 3.0 + 0.8) / 2.0));

    // all-FAILURE predictions: no true positives anywhere
    CHECK(metrics::macro_f1({1, 2, 1}, {0, 0, 0}, 2).macro_f1 == 0.0);
    CHECK(metrics::macro_f1({1, 2, 1}, {0, 0, 0}, 2).failure_count == 3);
}

TEST_CASE("macro f1 counts failures as recall misses without precision hits") {
    // FAILURE adds FN for the true class, FP for nobody
    auto r = metrics::macro_f1({1, 1, 2}, {1, 0, 2}, 2);
    CHECK(r.counts.fn[1] == 1);
    CHECK(r.counts.fp[1] == 0);
    CHECK(r.counts.fp[2] == 0);
}

TEST_CASE("macro f1 equals brute-force oracle on 1000 random fixtures") {
    std::mt19937_64 rng(20260809);
    for (int trial = 0; trial < 1000; ++trial) {
        int C = 2 + static_cast<int>(rng() % 11);    // up to 12
        int N = 1 + static_cast<int>(rng() % 1000);  // up to 1000
        std::vector<int> y_true(static_cast<size_t>(N)), y_pred(static_cast<size_t>(N));
        for (int i = 0; i < N; ++i) {
            y_true[static_cast<size_t>(i)] = 1 + static_cast<int>(rng() % C);
            // ~5% failures mixed in
            y_pred[static_cast<size_t>(i)] =
                (rng() % 20 == 0) ? 0 : 1 + static_cast<int>(rng() % C);
        }
        double got = metrics::macro_f1(y_true, y_pred, C).macro_f1;
        double want = oracle_macro_f1(y_true, y_pred, C);
        REQUIRE(got == want);  // exact: same arithmetic on integer counts
    }
}

TEST_CASE("macro f1 invariant under joint class relabeling") {
    std::mt19937_64 rng(99);
    const int C = 5, N = 200;
    std::vector<int> y_true(N), y_pred(N), perm{1, 2, 3, 4, 5};
    for (int i = 0; i < N; ++i) {
        y_true[i] = 1 + static_cast<int>(rng() % C);
        y_pred[i] = 1 + static_cast<int>(rng() % C);
    }
    double base = metrics::macro_f1(y_true, y_pred, C).macro_f1;
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<int> t2(N), p2(N);
        for (int i = 0; i < N; ++i) {
            t2[i] = perm[static_cast<size_t>(y_true[i] - 1)];
            p2[i] = perm[static_cast<size_t>(y_pred[i] - 1)];
        }
        CHECK(metrics::macro_f1(t2, p2, C).macro_f1 == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("macro f1 errors") {
    CHECK_THROWS_AS(metrics::macro_f1({1, 2}, {1}, 2), ShapeError);
    CHECK_THROWS_AS(metrics::macro_f1({1, 3}, {1, 1}, 2), DomainError);
}

TEST_CASE("pass@k stated conventions and exact values") {
    CHECK(metrics::pass_at_k(0, 20, 5) == 0.0);          // c = 0 -> 0
    CHECK(metrics::pass_at_k(1, 20, 20) == 1.0);         // n-c < K -> 1
    CHECK(metrics::pass_at_k(10, 20, 1) == doctest::Approx(0.5));  // 1 - 10/20
    CHECK(metrics::pass_at_k(20, 20, 1) == 1.0);
    CHECK_THROWS_AS(metrics::pass_at_k(1, 20, 21), DomainError);
    CHECK_THROWS_AS(metrics::pass_at_k(21, 20, 1), DomainError);
}

TEST_CASE("pass@k conventions hold on the full n<=20 grid") {
    for (int n = 1; n <= 20; ++n) {
        for (int c = 0; c <= n; ++c) {
            double prev = -1.0;
            for (int k = 1; k <= n; ++k) {
                double v = metrics::pass_at_k(c, n, k);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                CHECK(v >= prev);  // monotone non-decreasing in K
                prev = v;
                if (c == 0) CHECK(v == 0.0);
                if (c > 0 && n - c < k) CHECK(v == 1.0);
            }
            // binomial identity at K=1
            CHECK(metrics::pass_at_k(c, n, 1) ==
                  doctest::Approx(double(c) / double(n)).epsilon(1e-12));
        }
    }
}

TEST_CASE("dataset pass@k matches monte carlo subset-sampling oracle") {
    std::mt19937_64 rng(4242);
    const int n = 20;
    std::vector<int> correct(50);
    for (auto& c : correct) c = static_cast<int>(rng() % (n + 1));
    for (int k : {1, 5, 10, 20}) {
        double exact = metrics::dataset_pass_at_k(correct, n, k);
        // stratified MC: cycle items so each gets draws/|items| samples
        double mc = mc_pass_at_k(correct, n, k, 100000, 77 + static_cast<uint64_t>(k));
        CHECK(std::abs(exact - mc) < 0.01);
    }
}

TEST_CASE("pass@1 equals mean(c_i)/n exactly on random fixtures") {
    std::mt19937_64 rng(5);
    const int n = 20;
    std::vector<int> correct(40);
    for (auto& c : correct) c = static_cast<int>(rng() % (n + 1));
    double sum = 0.0;
    for (int c : correct) sum += double(c) / n;
    CHECK(metrics::dataset_pass_at_k(correct, n, 1) ==
          doctest::Approx(sum / correct.size()).epsilon(1e-12));
}

TEST_CASE("variant spread") {
    auto r = metrics::variant_spread(std::vector<double>(10, 0.167));
    CHECK(r.delta == 0.0);
    CHECK(r.median == doctest::Approx(0.167));

    auto r2 = metrics::variant_spread({0.1, 0.3});
    CHECK(r2.delta == doctest::Approx(0.2));
    CHECK(r2.mean == doctest::Approx(0.2));

    // order invariance
    auto a = metrics::variant_spread({0.5, 0.1, 0.9, 0.3});
    auto b = metrics::variant_spread({0.9, 0.3, 0.5, 0.1});
    CHECK(a.min == b.min);
    CHECK(a.max == b.max);
    CHECK(a.median == b.median);
    CHECK(a.delta == b.delta);

    CHECK_THROWS_AS(metrics::variant_spread({}), DomainError);
}

TEST_CASE("metric csv row shape") {
    metrics::MetricRow row{"emg", "stub", "probe", "d", "direct", 0, 7, "macro_f1", 0.5};
    CHECK(metrics::metric_csv_line(row) == "emg,stub,probe,d,direct,0,7,macro_f1,0.5");
    CHECK(metrics::metric_csv_header() ==
          "dataset,model,method,modality,style,shots,seed,metric,value");
}

}  // TEST_SUITE
