#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "test_helpers.hpp"
#include "tsprobe/errors.hpp"
#include "tsprobe/probes.hpp"

using namespace tsprobe;

namespace {

// Two well-separated gaussian blobs (or C blobs on coordinate axes).
void make_blobs(int per_class, int num_classes, int dim, double separation, uint64_t seed,
                Eigen::MatrixXd& x, std::vector<int>& y, double sigma = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    x.resize(per_class * num_classes, dim);
    y.assign(static_cast<size_t>(per_class) * num_classes, 0);
    Eigen::Index row = 0;
    for (int c = 0; c < num_classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++row) {
            for (int d = 0; d < dim; ++d) x(row, d) = noise(rng);
            x(row, c % dim) += separation * (c + 1);
            y[static_cast<size_t>(row)] = c + 1;
        }
    }
}

// Independent full-batch gradient-descent reference for the same objective:
// sum of NLL + ||W||^2/(2C). Written from the formulas directly, sharing no
// code with the library optimizer.
struct GdRef {
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
    double objective = 0.0;
};

double gd_objective(const Eigen::MatrixXd& x, const std::vector<int>& y, int C,
                    const Eigen::MatrixXd& w, const Eigen::VectorXd& b, double c_reg) {
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::VectorXd scores = w * x.row(i).transpose() + b;
        double mx = scores.maxCoeff();
        double lse = 0.0;
        for (int c = 0; c < C; ++c) lse += std::exp(scores(c) - mx);
        lse = mx + std::log(lse);
        loss += lse - scores(y[static_cast<size_t>(i)] - 1);
    }
    loss += w.squaredNorm() / (2.0 * c_reg);
    return loss;
}

GdRef gd_reference(const Eigen::MatrixXd& x, const std::vector<int>& y, int C, double c_reg,
                   int iterations, double lr) {
    GdRef ref;
    ref.w = Eigen::MatrixXd::Zero(C, x.cols());
    ref.b = Eigen::VectorXd::Zero(C);
    for (int it = 0; it < iterations; ++it) {
        Eigen::MatrixXd gw = ref.w / c_reg;
        Eigen::VectorXd gb = Eigen::VectorXd::Zero(C);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            Eigen::VectorXd scores = ref.w * x.row(i).transpose() + ref.b;
            double mx = scores.maxCoeff();
            Eigen::VectorXd p = (scores.array() - mx).exp();
            p /= p.sum();
            p(y[static_cast<size_t>(i)] - 1) -= 1.0;
            gw += p * x.row(i);
            gb += p;
        }
        ref.w -= lr * gw;
        ref.b -= lr * gb;
    }
    ref.objective = gd_objective(x, y, C, ref.w, ref.b, c_reg);
    return ref;
}

}  // namespace

TEST_SUITE("probes") {

TEST_CASE("separable blobs reach macro F1 = 1.0") {
    Eigen::MatrixXd x_train, x_test;
    std::vector<int> y_train, y_test;
    make_blobs(30, 2, 8, 10.0, 1, x_train, y_train);  // 10 sigma separation
    make_blobs(20, 2, 8, 10.0, 2, x_test, y_test);

    probes::ProbeConfig cfg;
    auto probe = probes::train_probe(x_train, y_train, 2, cfg);
    auto ev = probes::evaluate_probe(probe, x_test, y_test);
    CHECK(ev.scores.macro_f1 == 1.0);
    CHECK(probe.converged);
    // chosen C belongs to the grid
    CHECK(std::find(cfg.c_grid.begin(), cfg.c_grid.end(), probe.chosen_c) != cfg.c_grid.end());
}

TEST_CASE("anticorrelated probe scores 0 on balanced binary data") {
    Eigen::MatrixXd x_train, x_test;
    std::vector<int> y_train, y_test;
    make_blobs(30, 2, 8, 10.0, 3, x_train, y_train);
    make_blobs(20, 2, 8, 10.0, 4, x_test, y_test);
    probes::ProbeConfig cfg;
    auto probe = probes::train_probe(x_train, y_train, 2, cfg);
    // negate the decision surface: every prediction flips, F1 collapses to 0
    probe.weights = -probe.weights;
    probe.bias = -probe.bias;
    auto ev = probes::evaluate_probe(probe, x_test, y_test);
    CHECK(ev.scores.macro_f1 == 0.0);
}

TEST_CASE("shuffled labels land in the chance band (MC over 50 seeds)") {
    // C=2 balanced, features carry no label signal once labels are shuffled
    Eigen::MatrixXd x;
    std::vector<int> y;
    make_blobs(60, 2, 8, 10.0, 5, x, y);
    probes::ProbeConfig cfg;
    cfg.max_iterations = 300;

    double sum = 0.0;
    const int seeds = 50;
    for (int s = 0; s < seeds; ++s) {
        std::vector<int> shuffled = y;
        std::mt19937_64 rng(static_cast<uint64_t>(s) + 100);
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        // split 80/40 train/test
        Eigen::MatrixXd x_train = x.topRows(80), x_test = x.bottomRows(40);
        std::vector<int> y_train(shuffled.begin(), shuffled.begin() + 80);
        std::vector<int> y_test(shuffled.begin() + 80, shuffled.end());
        cfg.seed = static_cast<uint64_t>(s);
        try {
            auto probe = probes::train_probe(x_train, y_train, 2, cfg);
            sum += probes::evaluate_probe(probe, x_test, y_test).scores.macro_f1;
        } catch (const DegenerateLabelsError&) {
            sum += 0.5;  // extreme shuffle left a class underrepresented; count as chance
        }
    }
    double mean = sum / seeds;
    CHECK(mean > 0.4);
    CHECK(mean < 0.6);
}

TEST_CASE("objective matches the independent gradient-descent reference") {
    Eigen::MatrixXd x;
    std::vector<int> y;
    // overlapping classes keep the reference solver well-conditioned
    make_blobs(40, 3, 6, 1.0, 6, x, y, 2.0);  // N=120 <= 200, D=6 <= 16

    for (double c_reg : {0.1, 1.0, 10.0}) {
        auto fit = probes::fit_logistic(x, y, 3, c_reg, 2000, 1e-8);
        auto ref = gd_reference(x, y, 3, c_reg, 30000, 1e-3);
        // compare objective values through the oracle's own objective code
        double fit_obj = gd_objective(x, y, 3, fit.weights, fit.bias, c_reg);
        double rel = std::abs(fit_obj - ref.objective) / std::max(1.0, std::abs(ref.objective));
        CHECK(rel < 1e-4);
        // and the library's objective agrees with the oracle formula
        CHECK(probes::logistic_objective(x, y, fit.weights, fit.bias, c_reg) ==
              doctest::Approx(fit_obj).epsilon(1e-9));
    }
}

TEST_CASE("determinism: fixed seed gives identical chosen_c and predictions") {
    Eigen::MatrixXd x_train, x_test;
    std::vector<int> y_train, y_test;
    make_blobs(25, 3, 8, 1.0, 7, x_train, y_train, 2.0);  // noisy: not trivially separable
    make_blobs(15, 3, 8, 1.0, 8, x_test, y_test, 2.0);
    probes::ProbeConfig cfg;
    cfg.seed = 99;
    auto p1 = probes::train_probe(x_train, y_train, 3, cfg);
    auto p2 = probes::train_probe(x_train, y_train, 3, cfg);
    CHECK(p1.chosen_c == p2.chosen_c);
    CHECK(probes::evaluate_probe(p1, x_test, y_test).predictions ==
          probes::evaluate_probe(p2, x_test, y_test).predictions);
}

TEST_CASE("argmax invariance under joint power-of-two feature scaling") {
    Eigen::MatrixXd x_train, x_test;
    std::vector<int> y_train, y_test;
    make_blobs(25, 2, 8, 1.5, 9, x_train, y_train, 2.0);
    make_blobs(15, 2, 8, 1.5, 10, x_test, y_test, 2.0);
    probes::ProbeConfig cfg;
    cfg.standardize = true;
    auto base = probes::train_probe(x_train, y_train, 2, cfg);
    auto base_pred = probes::evaluate_probe(base, x_test, y_test).predictions;

    // scale train and test by 4: standardization statistics absorb it exactly
    auto scaled = probes::train_probe(4.0 * x_train, y_train, 2, cfg);
    auto scaled_pred = probes::evaluate_probe(scaled, 4.0 * x_test, y_test).predictions;
    CHECK(base_pred == scaled_pred);
    CHECK(base.chosen_c == scaled.chosen_c);
}

TEST_CASE("degenerate labels are rejected") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, 4);
    std::vector<int> y(20, 1);  // single class
    probes::ProbeConfig cfg;
    CHECK_THROWS_AS(probes::train_probe(x, y, 2, cfg), DegenerateLabelsError);

    // class with fewer samples than folds
    std::vector<int> y2(20, 1);
    y2[0] = 2;
    CHECK_THROWS_AS(probes::train_probe(x, y2, 2, cfg), DegenerateLabelsError);
}

TEST_CASE("dimension mismatch raises ShapeError") {
    Eigen::MatrixXd x;
    std::vector<int> y;
    make_blobs(20, 2, 8, 10.0, 11, x, y);
    probes::ProbeConfig cfg;
    auto probe = probes::train_probe(x, y, 2, cfg);
    Eigen::MatrixXd wrong = Eigen::MatrixXd::Random(5, 4);
    CHECK_THROWS_AS(probes::evaluate_probe(probe, wrong, {1, 2, 1, 2, 1}), ShapeError);
}

TEST_CASE("stratified folds partition every sample exactly once, stratified") {
    std::vector<int> y;
    for (int i = 0; i < 50; ++i) y.push_back(1 + i % 3);
    auto folds = probes::stratified_folds(y, 3, 5, 42);
    REQUIRE(folds.size() == y.size());
    // every sample assigned to exactly one fold in range
    std::map<int, std::map<int, int>> per_fold_class;
    for (size_t i = 0; i < y.size(); ++i) {
        CHECK(folds[i] >= 0);
        CHECK(folds[i] < 5);
        per_fold_class[folds[i]][y[i]]++;
    }
    // stratification: every fold sees every class
    for (const auto& [fold, classes] : per_fold_class) {
        CHECK(classes.size() == 3);
    }
    // determinism
    CHECK(probes::stratified_folds(y, 3, 5, 42) == folds);
    CHECK(probes::stratified_folds(y, 3, 5, 43) != folds);
}

TEST_CASE("c_grid ties break toward the smaller value") {
    // perfectly separable data: every C value reaches CV F1 = 1, so the
    // smallest grid value must win
    Eigen::MatrixXd x;
    std::vector<int> y;
    make_blobs(30, 2, 8, 50.0, 12, x, y, 0.1);
    probes::ProbeConfig cfg;
    auto probe = probes::train_probe(x, y, 2, cfg);
    CHECK(probe.chosen_c == cfg.c_grid.front());
}

TEST_CASE("config validation") {
    probes::ProbeConfig cfg;
    cfg.folds = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.c_grid = {1.0, 0.5};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.c_grid = {};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("probe json round trip") {
    Eigen::MatrixXd x;
    std::vector<int> y;
    make_blobs(20, 2, 4, 5.0, 13, x, y);
    probes::ProbeConfig cfg;
    auto probe = probes::train_probe(x, y, 2, cfg);
    auto back = probes::LayerProbe::from_json(probe.to_json());
    CHECK(back.chosen_c == probe.chosen_c);
    CHECK(back.dim == probe.dim);
    // float32 round trip is lossy vs double, so compare loosely and then
    // check predictions survive exactly
    auto p1 = probes::evaluate_probe(probe, x, y).predictions;
    auto p2 = probes::evaluate_probe(back, x, y).predictions;
    CHECK(p1 == p2);
}

}  // TEST_SUITE
