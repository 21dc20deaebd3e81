#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tsprobe/metrics.hpp"
#include "tsprobe/model_bridge.hpp"

namespace tsprobe::probes {

struct ProbeConfig {
    std::vector<double> c_grid = {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
    int folds = 5;
    int max_iterations = 1000;
    bool standardize = true;
    uint64_t seed = 0;
    double gradient_tolerance = 1e-4;

    void validate() const;
};

/// Multinomial (softmax) logistic regression with L2 penalty on the weights:
/// J(W,b) = sum_i -log softmax(W x_i + b)[y_i] + ||W||_F^2 / (2 c_reg).
struct FitResult {
    Eigen::MatrixXd weights;  // C x D
    Eigen::VectorXd bias;     // C
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;
};

FitResult fit_logistic(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                       int num_classes, double c_reg, int max_iterations,
                       double gradient_tolerance);

double logistic_objective(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                          const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                          double c_reg);

/// Argmax class per row (1-based; exact ties go to the smaller class index).
std::vector<int> predict_classes(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                 const Eigen::MatrixXd& features);

/// Deterministic stratified fold assignment (values 0..folds-1 per sample).
/// Every class is dealt round-robin after a seeded shuffle.
std::vector<int> stratified_folds(const std::vector<int>& labels, int num_classes, int folds,
                                  uint64_t seed);

struct LayerProbe {
    int layer_index = 0;
    int num_classes = 0;
    int dim = 0;
    Eigen::MatrixXd weights;  // C x D
    Eigen::VectorXd bias;     // C
    double chosen_c = 1.0;
    bool converged = false;
    bool standardize = true;
    Eigen::VectorXd feature_mean;  // D (train statistics)
    Eigen::VectorXd feature_std;   // D

    Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& features) const;
    std::string to_json() const;
    static LayerProbe from_json(const std::string& text);
};

/// Grid-searched probe: chosen_c maximizes mean stratified-CV macro F1
/// (ties to the smallest c), then the probe is refit on all training rows.
LayerProbe train_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                       int num_classes, const ProbeConfig& config, int layer_index = 0);

struct ProbeEvaluation {
    metrics::MacroF1Result scores;
    std::vector<int> predictions;  // 1..C
};

ProbeEvaluation evaluate_probe(const LayerProbe& probe, const Eigen::MatrixXd& features,
                               const std::vector<int>& labels);

struct ProbeCurve {
    std::vector<double> per_layer_f1;    // length L+1
    std::vector<double> per_layer_c;
    std::vector<bool> per_layer_converged;
    int best_layer = 0;  // argmax; ties to the lower index

    std::string curve_csv() const;  // layer,macro_f1,chosen_c,converged
};

struct LayerwiseResult {
    ProbeCurve curve;
    std::vector<LayerProbe> probes;                 // length L+1
    std::vector<std::vector<int>> predictions;      // per layer, test predictions
    std::vector<std::string> test_ids;              // row order of predictions
};

/// One independent probe per layer site over an extracted train/test store
/// pair. Labels are looked up by sample id, so skipped samples drop out of
/// both features and labels consistently.
LayerwiseResult train_layerwise(const model_bridge::ActivationStore& train_store,
                                const std::map<std::string, int>& train_labels,
                                const model_bridge::ActivationStore& test_store,
                                const std::map<std::string, int>& test_labels, int num_classes,
                                const ProbeConfig& config);

/// Persists probes/<run-id>/layer<k>.json plus curve.csv under `dir`.
void save_probe_run(const std::filesystem::path& dir, const LayerwiseResult& result);

/// Converts a store layer block into an Eigen matrix (rows follow `ids`).
Eigen::MatrixXd layer_features(const model_bridge::ActivationStore& store, int layer_index,
                               const std::vector<std::string>& ids);

}  // namespace tsprobe::probes
