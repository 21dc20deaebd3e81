#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tsprobe::metrics {

/// Prediction value meaning "the model produced no parseable answer".
/// Scored as wrong for every class: it adds a false negative for the true
/// class and a true positive / false positive for none.
inline constexpr int kFailure = 0;

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct ConfusionCounts {
    // index 0 unused; classes are 1..C
    std::vector<int64_t> tp, fp, fn;
    int num_classes = 0;
};

struct MacroF1Result {
    double macro_f1 = 0.0;
    std::vector<ClassScores> per_class;  // size C, index c-1
    ConfusionCounts counts;
    int64_t failure_count = 0;  // predictions equal to kFailure
};

/// Confusion counts over labels in 1..C; predictions may additionally be
/// kFailure. Throws ShapeError on length mismatch, DomainError on out-of-range
/// labels.
ConfusionCounts confusion_counts(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                 int num_classes);

/// Macro F1 with the 0/0 -> 0 convention per class, averaged over all C
/// classes (absent classes included).
MacroF1Result macro_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                       int num_classes);

/// Unbiased pass@K for one item from n samples with c correct:
/// 1 - C(n-c, K) / C(n, K), exact integer binomials.
/// Conventions: c == 0 -> 0; n - c < K -> 1. Requires 1 <= K <= n, 0 <= c <= n.
double pass_at_k(int correct, int num_samples, int k);

/// Mean of per-item pass@K estimates. Requires uniform n across items.
double dataset_pass_at_k(const std::vector<int>& per_item_correct, int num_samples, int k);

struct PassAtKTable {
    int num_samples = 0;                 // n
    std::vector<int> per_item_correct;   // c_i
    std::vector<int> k_values;
    std::vector<double> estimates;       // same order as k_values
};

PassAtKTable pass_at_k_table(const std::vector<int>& per_item_correct, int num_samples,
                             const std::vector<int>& k_values);

struct SpreadReport {
    std::vector<double> per_variant_f1;
    double min = 0.0, max = 0.0, mean = 0.0, median = 0.0;
    double delta = 0.0;  // max - min
};

SpreadReport variant_spread(const std::vector<double>& f1_list);

/// One row of the canonical metric CSV:
/// dataset,model,method,modality,style,shots,seed,metric,value
struct MetricRow {
    std::string dataset, model, method, modality, style;
    int shots = 0;
    int64_t seed = 0;
    std::string metric;
    double value = 0.0;
};

std::string metric_csv_header();
std::string metric_csv_line(const MetricRow& row);

}  // namespace tsprobe::metrics
