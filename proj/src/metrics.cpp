#include "tsprobe/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "tsprobe/errors.hpp"
#include "tsprobe/util.hpp"

namespace tsprobe::metrics {

ConfusionCounts confusion_counts(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                 int num_classes) {
    if (y_true.size() != y_pred.size())
        throw ShapeError("confusion_counts: length mismatch " + std::to_string(y_true.size()) +
                         " vs " + std::to_string(y_pred.size()));
    if (num_classes < 1) throw DomainError("confusion_counts: num_classes < 1");
    ConfusionCounts cc;
    cc.num_classes = num_classes;
    cc.tp.assign(static_cast<size_t>(num_classes) + 1, 0);
    cc.fp.assign(static_cast<size_t>(num_classes) + 1, 0);
    cc.fn.assign(static_cast<size_t>(num_classes) + 1, 0);
    for (size_t i = 0; i < y_true.size(); ++i) {
        int t = y_true[i], p = y_pred[i];
        if (t < 1 || t > num_classes)
            throw DomainError("confusion_counts: true label out of range: " + std::to_string(t));
        if (p < 0 || p > num_classes)
            throw DomainError("confusion_counts: prediction out of range: " + std::to_string(p));
        if (p == t) {
            ++cc.tp[static_cast<size_t>(t)];
        } else {
            ++cc.fn[static_cast<size_t>(t)];
            if (p != kFailure) ++cc.fp[static_cast<size_t>(p)];
        }
    }
    return cc;
}

MacroF1Result macro_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                       int num_classes) {
    MacroF1Result r;
    r.counts = confusion_counts(y_true, y_pred, num_classes);
    r.per_class.resize(static_cast<size_t>(num_classes));
    r.failure_count = std::count(y_pred.begin(), y_pred.end(), kFailure);
    double sum = 0.0;
    for (int c = 1; c <= num_classes; ++c) {
        auto tp = static_cast<double>(r.counts.tp[static_cast<size_t>(c)]);
        auto fp = static_cast<double>(r.counts.fp[static_cast<size_t>(c)]);
        auto fn = static_cast<double>(r.counts.fn[static_cast<size_t>(c)]);
        ClassScores& s = r.per_class[static_cast<size_t>(c - 1)];
        s.precision = (tp + fp > 0.0) ? tp / (tp + fp) : 0.0;
        s.recall = (tp + fn > 0.0) ? tp / (tp + fn) : 0.0;
        s.f1 = (s.precision + s.recall > 0.0)
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
        sum += s.f1;
    }
    r.macro_f1 = sum / static_cast<double>(num_classes);
    return r;
}

namespace {

// C(n, k) as an exact 128-bit integer; n <= 64 stays well inside range.
unsigned __int128 binom_u128(int n, int k) {
    if (k < 0 || k > n) return 0;
    if (k > n - k) k = n - k;
    unsigned __int128 num = 1;
    for (int i = 1; i <= k; ++i) {
        num = num * static_cast<unsigned>(n - k + i);
        num /= static_cast<unsigned>(i);  // exact: any i consecutive integers contain a multiple of i
    }
    return num;
}

double u128_ratio(unsigned __int128 a, unsigned __int128 b) {
    return static_cast<double>(static_cast<long double>(a) / static_cast<long double>(b));
}

}  // namespace

double pass_at_k(int correct, int num_samples, int k) {
    if (num_samples < 1) throw DomainError("pass_at_k: n < 1");
    if (k < 1 || k > num_samples) throw DomainError("pass_at_k: K out of range 1..n");
    if (correct < 0 || correct > num_samples) throw DomainError("pass_at_k: c out of range 0..n");
    if (correct == 0) return 0.0;
    if (num_samples - correct < k) return 1.0;
    unsigned __int128 miss = binom_u128(num_samples - correct, k);
    unsigned __int128 total = binom_u128(num_samples, k);
    return 1.0 - u128_ratio(miss, total);
}

double dataset_pass_at_k(const std::vector<int>& per_item_correct, int num_samples, int k) {
    if (per_item_correct.empty()) throw DomainError("dataset_pass_at_k: no items");
    double sum = 0.0;
    for (int c : per_item_correct) sum += pass_at_k(c, num_samples, k);
    return sum / static_cast<double>(per_item_correct.size());
}

PassAtKTable pass_at_k_table(const std::vector<int>& per_item_correct, int num_samples,
                             const std::vector<int>& k_values) {
    PassAtKTable t;
    t.num_samples = num_samples;
    t.per_item_correct = per_item_correct;
    t.k_values = k_values;
    for (int k : k_values) t.estimates.push_back(dataset_pass_at_k(per_item_correct, num_samples, k));
    return t;
}

SpreadReport variant_spread(const std::vector<double>& f1_list) {
    if (f1_list.empty()) throw DomainError("variant_spread: empty list");
    SpreadReport r;
    r.per_variant_f1 = f1_list;
    std::vector<double> sorted = f1_list;
    std::sort(sorted.begin(), sorted.end());
    r.min = sorted.front();
    r.max = sorted.back();
    r.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    size_t n = sorted.size();
    r.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    r.delta = r.max - r.min;
    return r;
}

std::string metric_csv_header() {
    return "dataset,model,method,modality,style,shots,seed,metric,value";
}

std::string metric_csv_line(const MetricRow& row) {
    std::ostringstream ss;
    ss << util::csv_escape(row.dataset) << ',' << util::csv_escape(row.model) << ','
       << util::csv_escape(row.method) << ',' << util::csv_escape(row.modality) << ','
       << util::csv_escape(row.style) << ',' << row.shots << ',' << row.seed << ','
       << util::csv_escape(row.metric) << ',' << util::fmt_double(row.value);
    return ss.str();
}

}  // namespace tsprobe::metrics
