#include "tsprobe/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "tsprobe/errors.hpp"
#include "tsprobe/util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace tsprobe::probes {

void ProbeConfig::validate() const {
    if (folds < 2) throw ConfigError("probe config: folds must be >= 2");
    if (c_grid.empty()) throw ConfigError("probe config: empty c_grid");
    for (size_t i = 0; i + 1 < c_grid.size(); ++i)
        if (!(c_grid[i] < c_grid[i + 1]))
            throw ConfigError("probe config: c_grid must be strictly increasing");
    for (double c : c_grid)
        if (c <= 0.0) throw ConfigError("probe config: c values must be positive");
    if (max_iterations < 1) throw ConfigError("probe config: max_iterations must be >= 1");
}

namespace {

struct LossGrad {
    double loss = 0.0;
    Eigen::MatrixXd grad_w;
    Eigen::VectorXd grad_b;
};

LossGrad loss_and_grad(const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes,
                       const Eigen::MatrixXd& w, const Eigen::VectorXd& b, double c_reg) {
    const auto n = static_cast<Eigen::Index>(x.rows());
    Eigen::MatrixXd scores = x * w.transpose();
    scores.rowwise() += b.transpose();

    LossGrad out;
    Eigen::MatrixXd p(n, num_classes);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = scores.row(i).maxCoeff();
        double lse = 0.0;
        for (int c = 0; c < num_classes; ++c) lse += std::exp(scores(i, c) - mx);
        lse = mx + std::log(lse);
        out.loss += lse - scores(i, y[static_cast<size_t>(i)] - 1);
        for (int c = 0; c < num_classes; ++c) p(i, c) = std::exp(scores(i, c) - lse);
        p(i, y[static_cast<size_t>(i)] - 1) -= 1.0;
    }
    out.loss += 0.5 / c_reg * w.squaredNorm();
    out.grad_w = p.transpose() * x + w / c_reg;
    out.grad_b = p.colwise().sum().transpose();
    return out;
}

}  // namespace

double logistic_objective(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                          const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                          double c_reg) {
    return loss_and_grad(features, labels, static_cast<int>(weights.rows()), weights, bias, c_reg)
        .loss;
}

FitResult fit_logistic(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                       int num_classes, double c_reg, int max_iterations,
                       double gradient_tolerance) {
    const auto n = features.rows();
    const auto d = features.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw ShapeError("fit_logistic: labels size != rows");
    const Eigen::Index dim = static_cast<Eigen::Index>(num_classes) * d + num_classes;

    auto unpack_w = [&](const Eigen::VectorXd& theta) {
        return Eigen::Map<const Eigen::MatrixXd>(theta.data(), num_classes, d).eval();
    };
    auto unpack_b = [&](const Eigen::VectorXd& theta) {
        return theta.tail(num_classes).eval();
    };
    auto eval = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
        LossGrad lg = loss_and_grad(features, labels, num_classes, unpack_w(theta),
                                    unpack_b(theta), c_reg);
        grad.resize(dim);
        Eigen::Map<Eigen::MatrixXd>(grad.data(), num_classes, d) = lg.grad_w;
        grad.tail(num_classes) = lg.grad_b;
        return lg.loss;
    };

    // L-BFGS with Armijo backtracking; plain and deterministic
    constexpr int kHistory = 10;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd grad;
    double f = eval(theta, grad);

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;

    FitResult result;
    result.converged = false;
    int iter = 0;
    for (; iter < max_iterations; ++iter) {
        if (grad.norm() <= gradient_tolerance) {
            result.converged = true;
            break;
        }
        // two-loop recursion
        Eigen::VectorXd q = grad;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[static_cast<size_t>(i)] =
                rho_hist[static_cast<size_t>(i)] * s_hist[static_cast<size_t>(i)].dot(q);
            q -= alpha[static_cast<size_t>(i)] * y_hist[static_cast<size_t>(i)];
        }
        double gamma = 1.0;
        if (!s_hist.empty()) {
            double yy = y_hist.back().squaredNorm();
            if (yy > 0) gamma = s_hist.back().dot(y_hist.back()) / yy;
        }
        Eigen::VectorXd direction = gamma * q;
        for (size_t i = 0; i < s_hist.size(); ++i) {
            double beta = rho_hist[i] * y_hist[i].dot(direction);
            direction += (alpha[i] - beta) * s_hist[i];
        }
        direction = -direction;

        double descent = grad.dot(direction);
        if (descent >= 0.0) {  // fall back to steepest descent
            direction = -grad;
            descent = -grad.squaredNorm();
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        double step = s_hist.empty() ? std::min(1.0, 1.0 / (1.0 + grad.norm())) : 1.0;
        Eigen::VectorXd theta_new;
        Eigen::VectorXd grad_new;
        double f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            theta_new = theta + step * direction;
            f_new = eval(theta_new, grad_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * descent) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // numerically stuck; report non-convergence below

        Eigen::VectorXd s = theta_new - theta;
        Eigen::VectorXd yv = grad_new - grad;
        double sy = s.dot(yv);
        if (sy > 1e-12) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > kHistory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        theta = std::move(theta_new);
        grad = std::move(grad_new);
        f = f_new;
    }
    if (!result.converged && grad.norm() <= gradient_tolerance) result.converged = true;

    result.weights = unpack_w(theta);
    result.bias = unpack_b(theta);
    result.iterations = iter;
    result.objective = f;
    return result;
}

std::vector<int> predict_classes(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                 const Eigen::MatrixXd& features) {
    if (features.cols() != weights.cols())
        throw ShapeError("predict: feature dim " + std::to_string(features.cols()) +
                         " != probe dim " + std::to_string(weights.cols()));
    Eigen::MatrixXd scores = features * weights.transpose();
    scores.rowwise() += bias.transpose();
    std::vector<int> out(static_cast<size_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        int best = 0;
        for (int c = 1; c < scores.cols(); ++c)
            if (scores(i, c) > scores(i, best)) best = c;
        out[static_cast<size_t>(i)] = best + 1;
    }
    return out;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int num_classes, int folds,
                                  uint64_t seed) {
    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(num_classes));
    for (size_t i = 0; i < labels.size(); ++i) {
        int y = labels[i];
        if (y < 1 || y > num_classes)
            throw DomainError("stratified_folds: label out of range: " + std::to_string(y));
        by_class[static_cast<size_t>(y - 1)].push_back(i);
    }
    std::vector<int> assignment(labels.size(), -1);
    std::mt19937_64 rng(seed);
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (size_t j = 0; j < idx.size(); ++j)
            assignment[idx[j]] = static_cast<int>(j % static_cast<size_t>(folds));
    }
    return assignment;
}

namespace {

struct Standardizer {
    Eigen::VectorXd mean, std;

    static Standardizer fit(const Eigen::MatrixXd& x) {
        Standardizer s;
        s.mean = x.colwise().mean();
        Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
        s.std = (centered.array().square().colwise().mean()).sqrt();
        for (Eigen::Index i = 0; i < s.std.size(); ++i)
            if (s.std(i) < 1e-12) s.std(i) = 1.0;
        return s;
    }
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
        return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
    }
};

void check_labels(const std::vector<int>& labels, int num_classes, int folds) {
    std::vector<int> counts(static_cast<size_t>(num_classes), 0);
    for (int y : labels) {
        if (y < 1 || y > num_classes)
            throw DomainError("train_probe: label out of range: " + std::to_string(y));
        ++counts[static_cast<size_t>(y - 1)];
    }
    for (int c = 0; c < num_classes; ++c) {
        if (counts[static_cast<size_t>(c)] == 0)
            throw DegenerateLabelsError("class " + std::to_string(c + 1) +
                                        " absent from training labels");
        if (counts[static_cast<size_t>(c)] < folds)
            throw DegenerateLabelsError("class " + std::to_string(c + 1) + " has " +
                                        std::to_string(counts[static_cast<size_t>(c)]) +
                                        " samples, fewer than " + std::to_string(folds) +
                                        " folds");
    }
}

}  // namespace

LayerProbe train_probe(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                       int num_classes, const ProbeConfig& config, int layer_index) {
    config.validate();
    if (num_classes < 2) throw DegenerateLabelsError("train_probe: need at least 2 classes");
    if (static_cast<size_t>(features.rows()) != labels.size())
        throw ShapeError("train_probe: features rows != labels size");
    if (!features.allFinite()) throw DomainError("train_probe: non-finite feature");
    check_labels(labels, num_classes, config.folds);

    const std::vector<int> fold_of = stratified_folds(labels, num_classes, config.folds, config.seed);

    double best_c = config.c_grid.front();
    double best_score = -1.0;
    for (double c_reg : config.c_grid) {
        double score_sum = 0.0;
        for (int fold = 0; fold < config.folds; ++fold) {
            std::vector<Eigen::Index> train_idx, val_idx;
            for (size_t i = 0; i < labels.size(); ++i)
                (fold_of[i] == fold ? val_idx : train_idx).push_back(static_cast<Eigen::Index>(i));
            Eigen::MatrixXd x_train(train_idx.size(), features.cols());
            Eigen::MatrixXd x_val(val_idx.size(), features.cols());
            std::vector<int> y_train(train_idx.size()), y_val(val_idx.size());
            for (size_t i = 0; i < train_idx.size(); ++i) {
                x_train.row(static_cast<Eigen::Index>(i)) = features.row(train_idx[i]);
                y_train[i] = labels[static_cast<size_t>(train_idx[i])];
            }
            for (size_t i = 0; i < val_idx.size(); ++i) {
                x_val.row(static_cast<Eigen::Index>(i)) = features.row(val_idx[i]);
                y_val[i] = labels[static_cast<size_t>(val_idx[i])];
            }
            if (config.standardize) {
                Standardizer s = Standardizer::fit(x_train);
                x_train = s.apply(x_train);
                x_val = s.apply(x_val);
            }
            FitResult fit = fit_logistic(x_train, y_train, num_classes, c_reg,
                                         config.max_iterations, config.gradient_tolerance);
            auto preds = predict_classes(fit.weights, fit.bias, x_val);
            score_sum += metrics::macro_f1(y_val, preds, num_classes).macro_f1;
        }
        double mean_score = score_sum / config.folds;
        if (mean_score > best_score) {  // ties keep the earlier (smaller) c
            best_score = mean_score;
            best_c = c_reg;
        }
    }

    LayerProbe probe;
    probe.layer_index = layer_index;
    probe.num_classes = num_classes;
    probe.dim = static_cast<int>(features.cols());
    probe.chosen_c = best_c;
    probe.standardize = config.standardize;
    Eigen::MatrixXd x_full = features;
    if (config.standardize) {
        Standardizer s = Standardizer::fit(features);
        probe.feature_mean = s.mean;
        probe.feature_std = s.std;
        x_full = s.apply(features);
    } else {
        probe.feature_mean = Eigen::VectorXd::Zero(features.cols());
        probe.feature_std = Eigen::VectorXd::Ones(features.cols());
    }
    FitResult fit = fit_logistic(x_full, labels, num_classes, best_c, config.max_iterations,
                                 config.gradient_tolerance);
    probe.weights = fit.weights;
    probe.bias = fit.bias;
    probe.converged = fit.converged;
    return probe;
}

Eigen::MatrixXd LayerProbe::apply_standardization(const Eigen::MatrixXd& features) const {
    if (!standardize) return features;
    return (features.rowwise() - feature_mean.transpose()).array().rowwise() /
           feature_std.transpose().array();
}

ProbeEvaluation evaluate_probe(const LayerProbe& probe, const Eigen::MatrixXd& features,
                               const std::vector<int>& labels) {
    if (features.cols() != probe.dim)
        throw ShapeError("evaluate_probe: feature dim " + std::to_string(features.cols()) +
                         " != probe dim " + std::to_string(probe.dim));
    ProbeEvaluation ev;
    ev.predictions = predict_classes(probe.weights, probe.bias,
                                     probe.apply_standardization(features));
    ev.scores = metrics::macro_f1(labels, ev.predictions, probe.num_classes);
    return ev;
}

namespace {

std::string f32_b64(const Eigen::MatrixXd& m) {
    std::vector<float> v(static_cast<size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<size_t>(i)] =
        static_cast<float>(m.data()[i]);
    return util::base64_encode(v.data(), v.size() * sizeof(float));
}

std::vector<float> b64_f32(const std::string& text) {
    auto bytes = util::base64_decode(text);
    std::vector<float> v(bytes.size() / sizeof(float));
    std::memcpy(v.data(), bytes.data(), v.size() * sizeof(float));
    return v;
}

}  // namespace

std::string LayerProbe::to_json() const {
    json j;
    j["layer_index"] = layer_index;
    j["num_classes"] = num_classes;
    j["dim"] = dim;
    j["chosen_c"] = chosen_c;
    j["converged"] = converged;
    j["standardize"] = standardize;
    j["weights_f32_b64"] = f32_b64(weights);
    j["bias_f32_b64"] = f32_b64(bias);
    j["feature_mean_f32_b64"] = f32_b64(feature_mean);
    j["feature_std_f32_b64"] = f32_b64(feature_std);
    return j.dump(2) + "\n";
}

LayerProbe LayerProbe::from_json(const std::string& text) {
    json j = json::parse(text);
    LayerProbe p;
    p.layer_index = j.at("layer_index").get<int>();
    p.num_classes = j.at("num_classes").get<int>();
    p.dim = j.at("dim").get<int>();
    p.chosen_c = j.at("chosen_c").get<double>();
    p.converged = j.at("converged").get<bool>();
    p.standardize = j.at("standardize").get<bool>();
    auto w = b64_f32(j.at("weights_f32_b64").get<std::string>());
    p.weights = Eigen::MatrixXd(p.num_classes, p.dim);
    for (Eigen::Index i = 0; i < p.weights.size(); ++i)
        p.weights.data()[i] = w[static_cast<size_t>(i)];
    auto b = b64_f32(j.at("bias_f32_b64").get<std::string>());
    p.bias = Eigen::VectorXd(p.num_classes);
    for (int i = 0; i < p.num_classes; ++i) p.bias(i) = b[static_cast<size_t>(i)];
    auto mean = b64_f32(j.at("feature_mean_f32_b64").get<std::string>());
    auto sd = b64_f32(j.at("feature_std_f32_b64").get<std::string>());
    p.feature_mean = Eigen::VectorXd(p.dim);
    p.feature_std = Eigen::VectorXd(p.dim);
    for (int i = 0; i < p.dim; ++i) {
        p.feature_mean(i) = mean[static_cast<size_t>(i)];
        p.feature_std(i) = sd[static_cast<size_t>(i)];
    }
    return p;
}

std::string ProbeCurve::curve_csv() const {
    std::ostringstream ss;
    ss << "layer,macro_f1,chosen_c,converged\n";
    for (size_t i = 0; i < per_layer_f1.size(); ++i)
        ss << i << ',' << util::fmt_double(per_layer_f1[i]) << ','
           << util::fmt_double(per_layer_c[i]) << ','
           << (per_layer_converged[i] ? "true" : "false") << '\n';
    return ss.str();
}

Eigen::MatrixXd layer_features(const model_bridge::ActivationStore& store, int layer_index,
                               const std::vector<std::string>& ids) {
    std::vector<float> block = store.layer_matrix(layer_index, ids);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ids.size()), store.dim());
    for (size_t i = 0; i < ids.size(); ++i)
        for (int d = 0; d < store.dim(); ++d)
            x(static_cast<Eigen::Index>(i), d) =
                static_cast<double>(block[i * static_cast<size_t>(store.dim()) +
                                          static_cast<size_t>(d)]);
    return x;
}

namespace {

std::vector<int> lookup_labels(const std::vector<std::string>& ids,
                               const std::map<std::string, int>& labels) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = labels.find(id);
        if (it == labels.end()) throw ConfigError("no label for sample id " + id);
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

LayerwiseResult train_layerwise(const model_bridge::ActivationStore& train_store,
                                const std::map<std::string, int>& train_labels,
                                const model_bridge::ActivationStore& test_store,
                                const std::map<std::string, int>& test_labels, int num_classes,
                                const ProbeConfig& config) {
    if (train_store.num_layers() != test_store.num_layers() ||
        train_store.dim() != test_store.dim())
        throw ShapeError("train/test stores disagree on (L, D)");
    const auto& ktrain = train_store.key();
    const auto& ktest = test_store.key();
    if (ktrain.split != "train" || ktest.split != "test")
        throw ConfigError("layerwise training expects a (train, test) store pair");
    model_bridge::StoreKey lineage = ktrain;
    lineage.split = ktest.split;
    if (lineage.canonical() != ktest.canonical())
        throw ConfigError("train/test stores differ beyond the split:\n  " + ktrain.canonical() +
                          "\n  " + ktest.canonical());

    const auto train_ids = train_store.ids();
    const auto test_ids = test_store.ids();
    if (train_ids.empty() || test_ids.empty())
        throw DomainError("layerwise training with an empty store");
    const auto y_train = lookup_labels(train_ids, train_labels);
    const auto y_test = lookup_labels(test_ids, test_labels);

    LayerwiseResult result;
    result.test_ids = test_ids;
    const int sites = train_store.num_layers() + 1;
    for (int layer = 0; layer < sites; ++layer) {
        Eigen::MatrixXd x_train = layer_features(train_store, layer, train_ids);
        Eigen::MatrixXd x_test = layer_features(test_store, layer, test_ids);
        LayerProbe probe = train_probe(x_train, y_train, num_classes, config, layer);
        ProbeEvaluation ev = evaluate_probe(probe, x_test, y_test);
        result.curve.per_layer_f1.push_back(ev.scores.macro_f1);
        result.curve.per_layer_c.push_back(probe.chosen_c);
        result.curve.per_layer_converged.push_back(probe.converged);
        result.predictions.push_back(ev.predictions);
        result.probes.push_back(std::move(probe));
    }
    result.curve.best_layer = static_cast<int>(
        std::max_element(result.curve.per_layer_f1.begin(), result.curve.per_layer_f1.end()) -
        result.curve.per_layer_f1.begin());
    return result;
}

void save_probe_run(const fs::path& dir, const LayerwiseResult& result) {
    fs::create_directories(dir);
    for (const auto& probe : result.probes)
        util::atomic_write(dir / ("layer" + std::to_string(probe.layer_index) + ".json"),
                           probe.to_json());
    util::atomic_write(dir / "curve.csv", result.curve.curve_csv());
}

}  // namespace tsprobe::probes
