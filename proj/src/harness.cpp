#include "tsprobe/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "tsprobe/errors.hpp"
#include "tsprobe/minitoml.hpp"
#include "tsprobe/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsprobe::harness {

const char* kHarnessVersion = "tsprobe/0.1.0";

std::string to_string(Method m) {
    switch (m) {
        case Method::prompt: return "prompt";
        case Method::probe: return "probe";
        case Method::heuristic: return "heuristic";
        case Method::random_probe: return "random_probe";
    }
    return "prompt";
}

Method method_from_string(const std::string& s) {
    if (s == "prompt") return Method::prompt;
    if (s == "probe") return Method::probe;
    if (s == "heuristic") return Method::heuristic;
    if (s == "random_probe") return Method::random_probe;
    throw ConfigError("unknown method: " + s);
}

std::string RunSpec::method_label() const {
    if (method == Method::heuristic) return baselines::to_string(heuristic);
    return to_string(method);
}

std::string RunSpec::canonical_json() const {
    json j;
    j["model"] = model;
    j["dataset"] = dataset;
    j["modality"] = represent::to_string(modality);
    j["method"] = to_string(method);
    j["style"] = prompting::to_string(style);
    j["shots_per_class"] = shots_per_class;
    j["seed"] = seed;
    if (method == Method::prompt) {
        j["sampling"] = {{"temperature", sampling.temperature},
                         {"top_p", sampling.top_p},
                         {"max_new_tokens", sampling.max_new_tokens},
                         {"num_samples", sampling.num_samples}};
    }
    if (method == Method::probe || method == Method::random_probe) {
        j["probe"] = {{"c_grid", probe_config.c_grid},
                      {"folds", probe_config.folds},
                      {"max_iterations", probe_config.max_iterations},
                      {"standardize", probe_config.standardize},
                      {"seed", probe_config.seed}};
    }
    if (method == Method::heuristic) {
        j["heuristic"] = baselines::to_string(heuristic);
        j["heuristic_seeds"] = heuristic_seeds;
    }
    if (!variant_set_id.empty()) j["variant_set_id"] = variant_set_id;
    return j.dump();
}

namespace {

json spec_to_json(const RunSpec& spec) { return json::parse(spec.canonical_json()); }

RunSpec spec_from_json(const json& j) {
    RunSpec s;
    s.model = j.at("model").get<std::string>();
    s.dataset = j.at("dataset").get<std::string>();
    s.modality = represent::modality_from_string(j.at("modality").get<std::string>());
    s.method = method_from_string(j.at("method").get<std::string>());
    s.style = prompting::style_from_string(j.at("style").get<std::string>());
    s.shots_per_class = j.at("shots_per_class").get<int>();
    s.seed = j.at("seed").get<uint64_t>();
    if (j.contains("sampling")) {
        s.sampling.temperature = j["sampling"].at("temperature").get<double>();
        s.sampling.top_p = j["sampling"].at("top_p").get<double>();
        s.sampling.max_new_tokens = j["sampling"].at("max_new_tokens").get<int>();
        s.sampling.num_samples = j["sampling"].at("num_samples").get<int>();
    }
    if (j.contains("probe")) {
        s.probe_config.c_grid = j["probe"].at("c_grid").get<std::vector<double>>();
        s.probe_config.folds = j["probe"].at("folds").get<int>();
        s.probe_config.max_iterations = j["probe"].at("max_iterations").get<int>();
        s.probe_config.standardize = j["probe"].at("standardize").get<bool>();
        s.probe_config.seed = j["probe"].at("seed").get<uint64_t>();
    }
    if (j.contains("heuristic")) {
        s.heuristic = baselines::heuristic_from_string(j["heuristic"].get<std::string>());
        s.heuristic_seeds = j.at("heuristic_seeds").get<int>();
    }
    if (j.contains("variant_set_id")) s.variant_set_id = j["variant_set_id"].get<std::string>();
    return s;
}

}  // namespace

std::string RunResult::to_json() const {
    json j;
    j["spec"] = spec_to_json(spec);
    j["cell_key"] = cell_key;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    if (!predictions_by_seed.empty()) {
        json by_seed = json::object();
        for (const auto& [seed_str, rows] : predictions_by_seed) {
            json arr = json::array();
            for (const auto& row : rows)
                arr.push_back({{"sample_id", row.sample_id},
                               {"true", row.true_label},
                               {"pred", row.predicted},
                               {"letter", row.letter}});
            by_seed[seed_str] = std::move(arr);
        }
        j["predictions_by_seed"] = std::move(by_seed);
    }
    if (curve) {
        j["probe_test_ids"] = probe_test_ids;
        j["probe_predictions"] = probe_predictions;
        j["probe_true_labels"] = probe_true_labels;
        j["curve"] = {{"per_layer_f1", curve->per_layer_f1},
                      {"per_layer_c", curve->per_layer_c},
                      {"best_layer", curve->best_layer}};
        std::vector<int> conv;
        for (bool b : curve->per_layer_converged) conv.push_back(b ? 1 : 0);
        j["curve"]["per_layer_converged"] = conv;
    }
    j["metrics"] = metric_values;
    j["skip_count"] = skip_count;
    j["failure_count"] = failure_count;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["versions"] = versions;
    return j.dump(2) + "\n";
}

RunResult RunResult::from_json(const std::string& text) {
    json j = json::parse(text);
    RunResult r;
    r.spec = spec_from_json(j.at("spec"));
    r.cell_key = j.at("cell_key").get<std::string>();
    r.status = j.at("status").get<std::string>();
    r.error = j.value("error", "");
    if (j.contains("predictions_by_seed")) {
        for (auto& [seed_str, arr] : j["predictions_by_seed"].items()) {
            std::vector<PredictionRow> rows;
            for (const auto& item : arr) {
                PredictionRow row;
                row.sample_id = item.at("sample_id").get<std::string>();
                row.true_label = item.at("true").get<int>();
                row.predicted = item.at("pred").get<int>();
                row.letter = item.at("letter").get<std::string>();
                rows.push_back(std::move(row));
            }
            r.predictions_by_seed[seed_str] = std::move(rows);
        }
    }
    if (j.contains("curve")) {
        r.probe_test_ids = j.at("probe_test_ids").get<std::vector<std::string>>();
        r.probe_predictions = j.at("probe_predictions").get<std::vector<std::vector<int>>>();
        r.probe_true_labels = j.at("probe_true_labels").get<std::map<std::string, int>>();
        probes::ProbeCurve c;
        c.per_layer_f1 = j["curve"].at("per_layer_f1").get<std::vector<double>>();
        c.per_layer_c = j["curve"].at("per_layer_c").get<std::vector<double>>();
        for (int b : j["curve"].at("per_layer_converged").get<std::vector<int>>())
            c.per_layer_converged.push_back(b != 0);
        c.best_layer = j["curve"].at("best_layer").get<int>();
        r.curve = std::move(c);
    }
    r.metric_values = j.at("metrics").get<std::map<std::string, double>>();
    r.skip_count = j.at("skip_count").get<int>();
    r.failure_count = j.at("failure_count").get<int>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.versions = j.at("versions").get<std::map<std::string, std::string>>();
    return r;
}

model_bridge::ModelAdapter& Environment::adapter(const std::string& name) const {
    auto it = adapters.find(name);
    if (it == adapters.end()) throw NotFoundError("unknown adapter: " + name);
    return *it->second;
}

prompting::PromptTemplate Environment::bound_template(const std::string& dataset_id,
                                                      prompting::PromptStyle style,
                                                      int shots_per_class) const {
    prompting::PromptTemplate tmpl;
    auto it = templates.find(dataset_id);
    if (it != templates.end()) {
        tmpl = it->second;
    } else {
        fs::path fallback = fs::path("prompts") / dataset_id / "template.toml";
        if (!fs::exists(fallback))
            throw NotFoundError("no prompt template for dataset " + dataset_id +
                                " (looked in config and " + fallback.string() + ")");
        tmpl = prompting::load_template_file(fallback.string());
    }
    tmpl.dataset_id = dataset_id;
    tmpl.style = style;
    tmpl.shots_per_class = shots_per_class;
    auto manifest = store().manifest(dataset_id);
    tmpl.options.clear();
    auto letters = dataset::option_letters(static_cast<int>(manifest.class_names.size()));
    for (size_t i = 0; i < manifest.class_names.size(); ++i)
        tmpl.options.emplace_back(letters[i], manifest.class_names[i]);
    tmpl.validate();
    return tmpl;
}

std::string cell_key(const RunSpec& spec, const Environment& env) {
    std::ostringstream ss;
    ss << spec.canonical_json();
    auto manifest = env.store().manifest(spec.dataset);
    for (const auto& [file, sum] : manifest.checksums) ss << ';' << file << '=' << sum;
    ss << ";renderer=" << represent::kRendererVersion
       << ";serializer=" << env.serial_config.version_tag() << ";harness=" << kHarnessVersion;
    if (spec.method != Method::heuristic) {
        const auto& adapter = env.adapter(spec.model);
        ss << ";adapter=" << adapter.name() << ':' << adapter.num_layers() << 'x'
           << adapter.hidden_dim();
    }
    return util::sha256_hex(ss.str()).substr(0, 16);
}

namespace {

struct LoadedSplits {
    dataset::TimeSeriesDataset train;
    dataset::TimeSeriesDataset test;
};

LoadedSplits load_splits(const Environment& env, const std::string& dataset_id) {
    auto store = env.store();
    return {store.load_split(dataset_id, dataset::Split::train),
            store.load_split(dataset_id, dataset::Split::test)};
}

represent::Representation sample_representation(const Environment& env,
                                                const dataset::TimeSeriesDataset& data, int index,
                                                represent::ModalityKind modality) {
    std::vector<float> sample = data.sample_copy(index);
    if (env.normalize_per_channel)
        sample = represent::normalize_per_channel(sample, data.num_channels, data.length);
    represent::RenderConfig render = env.render_config;
    render.style = data.render_style;
    if (render.title.empty()) render.title = data.id + " sample " + data.sample_ids[index];
    return represent::build_representation(sample, data.num_channels, data.length, modality,
                                           env.serial_config, render, data.channel_names);
}

/// First shots_per_class training samples per class, in label order.
std::vector<prompting::ShotExample> select_shots(const Environment& env,
                                                 const dataset::TimeSeriesDataset& train,
                                                 represent::ModalityKind modality,
                                                 int shots_per_class) {
    std::vector<prompting::ShotExample> shots;
    if (shots_per_class <= 0) return shots;
    for (int cls = 1; cls <= train.num_classes(); ++cls) {
        int taken = 0;
        for (int i = 0; i < train.num_samples && taken < shots_per_class; ++i) {
            if (train.y[static_cast<size_t>(i)] != cls) continue;
            prompting::ShotExample shot;
            shot.representation = sample_representation(env, train, i, modality);
            shot.label = cls;
            shot.sample_id = train.sample_ids[static_cast<size_t>(i)];
            shot.from_split = dataset::Split::train;
            shots.push_back(std::move(shot));
            ++taken;
        }
        if (taken < shots_per_class)
            throw DegenerateLabelsError("not enough training samples of class " +
                                        std::to_string(cls) + " for " +
                                        std::to_string(shots_per_class) + " shots");
    }
    return shots;
}

model_bridge::ExtractionStyle extraction_for(prompting::PromptStyle style) {
    return style == prompting::PromptStyle::cot
               ? model_bridge::ExtractionStyle::post_cot_last_token
               : model_bridge::ExtractionStyle::prefill_last_token;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

PromptEvalResult prompt_eval(const Environment& env, const std::string& model_name,
                             const std::string& dataset_id, represent::ModalityKind modality,
                             prompting::PromptStyle style, int shots_per_class,
                             const model_bridge::SamplingParams& sampling,
                             const std::optional<std::string>& system_override,
                             const std::optional<std::string>& question_override) {
    auto& adapter = env.adapter(model_name);
    auto splits = load_splits(env, dataset_id);
    auto tmpl = env.bound_template(dataset_id, style, shots_per_class);
    auto shots = select_shots(env, splits.train, modality, shots_per_class);

    PromptEvalResult out;
    std::vector<int> y_true, y_pred;
    for (int i = 0; i < splits.test.num_samples; ++i) {
        auto rep = sample_representation(env, splits.test, i, modality);
        auto bundle = prompting::assemble_prompt(rep, tmpl, splits.test.sample_ids[i], shots,
                                                 system_override, question_override);
        std::vector<std::string> generations;
        try {
            generations = adapter.generate(bundle, sampling);
        } catch (const ContextLengthError&) {
            ++out.skip_count;
            continue;
        }
        auto parsed = prompting::parse_answer(generations.front(), bundle.answer_schema);
        PredictionRow row;
        row.sample_id = splits.test.sample_ids[i];
        row.true_label = splits.test.y[static_cast<size_t>(i)];
        row.predicted = parsed.class_index(bundle.answer_schema);
        row.letter = parsed.letter ? std::string(1, *parsed.letter) : "";
        if (row.predicted == metrics::kFailure) ++out.failure_count;
        y_true.push_back(row.true_label);
        y_pred.push_back(row.predicted);
        out.predictions.push_back(std::move(row));
    }
    if (!y_true.empty())
        out.macro_f1 = metrics::macro_f1(y_true, y_pred, splits.test.num_classes()).macro_f1;
    return out;
}

namespace {

RunResult run_prompt_cell(const RunSpec& spec, const Environment& env) {
    RunResult result;
    auto eval = prompt_eval(env, spec.model, spec.dataset, spec.modality, spec.style,
                            spec.shots_per_class, spec.sampling);
    result.predictions_by_seed[std::to_string(spec.seed)] = eval.predictions;
    result.skip_count = eval.skip_count;
    result.failure_count = eval.failure_count;
    result.metric_values["macro_f1"] = eval.macro_f1;
    result.metric_values["failure_rate"] =
        eval.predictions.empty()
            ? 0.0
            : static_cast<double>(eval.failure_count) / eval.predictions.size();
    return result;
}

RunResult run_probe_cell(const RunSpec& spec, const Environment& env, bool random_control) {
    RunResult result;
    auto splits = load_splits(env, spec.dataset);
    auto tmpl = env.bound_template(spec.dataset, spec.style, spec.shots_per_class);
    auto shots = select_shots(env, splits.train, spec.modality, spec.shots_per_class);

    model_bridge::ExtractJob job;
    job.modality = spec.modality;
    job.serial_config = env.serial_config;
    job.render_config = env.render_config;
    job.extraction_style = extraction_for(spec.style);
    job.max_skip_fraction = env.max_skip_fraction;
    job.normalize_per_channel = env.normalize_per_channel;

    probes::LayerwiseResult layerwise;
    if (random_control) {
        auto& reference = env.adapter(spec.model);
        auto run = baselines::random_probe_run(reference, splits.train, splits.test, tmpl, job,
                                               spec.probe_config, spec.seed, env.acts_root(),
                                               shots);
        layerwise = std::move(run.layerwise);
    } else {
        auto& adapter = env.adapter(spec.model);
        auto extract_split = [&](const dataset::TimeSeriesDataset& data) {
            auto key = model_bridge::make_store_key(adapter.name(), data.id, data.split,
                                                    spec.modality, tmpl.style,
                                                    tmpl.shots_per_class, job.extraction_style,
                                                    job.serial_config);
            if (!adapter.supports_hidden_states()) {
                // generation-only and external adapters probe over stores
                // produced out of process (e.g. tools/extract_hf.py)
                try {
                    return model_bridge::ActivationStore::open(env.acts_root(), key);
                } catch (const NotFoundError&) {
                    throw NotFoundError(
                        "adapter " + spec.model + " does not extract in-process and no "
                        "activation store exists for key " + key.canonical() +
                        "; fill it first (see tools/extract_hf.py)");
                }
            }
            auto store = model_bridge::ActivationStore::create_or_open(
                env.acts_root(), key, adapter.num_layers(), adapter.hidden_dim());
            result.skip_count += model_bridge::extract_dataset(data, tmpl, adapter, store, job,
                                                               shots)
                                     .skipped;
            return store;
        };
        auto train_store = extract_split(splits.train);
        auto test_store = extract_split(splits.test);
        std::map<std::string, int> y_train, y_test;
        for (int i = 0; i < splits.train.num_samples; ++i)
            y_train[splits.train.sample_ids[i]] = splits.train.y[static_cast<size_t>(i)];
        for (int i = 0; i < splits.test.num_samples; ++i)
            y_test[splits.test.sample_ids[i]] = splits.test.y[static_cast<size_t>(i)];
        layerwise = probes::train_layerwise(train_store, y_train, test_store, y_test,
                                            splits.train.num_classes(), spec.probe_config);
    }

    result.curve = layerwise.curve;
    result.probe_test_ids = layerwise.test_ids;
    result.probe_predictions = layerwise.predictions;
    for (const auto& id : layerwise.test_ids) {
        for (int i = 0; i < splits.test.num_samples; ++i)
            if (splits.test.sample_ids[i] == id)
                result.probe_true_labels[id] = splits.test.y[static_cast<size_t>(i)];
    }
    const int best = layerwise.curve.best_layer;
    result.metric_values["macro_f1"] = layerwise.curve.per_layer_f1[best];
    result.metric_values["best_layer"] = static_cast<double>(best);
    return result;
}

RunResult run_heuristic_cell(const RunSpec& spec, const Environment& env) {
    RunResult result;
    auto splits = load_splits(env, spec.dataset);
    const int n_test = splits.test.num_samples;
    const int num_classes = splits.test.num_classes();

    const bool stochastic = spec.heuristic != baselines::HeuristicKind::majority;
    const int runs = stochastic ? spec.heuristic_seeds : 1;
    std::vector<double> f1s;
    for (int r = 0; r < runs; ++r) {
        uint64_t seed = spec.seed + static_cast<uint64_t>(r);
        std::vector<int> preds;
        switch (spec.heuristic) {
            case baselines::HeuristicKind::majority:
                preds = baselines::majority_predict(splits.train.y, n_test);
                break;
            case baselines::HeuristicKind::prior:
                preds = baselines::prior_predict(splits.train.y, n_test, seed);
                break;
            case baselines::HeuristicKind::uniform:
                preds = baselines::uniform_predict(num_classes, n_test, seed);
                break;
        }
        std::vector<PredictionRow> rows;
        for (int i = 0; i < n_test; ++i) {
            PredictionRow row;
            row.sample_id = splits.test.sample_ids[i];
            row.true_label = splits.test.y[static_cast<size_t>(i)];
            row.predicted = preds[static_cast<size_t>(i)];
            rows.push_back(std::move(row));
        }
        double f1 = metrics::macro_f1(splits.test.y, preds, num_classes).macro_f1;
        result.metric_values["macro_f1@" + std::to_string(seed)] = f1;
        result.predictions_by_seed[std::to_string(seed)] = std::move(rows);
    }
    // aggregate in the persisted map order so the audit recomputation sums
    // the same floats in the same order
    for (const auto& [seed_str, rows] : result.predictions_by_seed)
        f1s.push_back(result.metric_values.at("macro_f1@" + seed_str));
    double mean = mean_of(f1s);
    result.metric_values["macro_f1"] = mean;
    result.metric_values["macro_f1_sd"] = sd_of(f1s, mean);
    return result;
}

}  // namespace

RunResult run_cell(const RunSpec& spec, const Environment& env) {
    auto start = std::chrono::steady_clock::now();
    RunResult result;
    switch (spec.method) {
        case Method::prompt: result = run_prompt_cell(spec, env); break;
        case Method::probe: result = run_probe_cell(spec, env, false); break;
        case Method::random_probe: result = run_probe_cell(spec, env, true); break;
        case Method::heuristic: result = run_heuristic_cell(spec, env); break;
    }
    result.spec = spec;
    result.cell_key = cell_key(spec, env);
    result.versions["renderer"] = represent::kRendererVersion;
    result.versions["serializer"] = env.serial_config.version_tag();
    result.versions["harness"] = kHarnessVersion;
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

MatrixOutcome run_matrix(const std::vector<RunSpec>& specs, const Environment& env) {
    MatrixOutcome outcome;
    fs::create_directories(env.runs_root());
    for (const auto& spec : specs) {
        std::string key = util::sha256_hex(spec.canonical_json()).substr(0, 16);
        try {
            key = cell_key(spec, env);
        } catch (const std::exception& e) {
            util::atomic_write(env.runs_root() / key / "error.json",
                               json({{"spec", spec_to_json(spec)}, {"error", e.what()}}).dump(2) +
                                   "\n");
            ++outcome.failed;
            outcome.failed_cells.push_back(key + ": " + e.what());
            continue;
        }
        fs::path dir = env.runs_root() / key;
        fs::path result_path = dir / "result.json";
        if (fs::exists(result_path)) {
            ++outcome.reused;
            continue;
        }
        try {
            RunResult result = run_cell(spec, env);
            util::atomic_write(result_path, result.to_json());
            fs::path err = dir / "error.json";
            if (fs::exists(err)) fs::remove(err);
            {
                std::ofstream jsonl(env.results_jsonl(), std::ios::app);
                json line = json::parse(result.to_json());
                jsonl << line.dump() << "\n";
            }
            ++outcome.executed;
        } catch (const std::exception& e) {
            json err = {{"spec", spec_to_json(spec)}, {"cell_key", key}, {"error", e.what()}};
            util::atomic_write(dir / "error.json", err.dump(2) + "\n");
            ++outcome.failed;
            outcome.failed_cells.push_back(key + ": " + e.what());
        }
    }
    return outcome;
}

std::vector<RunResult> load_results(const Environment& env) {
    std::vector<RunResult> out;
    if (!fs::exists(env.runs_root())) return out;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(env.runs_root())) {
        fs::path p = entry.path() / "result.json";
        if (fs::exists(p)) paths.push_back(p);
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) out.push_back(RunResult::from_json(util::read_file(p)));
    return out;
}

namespace {

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

std::vector<std::string> audit_results(const Environment& env) {
    std::vector<std::string> mismatches;
    for (const auto& result : load_results(env)) {
        const std::string tag = result.cell_key + " (" + result.spec.method_label() + ")";
        if (result.curve) {
            // recompute the whole layer curve from persisted predictions
            std::vector<int> y_true;
            for (const auto& id : result.probe_test_ids)
                y_true.push_back(result.probe_true_labels.at(id));
            int num_classes = 0;
            for (const auto& [id, y] : result.probe_true_labels)
                num_classes = std::max(num_classes, y);
            for (const auto& preds : result.probe_predictions)
                for (int p : preds) num_classes = std::max(num_classes, p);
            for (size_t layer = 0; layer < result.probe_predictions.size(); ++layer) {
                double f1 = metrics::macro_f1(y_true, result.probe_predictions[layer],
                                              num_classes)
                                .macro_f1;
                if (!bits_equal(f1, result.curve->per_layer_f1[layer]))
                    mismatches.push_back(tag + ": layer " + std::to_string(layer) +
                                         " f1 mismatch");
            }
            int best = result.curve->best_layer;
            if (!bits_equal(result.metric_values.at("macro_f1"),
                            result.curve->per_layer_f1[static_cast<size_t>(best)]))
                mismatches.push_back(tag + ": best-layer metric mismatch");
        }
        if (!result.predictions_by_seed.empty()) {
            std::vector<double> f1s;
            for (const auto& [seed_str, rows] : result.predictions_by_seed) {
                std::vector<int> y_true, y_pred;
                int num_classes = 0;
                for (const auto& row : rows) {
                    y_true.push_back(row.true_label);
                    y_pred.push_back(row.predicted);
                    num_classes = std::max({num_classes, row.true_label, row.predicted});
                }
                if (y_true.empty()) continue;
                double f1 = metrics::macro_f1(y_true, y_pred, num_classes).macro_f1;
                f1s.push_back(f1);
                auto it = result.metric_values.find("macro_f1@" + seed_str);
                if (it != result.metric_values.end() && !bits_equal(f1, it->second))
                    mismatches.push_back(tag + ": per-seed f1 mismatch @" + seed_str);
                if (result.spec.method == Method::prompt &&
                    !bits_equal(f1, result.metric_values.at("macro_f1")))
                    mismatches.push_back(tag + ": prompt f1 mismatch");
            }
            if (result.spec.method == Method::heuristic) {
                double mean = mean_of(f1s);
                if (!bits_equal(mean, result.metric_values.at("macro_f1")))
                    mismatches.push_back(tag + ": heuristic mean mismatch");
                if (!bits_equal(sd_of(f1s, mean), result.metric_values.at("macro_f1_sd")))
                    mismatches.push_back(tag + ": heuristic sd mismatch");
            }
        }
    }
    return mismatches;
}

std::string StabilityOutcome::to_json(const std::string& dataset, const std::string& model,
                                      const std::string& modality,
                                      const std::string& target) const {
    json j;
    j["dataset"] = dataset;
    j["model"] = model;
    j["modality"] = modality;
    j["target"] = target;
    j["per_variant_f1"] = per_variant_f1;
    j["spread"] = {{"min", spread.min},
                   {"max", spread.max},
                   {"mean", spread.mean},
                   {"median", spread.median},
                   {"delta", spread.delta}};
    j["pass_at_k"] = {{"n", pass_table.num_samples},
                      {"per_item_correct", pass_table.per_item_correct},
                      {"k_values", pass_table.k_values},
                      {"estimates", pass_table.estimates}};
    j["pass_at_1"] = pass_at_1;
    j["pass_at_n"] = pass_at_n;
    j["delta_pass"] = delta_pass;
    return j.dump(2) + "\n";
}

StabilityOutcome stability_run(const Environment& env, const std::string& model_name,
                               const std::string& dataset_id, represent::ModalityKind modality,
                               const prompting::VariantSet& variants, int n_samples,
                               double temperature, uint64_t seed) {
    if (variants.variants.empty()) throw ConfigError("stability run with empty variant set");
    auto tmpl = env.bound_template(dataset_id, prompting::PromptStyle::direct, 0);
    // the variant set must belong to this template
    for (const auto& v : variants.variants) {
        auto violations = prompting::validate_variant(
            v.text, tmpl, variants.target);
        if (!violations.empty())
            throw VariantRejectedError("stored variant " + std::to_string(v.id) +
                                       " fails validation (check " +
                                       std::to_string(violations.front().check) + ")");
    }

    StabilityOutcome outcome;
    model_bridge::SamplingParams greedy;
    greedy.temperature = 0.0;
    greedy.num_samples = 1;
    for (const auto& v : variants.variants) {
        std::optional<std::string> system_override, question_override;
        if (variants.target == prompting::VariantTarget::system) system_override = v.text;
        else question_override = v.text;
        auto eval = prompt_eval(env, model_name, dataset_id, modality,
                                prompting::PromptStyle::direct, 0, greedy, system_override,
                                question_override);
        outcome.per_variant_f1.push_back(eval.macro_f1);
    }
    outcome.spread = metrics::variant_spread(outcome.per_variant_f1);

    // part two: repeated sampling of the base prompt
    auto& adapter = env.adapter(model_name);
    auto splits = load_splits(env, dataset_id);
    model_bridge::SamplingParams sampling;
    sampling.temperature = temperature;
    sampling.num_samples = n_samples;
    sampling.seed = static_cast<int64_t>(seed);
    std::vector<int> correct_counts;
    for (int i = 0; i < splits.test.num_samples; ++i) {
        auto rep = sample_representation(env, splits.test, i, modality);
        auto bundle =
            prompting::assemble_prompt(rep, tmpl, splits.test.sample_ids[i]);
        std::vector<std::string> generations;
        try {
            generations = adapter.generate(bundle, sampling);
        } catch (const ContextLengthError&) {
            continue;
        }
        int correct = 0;
        for (const auto& g : generations) {
            auto parsed = prompting::parse_answer(g, bundle.answer_schema);
            if (parsed.class_index(bundle.answer_schema) == splits.test.y[static_cast<size_t>(i)])
                ++correct;
        }
        correct_counts.push_back(correct);
    }
    if (correct_counts.empty()) throw Error("stability run: every sample skipped");
    std::vector<int> k_values;
    for (int k : {1, 5, 10, 20})
        if (k <= n_samples) k_values.push_back(k);
    if (k_values.back() != n_samples) k_values.push_back(n_samples);
    outcome.pass_table = metrics::pass_at_k_table(correct_counts, n_samples, k_values);
    outcome.pass_at_1 = metrics::dataset_pass_at_k(correct_counts, n_samples, 1);
    outcome.pass_at_n = metrics::dataset_pass_at_k(correct_counts, n_samples, n_samples);
    outcome.delta_pass = outcome.pass_at_n - outcome.pass_at_1;
    return outcome;
}

// --- config loading -----------------------------------------------------------

LoadedConfig load_config(const fs::path& path) {
    auto t = minitoml::Table::parse_file(path.string());
    LoadedConfig loaded;
    Environment& env = loaded.env;

    fs::path base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    env.data_root = resolve(t.get_string_or("paths.data_root", "data"));
    env.out_root = resolve(t.get_string_or("paths.out_root", "out"));

    env.serial_config.precision = static_cast<int>(t.get_int_or("serialization.precision", 2));
    env.serial_config.stride = static_cast<int>(t.get_int_or("serialization.stride", 1));
    env.render_config.width_px = static_cast<int>(t.get_int_or("render.width", 640));
    env.render_config.height_px = static_cast<int>(t.get_int_or("render.height", 480));
    env.render_config.subplot_threshold =
        static_cast<int>(t.get_int_or("render.subplot_threshold", 3));
    env.render_config.window = static_cast<int>(t.get_int_or("render.window", 256));
    env.render_config.overlap = t.get_double_or("render.overlap", 0.5);
    env.normalize_per_channel = t.get_bool_or("harness.normalize_per_channel", false);
    env.max_skip_fraction = t.get_double_or("harness.max_skip_fraction", 0.1);
    std::string ref_csv = t.get_string_or("harness.reference_csv", "");
    if (!ref_csv.empty()) env.reference_csv = resolve(ref_csv);

    probes::ProbeConfig probe_config;
    probe_config.folds = static_cast<int>(t.get_int_or("probe.folds", 5));
    probe_config.max_iterations = static_cast<int>(t.get_int_or("probe.max_iterations", 1000));
    probe_config.standardize = t.get_bool_or("probe.standardize", true);
    probe_config.seed = static_cast<uint64_t>(t.get_int_or("probe.seed", 0));
    auto grid = t.get_double_array_or("probe.c_grid");
    if (!grid.empty()) probe_config.c_grid = grid;

    model_bridge::SamplingParams sampling;
    sampling.temperature = t.get_double_or("sampling.temperature", 0.0);
    sampling.top_p = t.get_double_or("sampling.top_p", 0.95);
    sampling.max_new_tokens = static_cast<int>(t.get_int_or("sampling.max_new_tokens", 256));

    for (const auto& section : t.sections_with_prefix("adapter")) {
        std::string name = section.substr(std::string("adapter.").size());
        std::string kind = t.get_string_or(section + ".kind", "stub");
        if (kind == "stub" || kind == "stub_random") {
            model_bridge::StubOptions opts;
            opts.seed = static_cast<uint64_t>(t.get_int_or(section + ".seed", 0));
            opts.planted = (kind == "stub");
            std::string mode = t.get_string_or(section + ".answer_mode", "prompt_hash");
            if (mode == "prompt_hash") opts.answer_mode = model_bridge::StubAnswerMode::prompt_hash;
            else {
                opts.answer_mode = model_bridge::StubAnswerMode::fixed_letter;
                opts.fixed_letter = mode.empty() ? 'A' : mode.front();
            }
            opts.max_context_chars =
                static_cast<size_t>(t.get_int_or(section + ".context_chars", 1 << 20));
            env.adapters[name] = std::make_shared<model_bridge::StubAdapter>(opts);
        } else if (kind == "remote") {
            chat::HttpChatOptions opts;
            opts.base_url = t.get_string(section + ".base_url");
            opts.model = t.get_string_or(section + ".model", name);
            opts.path = t.get_string_or(section + ".path", "/v1/chat/completions");
            opts.api_key_env = t.get_string_or(section + ".api_key_env", "TSPROBE_API_KEY");
            env.adapters[name] = std::make_shared<model_bridge::RemoteChatAdapter>(
                opts, t.get_bool_or(section + ".images", true),
                static_cast<int>(t.get_int_or(section + ".context_chars", 0)));
        } else if (kind == "external") {
            env.adapters[name] = std::make_shared<model_bridge::ExternalAdapter>(
                t.get_string_or(section + ".model", name),
                static_cast<int>(t.get_int_or(section + ".layers", 0)),
                static_cast<int>(t.get_int_or(section + ".dim", 0)),
                t.get_bool_or(section + ".images", true));
        } else {
            throw ConfigError("unknown adapter kind: " + kind);
        }
    }

    for (const auto& section : t.sections_with_prefix("template")) {
        std::string dataset_id = section.substr(std::string("template.").size());
        std::string tmpl_path = resolve(t.get_string(section + ".path")).string();
        env.templates[dataset_id] = prompting::load_template_file(tmpl_path);
    }

    // matrix expansion
    auto datasets = t.get_string_array_or("matrix.datasets");
    auto models = t.get_string_array_or("matrix.models");
    auto modalities = t.get_string_array_or("matrix.modalities", {"d"});
    auto methods = t.get_string_array_or("matrix.methods", {"prompt", "probe"});
    auto styles = t.get_string_array_or("matrix.styles", {"direct"});
    auto shots_list = t.get_double_array_or("matrix.shots", {0});
    auto seeds = t.get_double_array_or("matrix.seeds", {0});
    auto heuristics = t.get_string_array_or("matrix.heuristics");
    int heuristic_seeds = static_cast<int>(t.get_int_or("matrix.heuristic_seeds", 20));
    bool random_probe = t.get_bool_or("matrix.random_probe", false);

    for (const auto& ds : datasets) {
        for (const auto& h : heuristics) {
            RunSpec spec;
            spec.model = "random";
            spec.dataset = ds;
            spec.method = Method::heuristic;
            spec.heuristic = baselines::heuristic_from_string(h);
            spec.heuristic_seeds = heuristic_seeds;
            loaded.matrix_specs.push_back(spec);
        }
        for (const auto& model : models) {
            for (const auto& modality : modalities) {
                for (const auto& method : methods) {
                    for (const auto& style : styles) {
                        for (double shots : shots_list) {
                            for (double seed : seeds) {
                                RunSpec spec;
                                spec.model = model;
                                spec.dataset = ds;
                                spec.modality = represent::modality_from_string(modality);
                                spec.method = method_from_string(method);
                                spec.style = prompting::style_from_string(style);
                                spec.shots_per_class = static_cast<int>(shots);
                                spec.seed = static_cast<uint64_t>(seed);
                                spec.sampling = sampling;
                                spec.probe_config = probe_config;
                                loaded.matrix_specs.push_back(spec);
                            }
                        }
                    }
                }
                if (random_probe) {
                    RunSpec spec;
                    spec.model = model;
                    spec.dataset = ds;
                    spec.modality = represent::modality_from_string(modality);
                    spec.method = Method::random_probe;
                    spec.probe_config = probe_config;
                    loaded.matrix_specs.push_back(spec);
                }
            }
        }
    }
    return loaded;
}

}  // namespace tsprobe::harness
