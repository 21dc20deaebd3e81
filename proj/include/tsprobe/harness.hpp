#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsprobe/baselines.hpp"
#include "tsprobe/dataset.hpp"
#include "tsprobe/metrics.hpp"
#include "tsprobe/model_bridge.hpp"
#include "tsprobe/probes.hpp"
#include "tsprobe/prompting.hpp"

namespace tsprobe::harness {

extern const char* kHarnessVersion;

enum class Method { prompt, probe, heuristic, random_probe };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

/// One cell of the evaluation grid. Sampling parameters matter only for
/// prompt cells; the probe config only for probe/random_probe cells.
struct RunSpec {
    std::string model;
    std::string dataset;
    represent::ModalityKind modality = represent::ModalityKind::d;
    Method method = Method::prompt;
    prompting::PromptStyle style = prompting::PromptStyle::direct;
    int shots_per_class = 0;
    uint64_t seed = 0;
    model_bridge::SamplingParams sampling;
    probes::ProbeConfig probe_config;
    baselines::HeuristicKind heuristic = baselines::HeuristicKind::majority;
    int heuristic_seeds = 20;  // stochastic heuristics are averaged over this many seeds
    std::string variant_set_id;

    std::string canonical_json() const;
    /// The result-row method string: prompt/probe/random_probe or the
    /// heuristic kind itself.
    std::string method_label() const;
};

struct PredictionRow {
    std::string sample_id;
    int true_label = 0;
    int predicted = 0;  // 1..C, or 0 = FAILURE
    std::string letter;  // parsed letter or "" on failure
};

struct RunResult {
    RunSpec spec;
    std::string cell_key;
    std::string status = "ok";
    std::string error;

    // prompt + heuristic cells: predictions per seed (one entry for greedy)
    std::map<std::string, std::vector<PredictionRow>> predictions_by_seed;
    // probe cells: per-layer test predictions and the curve
    std::vector<std::string> probe_test_ids;
    std::vector<std::vector<int>> probe_predictions;  // [layer][row]
    std::map<std::string, int> probe_true_labels;     // sample id -> label
    std::optional<probes::ProbeCurve> curve;

    std::map<std::string, double> metric_values;
    int skip_count = 0;
    int failure_count = 0;
    double wall_clock_seconds = 0.0;
    std::map<std::string, std::string> versions;

    std::string to_json() const;
    static RunResult from_json(const std::string& text);
};

/// Everything a run needs to resolve names: datasets on disk, adapters by
/// name, templates by dataset id.
class Environment {
public:
    std::filesystem::path data_root = "data";
    std::filesystem::path out_root = "out";
    represent::SerializationConfig serial_config;
    represent::RenderConfig render_config;
    bool normalize_per_channel = false;
    double max_skip_fraction = 0.1;
    std::filesystem::path reference_csv;  // optional imported baseline scores

    std::map<std::string, std::shared_ptr<model_bridge::ModelAdapter>> adapters;
    std::map<std::string, prompting::PromptTemplate> templates;  // by dataset id

    dataset::DatasetStore store() const { return dataset::DatasetStore(data_root); }
    std::filesystem::path acts_root() const { return out_root / "acts"; }
    std::filesystem::path runs_root() const { return out_root / "runs"; }
    std::filesystem::path results_jsonl() const { return out_root / "results.jsonl"; }

    model_bridge::ModelAdapter& adapter(const std::string& name) const;
    /// Template with options bound from the dataset class list and the
    /// requested style/shots applied.
    prompting::PromptTemplate bound_template(const std::string& dataset_id,
                                             prompting::PromptStyle style,
                                             int shots_per_class) const;
};

/// Loads an Environment plus the declared matrix grid from a TOML-like
/// config file (see README for the schema).
struct LoadedConfig {
    Environment env;
    std::vector<RunSpec> matrix_specs;
};
LoadedConfig load_config(const std::filesystem::path& path);

/// Content hash identifying one cell: spec fields plus data checksums and
/// renderer/serializer/adapter versions, so representation changes invalidate
/// cached cells.
std::string cell_key(const RunSpec& spec, const Environment& env);

struct MatrixOutcome {
    int executed = 0;
    int reused = 0;
    int failed = 0;
    std::vector<std::string> failed_cells;
};

/// Executes every spec once; completed cells (result.json present under
/// runs/<key>/) are skipped byte-untouched. Per-cell failures are isolated,
/// recorded, and retried on the next invocation.
MatrixOutcome run_matrix(const std::vector<RunSpec>& specs, const Environment& env);

RunResult run_cell(const RunSpec& spec, const Environment& env);

/// Loads every persisted result under runs/.
std::vector<RunResult> load_results(const Environment& env);

/// Recomputes every metric from the persisted predictions and compares
/// bit-for-bit; returns mismatch descriptions (empty = audit clean).
std::vector<std::string> audit_results(const Environment& env);

struct StabilityOutcome {
    metrics::SpreadReport spread;            // per-variant single-run macro F1
    std::vector<double> per_variant_f1;      // id order
    metrics::PassAtKTable pass_table;        // same-prompt repeated sampling
    double pass_at_1 = 0.0;
    double pass_at_n = 0.0;
    double delta_pass = 0.0;  // P@n - P@1

    std::string to_json(const std::string& dataset, const std::string& model,
                        const std::string& modality, const std::string& target) const;
};

/// The two-part prompt-stability protocol: (a) one greedy run per validated
/// variant, scored by macro F1; (b) n_samples generations of the base prompt
/// per test item, scored by pass@K.
StabilityOutcome stability_run(const Environment& env, const std::string& model_name,
                               const std::string& dataset_id, represent::ModalityKind modality,
                               const prompting::VariantSet& variants, int n_samples = 20,
                               double temperature = 0.7, uint64_t seed = 0);

/// Greedy prompt evaluation over the test split; returns predictions plus
/// skip bookkeeping. Exposed for the CLI prompt-eval subcommand.
struct PromptEvalResult {
    std::vector<PredictionRow> predictions;
    int skip_count = 0;
    int failure_count = 0;
    double macro_f1 = 0.0;
};
PromptEvalResult prompt_eval(const Environment& env, const std::string& model_name,
                             const std::string& dataset_id, represent::ModalityKind modality,
                             prompting::PromptStyle style, int shots_per_class,
                             const model_bridge::SamplingParams& sampling,
                             const std::optional<std::string>& system_override = std::nullopt,
                             const std::optional<std::string>& question_override = std::nullopt);

}  // namespace tsprobe::harness
