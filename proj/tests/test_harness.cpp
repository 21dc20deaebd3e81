#include <doctest.h>

#include <map>
#include <set>

#include "test_helpers.hpp"
#include "tsprobe/errors.hpp"
#include "tsprobe/harness.hpp"
#include "tsprobe/report.hpp"
#include "tsprobe/util.hpp"

using namespace tsprobe;
using tsprobe::testing::TempDir;
namespace fs = std::filesystem;

namespace {

harness::Environment ready_env(const TempDir& tmp, int train_per_class = 15,
                               int test_per_class = 5, int num_classes = 3, int length = 16) {
    auto env = testing::toy_env(tmp.path, num_classes);
    dataset::DatasetStore store(env.data_root);
    testing::make_toy_dataset(store, "toy", train_per_class, test_per_class, num_classes, length);
    return env;
}

std::vector<harness::RunSpec> grid_specs(const std::vector<std::string>& modalities,
                                         const std::vector<std::string>& methods) {
    std::vector<harness::RunSpec> specs;
    for (const auto& modality : modalities) {
        for (const auto& method : methods) {
            harness::RunSpec spec;
            spec.model = "stub";
            spec.dataset = "toy";
            spec.modality = represent::modality_from_string(modality);
            spec.method = harness::method_from_string(method);
            spec.probe_config.max_iterations = 300;
            specs.push_back(spec);
        }
    }
    return specs;
}

// content hash of every regular file under a directory
std::map<std::string, std::string> dir_hashes(const fs::path& root) {
    std::map<std::string, std::string> out;
    if (!fs::exists(root)) return out;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        out[fs::relative(entry.path(), root).string()] =
            util::sha256_file_hex(entry.path());
    }
    return out;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("full stub matrix: 3 modalities x 2 methods = 6 result rows") {
    TempDir tmp;
    auto env = ready_env(tmp);
    auto specs = grid_specs({"d", "v", "d+v"}, {"prompt", "probe"});
    REQUIRE(specs.size() == 6);  // enumeration of the grid

    auto outcome = harness::run_matrix(specs, env);
    CHECK(outcome.executed == 6);
    CHECK(outcome.failed == 0);
    auto results = harness::load_results(env);
    CHECK(results.size() == 6);

    std::set<std::pair<std::string, std::string>> cells;
    for (const auto& r : results)
        cells.insert({represent::to_string(r.spec.modality), r.spec.method_label()});
    CHECK(cells.size() == 6);

    // planted stub: every probe cell clears its prompt counterpart on d
    std::map<std::string, double> f1;
    for (const auto& r : results)
        f1[represent::to_string(r.spec.modality) + "/" + r.spec.method_label()] =
            r.metric_values.at("macro_f1");
    CHECK(f1.at("d/probe") > f1.at("d/prompt"));
}

TEST_CASE("matrix idempotence: rerun recomputes nothing and changes no bytes") {
    TempDir tmp;
    auto env = ready_env(tmp);
    auto specs = grid_specs({"d", "d+v"}, {"prompt", "probe"});

    auto first = harness::run_matrix(specs, env);
    CHECK(first.executed == 4);
    auto before = dir_hashes(env.out_root);

    auto second = harness::run_matrix(specs, env);
    CHECK(second.executed == 0);
    CHECK(second.reused == 4);
    auto after = dir_hashes(env.out_root);
    CHECK(before == after);
}

TEST_CASE("probe cells share extraction per modality") {
    TempDir tmp;
    auto env = ready_env(tmp);
    auto specs = grid_specs({"d", "d+v"}, {"probe"});
    harness::run_matrix(specs, env);

    // one store per (split, modality): 4 total
    int stores = 0;
    for (const auto& entry : fs::directory_iterator(env.acts_root()))
        if (entry.is_directory()) ++stores;
    CHECK(stores == 4);

    // a second probe spec with a different probe seed reuses the same stores
    auto respecs = grid_specs({"d"}, {"probe"});
    respecs[0].probe_config.seed = 777;
    auto before = dir_hashes(env.acts_root());
    harness::run_matrix(respecs, env);
    CHECK(dir_hashes(env.acts_root()) == before);  // nothing re-extracted
}

TEST_CASE("audit: stored metrics reproduce bit-for-bit from predictions") {
    TempDir tmp;
    auto env = ready_env(tmp);
    auto specs = grid_specs({"d"}, {"prompt", "probe"});
    // plus a heuristic cell
    harness::RunSpec heur;
    heur.model = "random";
    heur.dataset = "toy";
    heur.method = harness::Method::heuristic;
    heur.heuristic = baselines::HeuristicKind::prior;
    heur.heuristic_seeds = 5;
    specs.push_back(heur);

    harness::run_matrix(specs, env);
    CHECK(harness::audit_results(env).empty());

    // corrupt one stored metric: audit must flag it
    auto results = harness::load_results(env);
    REQUIRE(!results.empty());
    for (const auto& entry : fs::directory_iterator(env.runs_root())) {
        auto p = entry.path() / "result.json";
        auto r = harness::RunResult::from_json(util::read_file(p));
        if (r.spec.method != harness::Method::prompt) continue;
        r.metric_values["macro_f1"] += 0.125;
        util::atomic_write(p, r.to_json());
    }
    CHECK(!harness::audit_results(env).empty());
}

TEST_CASE("heuristic cells: majority single run, prior averages seeds") {
    TempDir tmp;
    auto env = ready_env(tmp);
    harness::RunSpec spec;
    spec.model = "random";
    spec.dataset = "toy";
    spec.method = harness::Method::heuristic;
    spec.heuristic = baselines::HeuristicKind::majority;
    auto result = harness::run_cell(spec, env);
    CHECK(result.predictions_by_seed.size() == 1);
    CHECK(result.metric_values.count("macro_f1") == 1);

    spec.heuristic = baselines::HeuristicKind::prior;
    spec.heuristic_seeds = 7;
    auto prior = harness::run_cell(spec, env);
    CHECK(prior.predictions_by_seed.size() == 7);
    CHECK(prior.metric_values.count("macro_f1_sd") == 1);
}

TEST_CASE("random_probe cell runs the control pipeline") {
    TempDir tmp;
    auto env = ready_env(tmp);
    harness::RunSpec spec;
    spec.model = "stub";
    spec.dataset = "toy";
    spec.modality = represent::ModalityKind::d;
    spec.method = harness::Method::random_probe;
    spec.probe_config.max_iterations = 300;
    auto result = harness::run_cell(spec, env);
    REQUIRE(result.curve.has_value());
    CHECK(result.curve->per_layer_f1.size() == 3);
    CHECK(result.metric_values.at("macro_f1") < 0.85);  // control stays near chance
}

TEST_CASE("per-cell failures are isolated and recorded") {
    TempDir tmp;
    auto env = ready_env(tmp);
    auto specs = grid_specs({"d"}, {"prompt"});
    harness::RunSpec broken;
    broken.model = "missing-adapter";
    broken.dataset = "toy";
    broken.method = harness::Method::prompt;
    specs.push_back(broken);

    auto outcome = harness::run_matrix(specs, env);
    CHECK(outcome.executed == 1);
    CHECK(outcome.failed == 1);
    REQUIRE(outcome.failed_cells.size() == 1);
    CHECK(outcome.failed_cells[0].find("missing-adapter") != std::string::npos);
}

TEST_CASE("stability: hash stub delta is exact; fixed-letter stub is perfectly stable") {
    TempDir tmp;
    auto env = testing::toy_env(tmp.path, 2);
    dataset::DatasetStore store(env.data_root);
    // all test labels are class 1 so the fixed-letter 'A' stub is always right
    dataset::SourceTable train = testing::mean_shifted_table(dataset::Split::train, 10, 2, 12, 3);
    dataset::SourceTable test;
    test.split = dataset::Split::test;
    for (int i = 0; i < 6; ++i) {
        std::vector<float> row(12, 10.0f + static_cast<float>(i) * 0.01f);
        test.sequences.push_back(row);
        test.lengths.push_back(12);
        test.labels.push_back(1);
    }
    store.ingest({train, test}, testing::toy_meta("toy", 2, 12));

    // build a validated variant set from the template (mock rewriter)
    auto tmpl = env.bound_template("toy", prompting::PromptStyle::direct, 0);
    prompting::VariantSet set;
    set.base_template_hash = tmpl.hash();
    set.target = prompting::VariantTarget::system;
    for (int i = 1; i <= 10; ++i)
        set.variants.push_back({i, "Variation " + std::to_string(i) + ". " +
                                       tmpl.render_system_text()});

    auto outcome = harness::stability_run(env, "stub", "toy", represent::ModalityKind::d, set,
                                          20, 0.7, 1);
    REQUIRE(outcome.per_variant_f1.size() == 10);
    double mx = *std::max_element(outcome.per_variant_f1.begin(), outcome.per_variant_f1.end());
    double mn = *std::min_element(outcome.per_variant_f1.begin(), outcome.per_variant_f1.end());
    CHECK(outcome.spread.delta == mx - mn);  // exact
    CHECK(outcome.pass_table.num_samples == 20);

    // constant-correct stub
    model_bridge::StubOptions fixed;
    fixed.answer_mode = model_bridge::StubAnswerMode::fixed_letter;
    fixed.fixed_letter = 'A';
    env.adapters["stub"] = std::make_shared<model_bridge::StubAdapter>(fixed);
    auto stable = harness::stability_run(env, "stub", "toy", represent::ModalityKind::d, set, 20,
                                         0.7, 1);
    CHECK(stable.spread.delta == 0.0);
    CHECK(stable.pass_at_1 == 1.0);
    CHECK(stable.pass_at_n == 1.0);
    CHECK(stable.delta_pass == 0.0);
}

TEST_CASE("stability rejects variant sets that fail validation") {
    TempDir tmp;
    auto env = ready_env(tmp);
    prompting::VariantSet bad;
    bad.target = prompting::VariantTarget::system;
    bad.variants.push_back({1, "no format requirement here"});
    CHECK_THROWS_AS(
        harness::stability_run(env, "stub", "toy", represent::ModalityKind::d, bad, 4, 0.7, 1),
        VariantRejectedError);
}

TEST_CASE("tables and figures emit CSV-backed artifacts") {
    TempDir tmp;
    auto env = ready_env(tmp);
    auto specs = grid_specs({"d", "d+v"}, {"prompt", "probe"});
    harness::RunSpec heur;
    heur.model = "random";
    heur.dataset = "toy";
    heur.method = harness::Method::heuristic;
    heur.heuristic = baselines::HeuristicKind::majority;
    specs.push_back(heur);
    harness::run_matrix(specs, env);

    auto notes = report::emit_tables(env, report::TableLayout::main);
    CHECK(fs::exists(env.out_root / "reports" / "table_main.csv"));
    CHECK(fs::exists(env.out_root / "reports" / "table_main.md"));

    auto split_notes = report::emit_tables(env, report::TableLayout::modality_split);
    std::string csv = util::read_file(env.out_root / "reports" / "table_modality_split.csv");
    CHECK(csv.find("toy") != std::string::npos);
    CHECK(csv.find("probe") != std::string::npos);

    report::emit_tables(env, report::TableLayout::ablation);
    report::emit_tables(env, report::TableLayout::stability);

    auto fig_notes = report::emit_figures(env);
    CHECK(fs::exists(env.out_root / "figures" / "layer_curves.csv"));
    // layer curve CSV has L+1 rows per probe run
    std::string curves = util::read_file(env.out_root / "figures" / "layer_curves.csv");
    int lines = static_cast<int>(std::count(curves.begin(), curves.end(), '\n'));
    CHECK(lines == 1 + 2 * 3);  // header + 2 probe runs x 3 layer sites

    // embedding projection CSV: N rows x {x,y,label}
    bool found_embedding = false;
    for (const auto& entry : fs::directory_iterator(env.out_root / "figures")) {
        auto name = entry.path().filename().string();
        if (name.rfind("embedding_", 0) == 0 && entry.path().extension() == ".csv") {
            found_embedding = true;
            std::string body = util::read_file(entry.path());
            auto rows = util::split(util::trim(body), '\n');
            CHECK(rows.front() == "x,y,label");
            CHECK(rows.size() == 1 + 15);  // header + N_test
            for (size_t i = 1; i < rows.size(); ++i)
                CHECK(util::split(rows[i], ',').size() == 3);
        }
    }
    CHECK(found_embedding);

    std::string metrics_text = report::metrics_csv(env);
    CHECK(metrics_text.find("dataset,model,method,modality,style,shots,seed,metric,value") == 0);
    CHECK(metrics_text.find("macro_f1") != std::string::npos);
}

TEST_CASE("config loader builds environment and expands the matrix") {
    TempDir tmp;
    fs::create_directories(tmp.path / "prompts" / "toy");
    util::atomic_write(tmp.path / "prompts" / "toy" / "template.toml", std::string(R"(
task_description = "Play as a signal analysis expert."
question = "Which regime produced this series?"
hints = ["Mean level matters."]
)"));
    util::atomic_write(tmp.path / "config.toml", std::string(R"(
[paths]
data_root = "data"
out_root = "out"

[probe]
folds = 5
max_iterations = 200

[adapter.stub]
kind = "stub"
seed = 7

[adapter.ctl]
kind = "stub_random"
seed = 7

[template.toy]
path = "prompts/toy/template.toml"

[matrix]
datasets = ["toy"]
models = ["stub"]
modalities = ["d", "d+v"]
methods = ["prompt", "probe"]
heuristics = ["majority", "uniform"]
random_probe = true
)"));
    auto loaded = harness::load_config(tmp.path / "config.toml");
    CHECK(loaded.env.adapters.count("stub") == 1);
    CHECK(loaded.env.adapters.count("ctl") == 1);
    CHECK(loaded.env.templates.count("toy") == 1);
    // 2 heuristics + 2 modalities x 2 methods + 2 random_probe = 8
    CHECK(loaded.matrix_specs.size() == 8);
    CHECK(loaded.env.data_root == tmp.path / "data");
}

TEST_CASE("spec round trip through result json") {
    harness::RunSpec spec;
    spec.model = "stub";
    spec.dataset = "toy";
    spec.modality = represent::ModalityKind::d_plus_v;
    spec.method = harness::Method::probe;
    spec.style = prompting::PromptStyle::cot;
    spec.shots_per_class = 2;
    spec.seed = 99;

    harness::RunResult result;
    result.spec = spec;
    result.cell_key = "abc";
    result.metric_values["macro_f1"] = 0.625;
    auto back = harness::RunResult::from_json(result.to_json());
    CHECK(back.spec.canonical_json() == spec.canonical_json());
    CHECK(back.metric_values.at("macro_f1") == 0.625);
}

}  // TEST_SUITE
