// tsprobe command line: dataset ingestion, representation previews, variant
// generation, extraction, probing, prompting, stability, the run matrix, and
// report emission. Exit codes: 0 success, 2 partial (some cells failed),
// 1 fatal.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tsprobe/chat_client.hpp"
#include "tsprobe/errors.hpp"
#include "tsprobe/harness.hpp"
#include "tsprobe/report.hpp"
#include "tsprobe/util.hpp"

namespace fs = std::filesystem;
using namespace tsprobe;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
};

harness::Environment make_env(const GlobalArgs& args, std::vector<harness::RunSpec>* specs) {
    harness::Environment env;
    if (!args.config_path.empty()) {
        auto loaded = harness::load_config(args.config_path);
        env = std::move(loaded.env);
        if (specs) *specs = std::move(loaded.matrix_specs);
    }
    if (!args.out_dir.empty()) env.out_root = args.out_dir;
    if (!env.adapters.count("stub")) {
        model_bridge::StubOptions opts;
        opts.seed = args.seed_set ? args.seed : 0;
        env.adapters["stub"] = std::make_shared<model_bridge::StubAdapter>(opts);
    }
    return env;
}

dataset::TimeSeriesDataset load(const harness::Environment& env, const std::string& id,
                                const std::string& split) {
    return env.store().load_split(id, dataset::split_from_string(split));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prompt-vs-probe diagnostic harness for time-series classification"};
    app.require_subcommand(1);

    GlobalArgs global;
    app.add_option("--config", global.config_path, "TOML-like config file");
    app.add_option("--out-dir", global.out_dir, "output root (overrides config)");
    auto* seed_opt = app.add_option("--seed", global.seed, "global seed override");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "ingest CSV splits into the canonical store");
    std::string in_id, in_train, in_test, in_classes, in_channel_names, in_style = "line",
                in_nan = "reject", in_provenance;
    int in_channels = 1, in_length = 0;
    double in_rate = 0.0;
    ingest->add_option("--id", in_id)->required();
    ingest->add_option("--train", in_train, "train split CSV")->required();
    ingest->add_option("--test", in_test, "test split CSV")->required();
    ingest->add_option("--classes", in_classes, "comma-separated class names")->required();
    ingest->add_option("--channels", in_channels);
    ingest->add_option("--length", in_length, "declared T (0 = infer from first row)");
    ingest->add_option("--channel-names", in_channel_names);
    ingest->add_option("--render-style", in_style, "line|spectrogram");
    ingest->add_option("--nan-policy", in_nan, "reject|forward_fill|zero_fill");
    ingest->add_option("--sample-rate", in_rate);
    ingest->add_option("--provenance", in_provenance);

    // serialize
    auto* serialize = app.add_subcommand("serialize", "print the digit-space text for a sample");
    std::string se_id, se_split = "test";
    int se_index = 0, se_precision = 2, se_stride = 1;
    serialize->add_option("--dataset", se_id)->required();
    serialize->add_option("--split", se_split);
    serialize->add_option("--index", se_index);
    serialize->add_option("--precision", se_precision);
    serialize->add_option("--stride", se_stride);

    // render
    auto* render = app.add_subcommand("render", "render a sample to PNG");
    std::string re_id, re_split = "test", re_out = "sample.png";
    int re_index = 0;
    render->add_option("--dataset", re_id)->required();
    render->add_option("--split", re_split);
    render->add_option("--index", re_index);
    render->add_option("--out", re_out);

    // variants
    auto* variants = app.add_subcommand("variants", "generate validated prompt variants");
    std::string va_dataset, va_target = "system", va_endpoint, va_model = "gpt-4.1-mini", va_out;
    int va_n = 10, va_batch = 5;
    variants->add_option("--dataset", va_dataset)->required();
    variants->add_option("--target", va_target, "system|question");
    variants->add_option("--endpoint", va_endpoint, "chat-completions base URL")->required();
    variants->add_option("--model", va_model, "rewriter model name");
    variants->add_option("--n", va_n);
    variants->add_option("--batch", va_batch);
    variants->add_option("--out", va_out, "output JSON (default prompts/<ds>/variants_<target>.json)");

    // extract
    auto* extract = app.add_subcommand("extract", "extract per-layer final-token activations");
    std::string ex_dataset, ex_model = "stub", ex_modality = "d", ex_style = "direct";
    int ex_shots = 0;
    extract->add_option("--dataset", ex_dataset)->required();
    extract->add_option("--model", ex_model);
    extract->add_option("--modality", ex_modality);
    extract->add_option("--style", ex_style);
    extract->add_option("--shots", ex_shots);

    // probe
    auto* probe = app.add_subcommand("probe", "train layer-wise probes over extracted stores");
    std::string pr_dataset, pr_model = "stub", pr_modality = "d", pr_style = "direct";
    probe->add_option("--dataset", pr_dataset)->required();
    probe->add_option("--model", pr_model);
    probe->add_option("--modality", pr_modality);
    probe->add_option("--style", pr_style);

    // prompt-eval
    auto* prompt_eval_cmd = app.add_subcommand("prompt-eval", "greedy prompt classification");
    std::string pe_dataset, pe_model = "stub", pe_modality = "d", pe_style = "direct";
    int pe_shots = 0;
    prompt_eval_cmd->add_option("--dataset", pe_dataset)->required();
    prompt_eval_cmd->add_option("--model", pe_model);
    prompt_eval_cmd->add_option("--modality", pe_modality);
    prompt_eval_cmd->add_option("--style", pe_style);
    prompt_eval_cmd->add_option("--shots", pe_shots);

    // stability
    auto* stability = app.add_subcommand("stability", "prompt-variant spread and pass@K");
    std::string st_dataset, st_model = "stub", st_modality = "d", st_variants;
    int st_n = 20;
    double st_temp = 0.7;
    stability->add_option("--dataset", st_dataset)->required();
    stability->add_option("--model", st_model);
    stability->add_option("--modality", st_modality);
    stability->add_option("--variants", st_variants, "variant set JSON")->required();
    stability->add_option("--n", st_n, "samples per item");
    stability->add_option("--temperature", st_temp);

    // matrix
    auto* matrix = app.add_subcommand("matrix", "run the configured evaluation matrix");

    // report
    auto* report_cmd = app.add_subcommand("report", "emit tables, figures, metrics CSV");
    std::string rp_layout = "all";
    bool rp_figures = false, rp_audit = false, rp_metrics = false;
    report_cmd->add_option("--layout", rp_layout, "main|modality_split|ablation|stability|all");
    report_cmd->add_flag("--figures", rp_figures);
    report_cmd->add_flag("--metrics-csv", rp_metrics);
    report_cmd->add_flag("--audit", rp_audit, "recompute metrics from persisted predictions");

    CLI11_PARSE(app, argc, argv);
    global.seed_set = seed_opt->count() > 0;

    try {
        std::vector<harness::RunSpec> specs;
        harness::Environment env = make_env(&app == nullptr ? GlobalArgs{} : global, &specs);

        if (*ingest) {
            dataset::IngestMeta meta;
            meta.id = in_id;
            meta.num_channels = in_channels;
            meta.class_names = util::split(in_classes, ',');
            if (!in_channel_names.empty()) meta.channel_names = util::split(in_channel_names, ',');
            meta.render_style = dataset::render_style_from_string(in_style);
            meta.nan_policy = dataset::nan_policy_from_string(in_nan);
            if (in_rate > 0) meta.sample_rate_hz = in_rate;
            meta.provenance = in_provenance;
            meta.length = in_length;
            if (meta.length == 0) {
                // infer T from the first data row of the train csv
                std::ifstream in(in_train);
                std::string line;
                while (std::getline(in, line) && util::trim(line).empty()) {}
                auto fields = util::split(line, ',');
                std::string head = util::lower(util::trim(fields.empty() ? "" : fields[0]));
                if (head == "label" || head == "class") std::getline(in, line);
                meta.length =
                    static_cast<int>((util::split(line, ',').size() - 1) / in_channels);
            }
            auto store = env.store();
            auto train = dataset::read_source_csv(in_train, meta, dataset::Split::train);
            auto test = dataset::read_source_csv(in_test, meta, dataset::Split::test);
            auto manifest = store.ingest({train, test}, meta);
            std::cout << "ingested " << manifest.id << ": train N=" <<
                manifest.shapes.at("train").num_samples
                      << ", test N=" << manifest.shapes.at("test").num_samples
                      << ", V=" << manifest.shapes.at("train").num_channels
                      << ", T=" << manifest.shapes.at("train").length
                      << ", C=" << manifest.class_names.size() << "\n";
            return 0;
        }

        if (*serialize) {
            auto data = load(env, se_id, se_split);
            represent::SerializationConfig cfg = env.serial_config;
            cfg.precision = se_precision;
            cfg.stride = se_stride;
            std::cout << represent::serialize_digits_multichannel(
                             data.sample_copy(se_index), data.num_channels, data.length,
                             data.channel_names, cfg)
                      << "\n";
            return 0;
        }

        if (*render) {
            auto data = load(env, re_id, re_split);
            represent::RenderConfig cfg = env.render_config;
            cfg.style = data.render_style;
            cfg.title = data.id + " sample " + data.sample_ids[re_index];
            auto rep = represent::build_representation(
                data.sample_copy(re_index), data.num_channels, data.length,
                represent::ModalityKind::v, env.serial_config, cfg, data.channel_names);
            util::atomic_write(re_out, rep.images.front().data(), rep.images.front().size());
            std::cout << "wrote " << re_out << " (" << rep.images.front().size() << " bytes, "
                      << represent::kRendererVersion << ")\n";
            return 0;
        }

        if (*variants) {
            auto tmpl = env.bound_template(va_dataset, prompting::PromptStyle::direct, 0);
            chat::HttpChatOptions opts;
            opts.base_url = va_endpoint;
            opts.model = va_model;
            opts.temperature = 0.9;
            chat::HttpChatClient client(opts);
            prompting::RewriterOptions ropts;
            ropts.total_n = va_n;
            ropts.batch_b = va_batch;
            auto target = prompting::target_from_string(va_target);
            auto set = prompting::generate_variants(tmpl, target, client, ropts);
            fs::path out = va_out.empty()
                               ? fs::path("prompts") / va_dataset / ("variants_" + va_target + ".json")
                               : fs::path(va_out);
            util::atomic_write(out, set.to_json());
            std::cout << "wrote " << out.string() << " with " << set.variants.size()
                      << " validated variants\n";
            return 0;
        }

        if (*extract) {
            auto& adapter = env.adapter(ex_model);
            auto style = prompting::style_from_string(ex_style);
            auto tmpl = env.bound_template(ex_dataset, style, ex_shots);
            model_bridge::ExtractJob job;
            job.modality = represent::modality_from_string(ex_modality);
            job.serial_config = env.serial_config;
            job.render_config = env.render_config;
            job.extraction_style = style == prompting::PromptStyle::cot
                                       ? model_bridge::ExtractionStyle::post_cot_last_token
                                       : model_bridge::ExtractionStyle::prefill_last_token;
            job.normalize_per_channel = env.normalize_per_channel;
            job.max_skip_fraction = env.max_skip_fraction;
            for (auto split : {dataset::Split::train, dataset::Split::test}) {
                auto data = env.store().load_split(ex_dataset, split);
                auto key = model_bridge::make_store_key(adapter.name(), ex_dataset, split,
                                                        job.modality, style, ex_shots,
                                                        job.extraction_style, job.serial_config);
                auto store = model_bridge::ActivationStore::create_or_open(
                    env.acts_root(), key, adapter.num_layers(), adapter.hidden_dim());
                auto stats = model_bridge::extract_dataset(data, tmpl, adapter, store, job);
                std::cout << dataset::to_string(split) << ": extracted " << stats.extracted
                          << ", reused " << stats.reused << ", skipped " << stats.skipped
                          << " -> " << store.dir().string() << "\n";
            }
            return 0;
        }

        if (*probe || *prompt_eval_cmd) {
            harness::RunSpec spec;
            spec.dataset = *probe ? pr_dataset : pe_dataset;
            spec.model = *probe ? pr_model : pe_model;
            spec.modality = represent::modality_from_string(*probe ? pr_modality : pe_modality);
            spec.style = prompting::style_from_string(*probe ? pr_style : pe_style);
            spec.method = *probe ? harness::Method::probe : harness::Method::prompt;
            spec.shots_per_class = *probe ? 0 : pe_shots;
            if (global.seed_set) {
                spec.seed = global.seed;
                spec.probe_config.seed = global.seed;
            }
            auto result = harness::run_cell(spec, env);
            fs::create_directories(env.runs_root() / result.cell_key);
            util::atomic_write(env.runs_root() / result.cell_key / "result.json",
                               result.to_json());
            if (result.curve) {
                probes::ProbeCurve& curve = *result.curve;
                std::cout << "layer curve (macro F1):\n";
                for (size_t l = 0; l < curve.per_layer_f1.size(); ++l)
                    std::cout << "  layer " << l << ": " << curve.per_layer_f1[l]
                              << (static_cast<int>(l) == curve.best_layer ? "  <- best" : "")
                              << "\n";
            }
            std::cout << "macro_f1 = " << result.metric_values.at("macro_f1") << "\n";
            if (result.metric_values.count("failure_rate"))
                std::cout << "failure_rate = " << result.metric_values.at("failure_rate") << "\n";
            std::cout << "result cell " << result.cell_key << "\n";
            return 0;
        }

        if (*stability) {
            auto set = prompting::VariantSet::from_json(util::read_file(st_variants));
            auto outcome = harness::stability_run(
                env, st_model, st_dataset, represent::modality_from_string(st_modality), set,
                st_n, st_temp, global.seed);
            fs::path dir = env.out_root / "stability";
            fs::create_directories(dir);
            fs::path out = dir / (st_dataset + "_" + st_modality + "_" +
                                  prompting::to_string(set.target) + ".json");
            util::atomic_write(out, outcome.to_json(st_dataset, st_model, st_modality,
                                                    prompting::to_string(set.target)));
            std::cout << "delta = " << outcome.spread.delta << " (min " << outcome.spread.min
                      << ", max " << outcome.spread.max << ")\n"
                      << "P@1 = " << outcome.pass_at_1 << ", P@" << st_n << " = "
                      << outcome.pass_at_n << ", dP@K = " << outcome.delta_pass << "\n"
                      << "wrote " << out.string() << "\n";
            return 0;
        }

        if (*matrix) {
            if (specs.empty()) {
                std::cerr << "no matrix specs; provide --config with a [matrix] section\n";
                return 1;
            }
            auto outcome = harness::run_matrix(specs, env);
            std::cout << "matrix: executed " << outcome.executed << ", reused " << outcome.reused
                      << ", failed " << outcome.failed << "\n";
            for (const auto& f : outcome.failed_cells) std::cerr << "  failed: " << f << "\n";
            return outcome.failed == 0 ? 0 : 2;
        }

        if (*report_cmd) {
            bool any_warning = false;
            auto emit = [&](report::TableLayout layout) {
                auto notes = report::emit_tables(env, layout);
                for (const auto& f : notes.files) std::cout << "wrote " << f.string() << "\n";
                for (const auto& w : notes.warnings) {
                    std::cout << "warning: " << w << "\n";
                    any_warning = true;
                }
            };
            if (rp_layout == "all") {
                emit(report::TableLayout::main);
                emit(report::TableLayout::modality_split);
                emit(report::TableLayout::ablation);
                emit(report::TableLayout::stability);
            } else {
                emit(report::layout_from_string(rp_layout));
            }
            if (rp_metrics) {
                fs::path out = env.out_root / "reports" / "metrics.csv";
                fs::create_directories(out.parent_path());
                util::atomic_write(out, report::metrics_csv(env));
                std::cout << "wrote " << out.string() << "\n";
            }
            if (rp_figures) {
                auto notes = report::emit_figures(env);
                for (const auto& f : notes.files) std::cout << "wrote " << f.string() << "\n";
                for (const auto& w : notes.warnings) std::cout << "warning: " << w << "\n";
            }
            if (rp_audit) {
                auto mismatches = harness::audit_results(env);
                if (mismatches.empty()) {
                    std::cout << "audit clean: stored metrics match recomputation\n";
                } else {
                    for (const auto& m : mismatches) std::cerr << "audit mismatch: " << m << "\n";
                    return 1;
                }
            }
            (void)any_warning;
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
