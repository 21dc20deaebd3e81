// Python bindings for the main operations: digit serialization, rendering,
// answer parsing, metrics, probes, heuristic floors, and the activation
// store (so external model runners can feed the probing pipeline).

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tsprobe/baselines.hpp"
#include "tsprobe/dataset.hpp"
#include "tsprobe/errors.hpp"
#include "tsprobe/harness.hpp"
#include "tsprobe/metrics.hpp"
#include "tsprobe/model_bridge.hpp"
#include "tsprobe/probes.hpp"
#include "tsprobe/prompting.hpp"
#include "tsprobe/represent.hpp"
#include "tsprobe/tsne.hpp"

namespace py = pybind11;
using namespace tsprobe;

namespace {

represent::SerializationConfig serial_config(int precision, const std::string& digit_sep,
                                             const std::string& step_sep, int stride) {
    represent::SerializationConfig cfg;
    cfg.precision = precision;
    cfg.digit_separator = digit_sep;
    cfg.timestep_separator = step_sep;
    cfg.stride = stride;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "prompt-vs-probe diagnostic harness core";
    m.attr("renderer_version") = represent::kRendererVersion;
    m.attr("serializer_version") = represent::kSerializerVersion;
    m.attr("format_requirement") = prompting::kFormatRequirement;

    // --- represent ---
    m.def(
        "serialize_digits",
        [](const std::vector<float>& series, int precision, const std::string& digit_sep,
           const std::string& step_sep, int stride) {
            return represent::serialize_digits(
                series, serial_config(precision, digit_sep, step_sep, stride));
        },
        py::arg("series"), py::arg("precision") = 2, py::arg("digit_separator") = " ",
        py::arg("timestep_separator") = " , ", py::arg("stride") = 1,
        "Fixed-precision digit-space serialization of one series.");

    m.def(
        "render_line_plot",
        [](const std::vector<float>& sample, int channels, int length,
           const std::vector<std::string>& channel_names, int width, int height,
           int subplot_threshold) {
            represent::RenderConfig cfg;
            cfg.width_px = width;
            cfg.height_px = height;
            cfg.subplot_threshold = subplot_threshold;
            auto png = represent::render_line_plot(sample, channels, length, cfg, channel_names);
            return py::bytes(reinterpret_cast<const char*>(png.data()), png.size());
        },
        py::arg("sample"), py::arg("channels"), py::arg("length"),
        py::arg("channel_names") = std::vector<std::string>{}, py::arg("width") = 640,
        py::arg("height") = 480, py::arg("subplot_threshold") = 3);

    m.def(
        "render_spectrogram",
        [](const std::vector<float>& series, int window, double overlap, int width, int height) {
            represent::RenderConfig cfg;
            cfg.style = dataset::RenderStyle::spectrogram;
            cfg.window = window;
            cfg.overlap = overlap;
            cfg.width_px = width;
            cfg.height_px = height;
            auto png = represent::render_spectrogram(series, cfg);
            return py::bytes(reinterpret_cast<const char*>(png.data()), png.size());
        },
        py::arg("series"), py::arg("window") = 256, py::arg("overlap") = 0.5,
        py::arg("width") = 640, py::arg("height") = 480);

    // --- prompting ---
    m.def(
        "parse_answer",
        [](const std::string& raw, const std::vector<std::string>& class_names) {
            auto letters = dataset::option_letters(static_cast<int>(class_names.size()));
            std::vector<std::pair<char, std::string>> schema;
            for (size_t i = 0; i < class_names.size(); ++i)
                schema.emplace_back(letters[i], class_names[i]);
            auto parsed = prompting::parse_answer(raw, schema);
            return py::make_tuple(parsed.letter ? py::cast(std::string(1, *parsed.letter))
                                                : py::none(),
                                  parsed.class_index(schema));
        },
        py::arg("raw"), py::arg("class_names"),
        "Returns (letter or None, 1-based class index or 0 on FAILURE).");

    // --- metrics ---
    m.def(
        "macro_f1",
        [](const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes) {
            return metrics::macro_f1(y_true, y_pred, num_classes).macro_f1;
        },
        py::arg("y_true"), py::arg("y_pred"), py::arg("num_classes"),
        "Macro F1 over 1-based labels; prediction 0 means FAILURE.");

    m.def("pass_at_k", &metrics::pass_at_k, py::arg("correct"), py::arg("num_samples"),
          py::arg("k"), "Unbiased pass@K estimate for one item.");
    m.def("dataset_pass_at_k", &metrics::dataset_pass_at_k, py::arg("per_item_correct"),
          py::arg("num_samples"), py::arg("k"));
    m.def(
        "variant_spread",
        [](const std::vector<double>& f1s) {
            auto r = metrics::variant_spread(f1s);
            py::dict d;
            d["min"] = r.min;
            d["max"] = r.max;
            d["mean"] = r.mean;
            d["median"] = r.median;
            d["delta"] = r.delta;
            return d;
        },
        py::arg("f1_list"));

    // --- baselines ---
    m.def("majority_predict", &baselines::majority_predict, py::arg("train_labels"),
          py::arg("n_test"));
    m.def("prior_predict", &baselines::prior_predict, py::arg("train_labels"), py::arg("n_test"),
          py::arg("seed"));
    m.def("uniform_predict", &baselines::uniform_predict, py::arg("num_classes"),
          py::arg("n_test"), py::arg("seed"));

    // --- probes ---
    py::class_<probes::LayerProbe>(m, "LayerProbe")
        .def_readonly("layer_index", &probes::LayerProbe::layer_index)
        .def_readonly("chosen_c", &probes::LayerProbe::chosen_c)
        .def_readonly("converged", &probes::LayerProbe::converged)
        .def_property_readonly("weights",
                               [](const probes::LayerProbe& p) { return p.weights; })
        .def_property_readonly("bias", [](const probes::LayerProbe& p) { return p.bias; })
        .def("to_json", &probes::LayerProbe::to_json);

    m.def(
        "train_probe",
        [](const Eigen::MatrixXd& features, const std::vector<int>& labels, int num_classes,
           int folds, int max_iterations, bool standardize, uint64_t seed,
           const std::vector<double>& c_grid) {
            probes::ProbeConfig cfg;
            cfg.folds = folds;
            cfg.max_iterations = max_iterations;
            cfg.standardize = standardize;
            cfg.seed = seed;
            if (!c_grid.empty()) cfg.c_grid = c_grid;
            return probes::train_probe(features, labels, num_classes, cfg);
        },
        py::arg("features"), py::arg("labels"), py::arg("num_classes"), py::arg("folds") = 5,
        py::arg("max_iterations") = 1000, py::arg("standardize") = true, py::arg("seed") = 0,
        py::arg("c_grid") = std::vector<double>{},
        "Grid-searched multinomial logistic probe (stratified CV, macro F1).");

    m.def(
        "evaluate_probe",
        [](const probes::LayerProbe& probe, const Eigen::MatrixXd& features,
           const std::vector<int>& labels) {
            auto ev = probes::evaluate_probe(probe, features, labels);
            return py::make_tuple(ev.scores.macro_f1, ev.predictions);
        },
        py::arg("probe"), py::arg("features"), py::arg("labels"));

    m.def(
        "tsne_embed",
        [](const Eigen::MatrixXd& features, double perplexity, int iterations, uint64_t seed) {
            tsne::TsneConfig cfg;
            cfg.perplexity = perplexity;
            cfg.iterations = iterations;
            cfg.seed = seed;
            return tsne::embed_2d(features, cfg);
        },
        py::arg("features"), py::arg("perplexity") = 30.0, py::arg("iterations") = 500,
        py::arg("seed") = 0);

    // --- activation store (external extraction writes through this) ---
    py::class_<model_bridge::ActivationStore>(m, "ActivationStore")
        .def_static(
            "create_or_open",
            [](const std::filesystem::path& root, const std::string& model,
               const std::string& dataset_id, const std::string& split,
               const std::string& modality, const std::string& style, int shots,
               const std::string& extraction_style, int num_layers, int dim,
               const std::string& serializer_version) {
                model_bridge::StoreKey key;
                key.model = model;
                key.dataset = dataset_id;
                key.split = split;
                key.modality = modality;
                key.style = style;
                key.shots_per_class = shots;
                key.extraction_style = extraction_style;
                key.renderer_version = represent::kRendererVersion;
                key.serializer_version = serializer_version.empty()
                                             ? represent::SerializationConfig{}.version_tag()
                                             : serializer_version;
                return model_bridge::ActivationStore::create_or_open(root, key, num_layers, dim);
            },
            py::arg("root"), py::arg("model"), py::arg("dataset"), py::arg("split"),
            py::arg("modality") = "d", py::arg("style") = "direct", py::arg("shots") = 0,
            py::arg("extraction_style") = "prefill_last_token", py::arg("num_layers") = 0,
            py::arg("dim") = 0, py::arg("serializer_version") = "")
        .def("has", &model_bridge::ActivationStore::has)
        .def("ids", &model_bridge::ActivationStore::ids)
        .def_property_readonly("num_layers", &model_bridge::ActivationStore::num_layers)
        .def_property_readonly("dim", &model_bridge::ActivationStore::dim)
        .def_property_readonly(
            "dir", [](const model_bridge::ActivationStore& s) { return s.dir().string(); })
        .def(
            "put",
            [](model_bridge::ActivationStore& store, const std::string& sample_id,
               const std::vector<float>& matrix, const std::string& prompt_hash) {
                model_bridge::ActivationRecord rec;
                rec.sample_id = sample_id;
                rec.prompt_hash = prompt_hash;
                rec.num_layers = store.num_layers();
                rec.dim = store.dim();
                rec.matrix = matrix;
                rec.style = model_bridge::extraction_style_from_string(
                    store.key().extraction_style);
                store.put(rec);
            },
            py::arg("sample_id"), py::arg("matrix"), py::arg("prompt_hash") = "",
            "Append one (L+1)*D row-major float32 record; existing ids are left untouched.")
        .def(
            "get",
            [](const model_bridge::ActivationStore& store, const std::string& sample_id) {
                return store.get(sample_id).matrix;
            },
            py::arg("sample_id"))
        .def("add_skip", &model_bridge::ActivationStore::add_skip, py::arg("sample_id"),
             py::arg("reason"));

    // --- error types surface as python exceptions ---
    py::register_exception<SerializeValueError>(m, "SerializeValueError");
    py::register_exception<RenderError>(m, "RenderErrorEx");
    py::register_exception<DomainError>(m, "DomainErrorEx");
    py::register_exception<ShapeError>(m, "ShapeErrorEx");
    py::register_exception<DegenerateLabelsError>(m, "DegenerateLabelsErrorEx");
}
