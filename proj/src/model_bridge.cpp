#include "tsprobe/model_bridge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <set>
#include <sstream>

#include "tsprobe/errors.hpp"
#include "tsprobe/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsprobe::model_bridge {

std::string to_string(ExtractionStyle s) {
    return s == ExtractionStyle::prefill_last_token ? "prefill_last_token" : "post_cot_last_token";
}

ExtractionStyle extraction_style_from_string(const std::string& s) {
    if (s == "prefill_last_token") return ExtractionStyle::prefill_last_token;
    if (s == "post_cot_last_token") return ExtractionStyle::post_cot_last_token;
    throw ConfigError("unknown extraction style: " + s);
}

void SamplingParams::validate() const {
    if (temperature < 0.0) throw ConfigError("sampling: temperature must be >= 0");
    if (top_p <= 0.0 || top_p > 1.0) throw ConfigError("sampling: top_p must be in (0,1]");
    if (num_samples < 1) throw ConfigError("sampling: num_samples must be >= 1");
    if (num_samples > 1 && temperature <= 0.0)
        throw ConfigError("sampling: num_samples > 1 requires temperature > 0");
}

void ActivationRecord::validate() const {
    if (num_layers < 1 || dim < 1) throw ShapeError("activation record: empty shape");
    if (matrix.size() != static_cast<size_t>(num_layers + 1) * dim)
        throw ShapeError("activation record: matrix size != (L+1)*D");
    for (float v : matrix)
        if (!std::isfinite(v)) throw ShapeError("activation record: non-finite entry");
}

// --- stub -------------------------------------------------------------------

StubAdapter::StubAdapter(StubOptions options) : options_(options) {}

std::string StubAdapter::name() const {
    return options_.planted ? "stub" : "stub-random-" + std::to_string(options_.seed);
}

namespace {

// digits in the payload are the default fixed-2-decimals serialization
std::vector<double> parse_payload_values(const std::string& user_text) {
    // values live between the last "Time series" marker and the output
    // format line; shot blocks earlier in the text are ignored
    size_t start = user_text.rfind("Time series");
    if (start == std::string::npos) return {};
    size_t stop = user_text.find("Output format requirement", start);
    std::string payload = user_text.substr(
        start, stop == std::string::npos ? std::string::npos : stop - start);

    std::vector<double> values;
    std::istringstream lines(payload);
    std::string line;
    while (std::getline(lines, line)) {
        size_t colon = line.find(": ");
        std::string body = colon == std::string::npos ? line : line.substr(colon + 2);
        if (body.find("Time series") != std::string::npos) continue;
        std::string digits;
        bool negative = false;
        auto flush = [&]() {
            if (digits.empty()) return;
            double v = std::stod(digits) / 100.0;
            values.push_back(negative ? -v : v);
            digits.clear();
            negative = false;
        };
        for (char c : body) {
            if (std::isdigit(static_cast<unsigned char>(c))) digits.push_back(c);
            else if (c == '-') negative = true;
            else if (c == ',') flush();
        }
        flush();
    }
    return values;
}

std::vector<float> series_stats_features(const std::vector<double>& v) {
    std::vector<float> f(StubAdapter::kDim, 0.0f);
    if (v.empty()) return f;
    const auto n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0, adiff = 0.0;
    int crossings = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        var += (v[i] - mean) * (v[i] - mean);
        if (i > 0) {
            adiff += std::abs(v[i] - v[i - 1]);
            if ((v[i] - mean) * (v[i - 1] - mean) < 0) ++crossings;
        }
    }
    f[0] = static_cast<float>(mean);
    f[1] = static_cast<float>(std::sqrt(var / n));
    f[2] = static_cast<float>(*std::min_element(v.begin(), v.end()));
    f[3] = static_cast<float>(*std::max_element(v.begin(), v.end()));
    f[4] = static_cast<float>(v.front());
    f[5] = static_cast<float>(v.back());
    f[6] = static_cast<float>(v.size() > 1 ? adiff / (n - 1.0) : 0.0);
    f[7] = static_cast<float>(v.size() > 1 ? crossings / (n - 1.0) : 0.0);
    return f;
}

std::vector<float> plot_ink_features(const std::vector<uint8_t>& png) {
    cv::Mat raw(1, static_cast<int>(png.size()), CV_8UC1, const_cast<uint8_t*>(png.data()));
    cv::Mat img = cv::imdecode(raw, cv::IMREAD_GRAYSCALE);
    std::vector<float> f(StubAdapter::kDim, 0.0f);
    if (img.empty()) return f;
    const int bands = StubAdapter::kDim;
    for (int r = 0; r < img.rows; ++r) {
        int band = r * bands / img.rows;
        const uint8_t* row = img.ptr<uint8_t>(r);
        int ink = 0;
        for (int c = 0; c < img.cols; ++c)
            if (row[c] < 128) ++ink;
        f[static_cast<size_t>(band)] += static_cast<float>(ink);
    }
    const float total = static_cast<float>(img.rows) * img.cols;
    for (float& x : f) x = 100.0f * x / total;
    return f;
}

uint64_t bundle_content_hash(const prompting::PromptBundle& bundle, uint64_t seed) {
    uint64_t h = util::stable_hash(bundle.system_text, seed);
    h = util::stable_hash(bundle.user_text, h);
    for (const auto& img : bundle.images) h = util::stable_hash(img.data(), img.size(), h);
    return h;
}

// centered sum of four uniforms; close enough to gaussian for noise rows
float pseudo_gaussian(uint64_t& state) {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) s += util::u64_to_unit(util::splitmix64(state));
    return static_cast<float>(s - 2.0);
}

size_t bundle_chars(const prompting::PromptBundle& bundle) {
    size_t n = bundle.system_text.size() + bundle.user_text.size();
    for (const auto& img : bundle.images) n += img.size();
    return n;
}

}  // namespace

std::string StubAdapter::reasoning_text(const prompting::PromptBundle& bundle) const {
    uint64_t h = bundle_content_hash(bundle, options_.seed ^ 0x5eedULL);
    int sentences = static_cast<int>(h % 3) + 1;
    std::string out;
    for (int i = 0; i < sentences; ++i)
        out += "Step " + std::to_string(i + 1) + ": the sequence statistics narrow the options. ";
    return out;
}

std::vector<float> StubAdapter::content_features(const prompting::PromptBundle& bundle) const {
    auto values = parse_payload_values(bundle.user_text);
    if (!values.empty()) return series_stats_features(values);
    if (!bundle.images.empty()) return plot_ink_features(bundle.images.back());
    return std::vector<float>(kDim, 0.0f);
}

std::vector<std::string> StubAdapter::generate(const prompting::PromptBundle& bundle,
                                               const SamplingParams& params) {
    params.validate();
    if (bundle_chars(bundle) > options_.max_context_chars)
        throw ContextLengthError("stub context limit exceeded for sample " + bundle.sample_id);
    if (bundle.answer_schema.empty()) throw BackendError("bundle has no answer schema");
    const int num_classes = static_cast<int>(bundle.answer_schema.size());
    const uint64_t base = util::stable_hash(bundle.prompt_hash(), options_.seed);
    const bool cot = bundle.system_text.find("step by step") != std::string::npos;

    std::vector<std::string> out;
    for (int i = 0; i < params.num_samples; ++i) {
        int idx;
        if (options_.answer_mode == StubAnswerMode::fixed_letter) {
            idx = options_.fixed_letter - 'A';
            if (idx < 0 || idx >= num_classes) throw BackendError("fixed letter outside schema");
        } else if (params.temperature <= 0.0) {
            idx = static_cast<int>(base % static_cast<uint64_t>(num_classes));
        } else {
            uint64_t h = util::stable_hash(bundle.prompt_hash(),
                                           util::mix64(static_cast<uint64_t>(params.seed)) +
                                               static_cast<uint64_t>(i) + 1);
            idx = static_cast<int>(h % static_cast<uint64_t>(num_classes));
        }
        const auto& [letter, name] = bundle.answer_schema[static_cast<size_t>(idx)];
        std::string text;
        if (cot) text = reasoning_text(bundle) + "\n";
        text += std::string("The answer is [") + letter + "] " + name;
        out.push_back(std::move(text));
    }
    return out;
}

ActivationRecord StubAdapter::hidden_states(const prompting::PromptBundle& bundle,
                                            ExtractionStyle style) {
    if (bundle_chars(bundle) > options_.max_context_chars)
        throw ContextLengthError("stub context limit exceeded for sample " + bundle.sample_id);

    ActivationRecord rec;
    rec.sample_id = bundle.sample_id;
    rec.prompt_hash = bundle.prompt_hash();
    rec.num_layers = kLayers;
    rec.dim = kDim;
    rec.style = style;
    rec.matrix.assign(static_cast<size_t>(kLayers + 1) * kDim, 0.0f);

    // post-CoT extraction reads the position after generated reasoning, so
    // the generated text feeds the hash state
    uint64_t content = bundle_content_hash(bundle, options_.seed);
    if (style == ExtractionStyle::post_cot_last_token)
        content = util::stable_hash(reasoning_text(bundle), content);

    for (int layer = 0; layer <= kLayers; ++layer) {
        float* row = rec.matrix.data() + static_cast<size_t>(layer) * kDim;
        if (options_.planted && layer == 1) {
            auto f = content_features(bundle);
            uint64_t jitter_state = util::stable_hash("jitter", content);
            for (int i = 0; i < kDim; ++i)
                row[i] = f[static_cast<size_t>(i)] + 1e-3f * pseudo_gaussian(jitter_state);
        } else {
            const char* tag = options_.planted ? "noise" : "ctrl";
            uint64_t state =
                util::stable_hash(tag, content + static_cast<uint64_t>(layer) * 0x9e37ULL);
            for (int i = 0; i < kDim; ++i) row[i] = pseudo_gaussian(state);
        }
    }
    rec.validate();
    return rec;
}

// --- remote ------------------------------------------------------------------

RemoteChatAdapter::RemoteChatAdapter(chat::HttpChatOptions options, bool images_supported,
                                     int context_chars)
    : options_(std::move(options)), images_supported_(images_supported),
      context_chars_(context_chars) {}

std::vector<std::string> RemoteChatAdapter::generate(const prompting::PromptBundle& bundle,
                                                     const SamplingParams& params) {
    params.validate();
    if (!images_supported_ && !bundle.images.empty())
        throw BackendError("adapter " + name() + " does not accept image input");
    if (context_chars_ > 0 && bundle_chars(bundle) > static_cast<size_t>(context_chars_))
        throw ContextLengthError("prompt exceeds configured context budget");
    chat::HttpChatClient client(options_);
    return client.complete_multi(bundle.system_text, bundle.user_text, bundle.images,
                                 params.temperature, params.top_p, params.max_new_tokens,
                                 params.seed, params.num_samples);
}

ActivationRecord RemoteChatAdapter::hidden_states(const prompting::PromptBundle&,
                                                  ExtractionStyle) {
    throw BackendError("remote adapters do not expose hidden states; use an external store");
}

// --- external ----------------------------------------------------------------

ExternalAdapter::ExternalAdapter(std::string name, int layers, int dim, bool images)
    : name_(std::move(name)), layers_(layers), dim_(dim), images_(images) {}

std::vector<std::string> ExternalAdapter::generate(const prompting::PromptBundle&,
                                                   const SamplingParams&) {
    throw BackendError("external adapter " + name_ + " cannot generate in-process");
}

ActivationRecord ExternalAdapter::hidden_states(const prompting::PromptBundle&, ExtractionStyle) {
    throw BackendError("external adapter " + name_ +
                       " serves activations only through a pre-filled store");
}

std::unique_ptr<ModelAdapter> make_random_control(const ModelAdapter& reference, uint64_t seed) {
    if (reference.architecture() != "stub")
        throw BackendError("random control unavailable: architecture '" +
                           reference.architecture() + "' is not instantiable in-process");
    StubOptions opts;
    opts.seed = seed;
    opts.planted = false;
    return std::make_unique<StubAdapter>(opts);
}

// --- activation store ----------------------------------------------------------

std::string StoreKey::canonical() const {
    std::ostringstream ss;
    ss << "model=" << model << ";dataset=" << dataset << ";split=" << split
       << ";modality=" << modality << ";style=" << style << ";shots=" << shots_per_class
       << ";extraction=" << extraction_style << ";renderer=" << renderer_version
       << ";serializer=" << serializer_version;
    return ss.str();
}

std::string StoreKey::hash() const { return util::sha256_hex(canonical()).substr(0, 16); }

namespace {

json key_to_json(const StoreKey& k) {
    return json{{"model", k.model},
                {"dataset", k.dataset},
                {"split", k.split},
                {"modality", k.modality},
                {"style", k.style},
                {"extraction_style", k.extraction_style},
                {"renderer_version", k.renderer_version},
                {"serializer_version", k.serializer_version}};
}

StoreKey key_from_json(const json& j) {
    StoreKey k;
    k.model = j.at("model").get<std::string>();
    k.dataset = j.at("dataset").get<std::string>();
    k.split = j.at("split").get<std::string>();
    k.modality = j.at("modality").get<std::string>();
    k.style = j.at("style").get<std::string>();
    k.extraction_style = j.at("extraction_style").get<std::string>();
    k.renderer_version = j.at("renderer_version").get<std::string>();
    k.serializer_version = j.at("serializer_version").get<std::string>();
    return k;
}

}  // namespace

void ActivationStore::write_meta() const {
    json j;
    j["key"] = key_to_json(key_);
    j["layers"] = num_layers_;
    j["dim"] = dim_;
    j["skips"] = skips_;
    util::atomic_write(dir_ / "meta.json", j.dump(2) + "\n");
}

ActivationStore ActivationStore::create_or_open(const fs::path& root, const StoreKey& key,
                                                int num_layers, int dim) {
    ActivationStore store;
    store.key_ = key;
    store.num_layers_ = num_layers;
    store.dim_ = dim;
    store.style_ = extraction_style_from_string(key.extraction_style);
    store.dir_ = root / key.hash();
    fs::path meta = store.dir_ / "meta.json";
    if (fs::exists(meta)) {
        json j = json::parse(util::read_file(meta));
        StoreKey existing = key_from_json(j.at("key"));
        if (existing.canonical() != key.canonical())
            throw ConfigError("activation store key collision at " + store.dir_.string());
        if (j.at("layers").get<int>() != num_layers || j.at("dim").get<int>() != dim)
            throw ShapeError("activation store shape mismatch: stored (" +
                             std::to_string(j.at("layers").get<int>()) + "," +
                             std::to_string(j.at("dim").get<int>()) + ") vs requested (" +
                             std::to_string(num_layers) + "," + std::to_string(dim) + ")");
        store.skips_ = j.value("skips", std::map<std::string, std::string>{});
        return store;
    }
    fs::create_directories(store.dir_);
    store.write_meta();
    return store;
}

ActivationStore ActivationStore::open(const fs::path& root, const StoreKey& key) {
    fs::path meta = root / key.hash() / "meta.json";
    if (!fs::exists(meta)) throw NotFoundError("activation store not found for key " + key.canonical());
    json j = json::parse(util::read_file(meta));
    return create_or_open(root, key, j.at("layers").get<int>(), j.at("dim").get<int>());
}

bool ActivationStore::has(const std::string& sample_id) const {
    return fs::exists(dir_ / (sample_id + ".f32"));
}

void ActivationStore::put(const ActivationRecord& record) {
    record.validate();
    if (record.num_layers != num_layers_ || record.dim != dim_)
        throw ShapeError("record shape (" + std::to_string(record.num_layers) + "," +
                         std::to_string(record.dim) + ") does not match store (" +
                         std::to_string(num_layers_) + "," + std::to_string(dim_) + ")");
    if (to_string(record.style) != key_.extraction_style)
        throw ConfigError("record extraction style does not match store key");
    fs::path path = dir_ / (record.sample_id + ".f32");
    if (fs::exists(path)) return;  // append-only
    util::write_f32_blob(path, record.matrix);
    if (skips_.erase(record.sample_id) > 0) write_meta();
}

ActivationRecord ActivationStore::get(const std::string& sample_id) const {
    fs::path path = dir_ / (sample_id + ".f32");
    if (!fs::exists(path)) throw NotFoundError("no activation record for " + sample_id);
    ActivationRecord rec;
    rec.sample_id = sample_id;
    rec.num_layers = num_layers_;
    rec.dim = dim_;
    rec.style = style_;
    rec.matrix = util::read_f32_blob(path);
    if (rec.matrix.size() != static_cast<size_t>(num_layers_ + 1) * dim_)
        throw CorruptStoreError("activation record has wrong size: " + path.string());
    return rec;
}

std::vector<std::string> ActivationStore::ids() const {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (entry.path().extension() == ".f32") out.push_back(entry.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void ActivationStore::add_skip(const std::string& sample_id, const std::string& reason) {
    skips_[sample_id] = reason;
    write_meta();
}

std::vector<float> ActivationStore::layer_matrix(int layer_index,
                                                 const std::vector<std::string>& sample_ids) const {
    if (layer_index < 0 || layer_index > num_layers_)
        throw ShapeError("layer index out of range: " + std::to_string(layer_index));
    std::vector<float> out;
    out.reserve(sample_ids.size() * static_cast<size_t>(dim_));
    for (const auto& id : sample_ids) {
        ActivationRecord rec = get(id);
        const float* row = rec.layer(layer_index);
        out.insert(out.end(), row, row + dim_);
    }
    return out;
}

// --- extraction ------------------------------------------------------------------

StoreKey make_store_key(const std::string& model_name, const std::string& dataset_id,
                        dataset::Split split, represent::ModalityKind modality,
                        prompting::PromptStyle style, int shots_per_class,
                        ExtractionStyle extraction,
                        const represent::SerializationConfig& serial_config) {
    StoreKey key;
    key.model = model_name;
    key.dataset = dataset_id;
    key.split = dataset::to_string(split);
    key.modality = represent::to_string(modality);
    key.style = prompting::to_string(style);
    key.shots_per_class = shots_per_class;
    key.extraction_style = to_string(extraction);
    key.renderer_version = represent::kRendererVersion;
    key.serializer_version = serial_config.version_tag();
    return key;
}

ExtractStats extract_dataset(const dataset::TimeSeriesDataset& data,
                             const prompting::PromptTemplate& tmpl, ModelAdapter& adapter,
                             ActivationStore& store, const ExtractJob& job,
                             const std::vector<prompting::ShotExample>& shots) {
    StoreKey expected = make_store_key(adapter.name(), data.id, data.split, job.modality,
                                       tmpl.style, tmpl.shots_per_class, job.extraction_style,
                                       job.serial_config);
    if (expected.canonical() != store.key().canonical())
        throw ConfigError("activation store key does not match extraction arguments:\n  store: " +
                          store.key().canonical() + "\n  args:  " + expected.canonical());
    if (!adapter.supports_hidden_states())
        throw BackendError("adapter " + adapter.name() + " does not expose hidden states");

    represent::RenderConfig render = job.render_config;
    render.style = data.render_style;

    ExtractStats stats;
    for (int i = 0; i < data.num_samples; ++i) {
        const std::string& id = data.sample_ids[static_cast<size_t>(i)];
        if (store.has(id)) {
            ++stats.reused;
            continue;
        }
        try {
            std::vector<float> sample = data.sample_copy(i);
            if (job.normalize_per_channel)
                sample = represent::normalize_per_channel(sample, data.num_channels, data.length);
            auto rep = represent::build_representation(sample, data.num_channels, data.length,
                                                       job.modality, job.serial_config, render,
                                                       data.channel_names);
            auto bundle = prompting::assemble_prompt(rep, tmpl, id, shots);
            ActivationRecord rec = adapter.hidden_states(bundle, job.extraction_style);
            rec.sample_id = id;
            store.put(rec);
            ++stats.extracted;
        } catch (const ContextLengthError& e) {
            store.add_skip(id, e.what());
            ++stats.skipped;
        } catch (const BackendError& e) {
            store.add_skip(id, e.what());
            ++stats.skipped;
        }
    }
    if (stats.skipped > job.max_skip_fraction * data.num_samples)
        throw Error("extraction aborted: " + std::to_string(stats.skipped) + "/" +
                    std::to_string(data.num_samples) + " samples skipped (threshold " +
                    util::fmt_double(job.max_skip_fraction) + ")");
    return stats;
}

}  // namespace tsprobe::model_bridge
