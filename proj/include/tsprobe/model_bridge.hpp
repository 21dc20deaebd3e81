#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsprobe/chat_client.hpp"
#include "tsprobe/prompting.hpp"

namespace tsprobe::model_bridge {

enum class ExtractionStyle { prefill_last_token, post_cot_last_token };

std::string to_string(ExtractionStyle s);
ExtractionStyle extraction_style_from_string(const std::string& s);

struct SamplingParams {
    double temperature = 0.0;
    double top_p = 0.95;  // nucleus, (0, 1]
    int max_new_tokens = 256;
    int64_t seed = 0;
    int num_samples = 1;  // n independent generations; n > 1 requires temperature > 0

    void validate() const;
};

/// Per-layer final-token vectors for one sample: (L+1) rows x D cols,
/// row 0 = embedding output, rows 1..L = transformer block outputs.
struct ActivationRecord {
    std::string sample_id;
    std::string prompt_hash;
    int num_layers = 0;  // L
    int dim = 0;         // D
    std::vector<float> matrix;  // (L+1)*D row-major
    ExtractionStyle style = ExtractionStyle::prefill_last_token;

    const float* layer(int layer_index) const {
        return matrix.data() + static_cast<size_t>(layer_index) * dim;
    }
    void validate() const;
};

/// Behavioral contract every backend satisfies. One instance serves requests
/// sequentially.
class ModelAdapter {
public:
    virtual ~ModelAdapter() = default;
    virtual std::string name() const = 0;
    virtual std::string architecture() const = 0;
    virtual int num_layers() const = 0;  // L
    virtual int hidden_dim() const = 0;  // D
    virtual bool supports_images() const = 0;
    virtual bool supports_hidden_states() const = 0;

    virtual std::vector<std::string> generate(const prompting::PromptBundle& bundle,
                                              const SamplingParams& params) = 0;
    virtual ActivationRecord hidden_states(const prompting::PromptBundle& bundle,
                                           ExtractionStyle style) = 0;
};

// --- deterministic stub backend -------------------------------------------

enum class StubAnswerMode { prompt_hash, fixed_letter };

struct StubOptions {
    uint64_t seed = 0;
    StubAnswerMode answer_mode = StubAnswerMode::prompt_hash;
    char fixed_letter = 'A';
    size_t max_context_chars = 1u << 20;
    /// planted=true: layer 1 linearly encodes content statistics of the
    /// input payload (digits or plot pixels); other layers are hash noise.
    /// planted=false: every layer is seeded hash noise (random-weight control).
    bool planted = true;
};

/// Hash-based "model" with L=2, D=8 used by the tests and the desk-scale
/// pipeline runs. Entirely deterministic given (options, bundle).
class StubAdapter : public ModelAdapter {
public:
    static constexpr int kLayers = 2;
    static constexpr int kDim = 8;

    explicit StubAdapter(StubOptions options = {});

    std::string name() const override;
    std::string architecture() const override { return "stub"; }
    int num_layers() const override { return kLayers; }
    int hidden_dim() const override { return kDim; }
    bool supports_images() const override { return true; }
    bool supports_hidden_states() const override { return true; }

    std::vector<std::string> generate(const prompting::PromptBundle& bundle,
                                      const SamplingParams& params) override;
    ActivationRecord hidden_states(const prompting::PromptBundle& bundle,
                                   ExtractionStyle style) override;

    // exposed so tests can recompute expected values independently
    std::string reasoning_text(const prompting::PromptBundle& bundle) const;
    std::vector<float> content_features(const prompting::PromptBundle& bundle) const;

    const StubOptions& options() const { return options_; }

private:
    StubOptions options_;
};

/// Generation-only adapter over an OpenAI-compatible endpoint. Hidden states
/// are unavailable by construction (closed serving interface).
class RemoteChatAdapter : public ModelAdapter {
public:
    RemoteChatAdapter(chat::HttpChatOptions options, bool images_supported, int context_chars);

    std::string name() const override { return options_.model; }
    std::string architecture() const override { return "remote"; }
    int num_layers() const override { return 0; }
    int hidden_dim() const override { return 0; }
    bool supports_images() const override { return images_supported_; }
    bool supports_hidden_states() const override { return false; }

    std::vector<std::string> generate(const prompting::PromptBundle& bundle,
                                      const SamplingParams& params) override;
    ActivationRecord hidden_states(const prompting::PromptBundle&, ExtractionStyle) override;

private:
    chat::HttpChatOptions options_;
    bool images_supported_;
    int context_chars_;
};

/// Store-backed adapter for models whose activations were produced outside
/// this process (e.g. a Python extraction script writing the store layout).
/// Probing reads the store directly; generate/hidden_states are unavailable.
class ExternalAdapter : public ModelAdapter {
public:
    ExternalAdapter(std::string name, int layers, int dim, bool images);

    std::string name() const override { return name_; }
    std::string architecture() const override { return "external"; }
    int num_layers() const override { return layers_; }
    int hidden_dim() const override { return dim_; }
    bool supports_images() const override { return images_; }
    bool supports_hidden_states() const override { return false; }

    std::vector<std::string> generate(const prompting::PromptBundle&,
                                      const SamplingParams&) override;
    ActivationRecord hidden_states(const prompting::PromptBundle&, ExtractionStyle) override;

private:
    std::string name_;
    int layers_, dim_;
    bool images_;
};

/// Same architecture and shape as the reference, freshly initialized from
/// `seed`; never loads trained parameters. Only instantiable architectures
/// (currently the stub) are supported.
std::unique_ptr<ModelAdapter> make_random_control(const ModelAdapter& reference, uint64_t seed);

// --- activation store -------------------------------------------------------

struct StoreKey {
    std::string model;
    std::string dataset;
    std::string split;
    std::string modality;
    std::string style;  // prompt style
    int shots_per_class = 0;
    std::string extraction_style;
    std::string renderer_version;
    std::string serializer_version;

    std::string canonical() const;
    std::string hash() const;  // directory name under the store root
};

/// One directory per key: meta.json plus one little-endian float32 blob per
/// sample (row-major (L+1) x D). Append-only: existing record bytes are never
/// rewritten.
class ActivationStore {
public:
    static ActivationStore create_or_open(const std::filesystem::path& root, const StoreKey& key,
                                          int num_layers, int dim);
    static ActivationStore open(const std::filesystem::path& root, const StoreKey& key);

    const StoreKey& key() const { return key_; }
    int num_layers() const { return num_layers_; }
    int dim() const { return dim_; }
    const std::filesystem::path& dir() const { return dir_; }

    bool has(const std::string& sample_id) const;
    /// No-op when the record already exists (append-only contract).
    void put(const ActivationRecord& record);
    ActivationRecord get(const std::string& sample_id) const;
    std::vector<std::string> ids() const;

    void add_skip(const std::string& sample_id, const std::string& reason);
    const std::map<std::string, std::string>& skips() const { return skips_; }

    /// N x D row-major block for one layer over the given sample ids.
    std::vector<float> layer_matrix(int layer_index, const std::vector<std::string>& ids) const;

private:
    ActivationStore() = default;
    void write_meta() const;

    StoreKey key_;
    int num_layers_ = 0;
    int dim_ = 0;
    std::filesystem::path dir_;
    std::map<std::string, std::string> skips_;
    ExtractionStyle style_ = ExtractionStyle::prefill_last_token;
};

struct ExtractStats {
    int extracted = 0;
    int reused = 0;
    int skipped = 0;
};

struct ExtractJob {
    represent::ModalityKind modality = represent::ModalityKind::d;
    represent::SerializationConfig serial_config;
    represent::RenderConfig render_config;
    ExtractionStyle extraction_style = ExtractionStyle::prefill_last_token;
    double max_skip_fraction = 0.1;
    bool normalize_per_channel = false;
};

/// Resumable per-sample extraction: records already in the store are not
/// recomputed; per-sample context/backend failures land on the skip list.
/// Throws when more than max_skip_fraction of the split is skipped.
/// `shots` (train-split examples) are prepended to every prompt when the
/// template asks for them.
ExtractStats extract_dataset(const dataset::TimeSeriesDataset& data,
                             const prompting::PromptTemplate& tmpl, ModelAdapter& adapter,
                             ActivationStore& store, const ExtractJob& job,
                             const std::vector<prompting::ShotExample>& shots = {});

/// The store key a given (model, dataset, modality, style, shots) cell
/// resolves to.
StoreKey make_store_key(const std::string& model_name, const std::string& dataset_id,
                        dataset::Split split, represent::ModalityKind modality,
                        prompting::PromptStyle style, int shots_per_class,
                        ExtractionStyle extraction,
                        const represent::SerializationConfig& serial_config);

}  // namespace tsprobe::model_bridge
