#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsprobe/represent.hpp"

namespace tsprobe::prompting {

/// The exact answer-line format every prompt demands.
extern const char* kFormatRequirement;  // "The answer is [X] CLASS_NAME"
extern const char* kFormatExample;      // "The answer is [D] CABBAGE"

enum class PromptStyle { direct, cot };
enum class VariantTarget { system, question };

std::string to_string(PromptStyle s);
std::string to_string(VariantTarget t);
PromptStyle style_from_string(const std::string& s);
VariantTarget target_from_string(const std::string& s);

struct PromptTemplate {
    std::string dataset_id;
    std::string task_description;  // tau
    std::string question;          // q
    std::vector<std::string> hints;
    std::vector<std::pair<char, std::string>> options;  // (letter, class name), A.. in order
    PromptStyle style = PromptStyle::direct;
    int shots_per_class = 0;

    void validate() const;
    std::string hash() const;

    /// The base system prompt this template renders (what a system-target
    /// rewriter receives).
    std::string render_system_text() const;
};

/// Load template fields from a TOML-like file; options are bound from the
/// dataset class list by the caller.
PromptTemplate load_template_file(const std::string& path);

struct ShotExample {
    represent::Representation representation;
    int label = 0;  // 1-based
    std::string sample_id;
    dataset::Split from_split = dataset::Split::train;
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    std::vector<std::vector<uint8_t>> images;
    std::vector<std::pair<char, std::string>> answer_schema;
    // provenance
    std::string dataset_id;
    std::string sample_id;
    represent::ModalityKind modality = represent::ModalityKind::d;
    std::string template_hash;

    /// Stable content hash over both texts and all image bytes.
    std::string prompt_hash() const;
};

PromptBundle assemble_prompt(const represent::Representation& representation,
                             const PromptTemplate& tmpl, const std::string& sample_id,
                             const std::vector<ShotExample>& shot_examples = {},
                             const std::optional<std::string>& system_override = std::nullopt,
                             const std::optional<std::string>& question_override = std::nullopt);

struct ParsedAnswer {
    std::optional<char> letter;  // nullopt = FAILURE
    std::string raw_text;

    bool failed() const { return !letter.has_value(); }
    /// 1-based class index in the schema, or metrics::kFailure (0).
    int class_index(const std::vector<std::pair<char, std::string>>& schema) const;
};

/// Total function: extracts the LAST `answer is [<letter>]` occurrence,
/// case-insensitively; unmatched or non-schema letters yield FAILURE.
ParsedAnswer parse_answer(const std::string& raw,
                          const std::vector<std::pair<char, std::string>>& schema);

struct VariantViolation {
    int check = 0;  // 1..4, order of the validation checks
    std::string message;
};

/// Meaning-preservation checks against the base template, in order:
/// (1) class names appearing in the base text remain verbatim,
/// (2) bracketed option letters of the base keep their order,
/// (3) system targets keep the format requirement verbatim,
/// (4) no bracketed letters beyond base/schema are introduced.
std::vector<VariantViolation> validate_variant(const std::string& variant_text,
                                               const PromptTemplate& base,
                                               VariantTarget target);

struct Variant {
    int id = 0;  // 1..N, globally renumbered
    std::string text;
};

struct VariantSet {
    std::string base_template_hash;
    VariantTarget target = VariantTarget::system;
    std::vector<Variant> variants;

    std::string to_json() const;
    static VariantSet from_json(const std::string& text);
};

/// Chat-completion transport used by the variant rewriter (and mocks).
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string complete(const std::string& system_prompt,
                                 const std::string& user_message) = 0;
};

struct RewriterOptions {
    int total_n = 10;
    int batch_b = 5;
    int retry_limit = 2;  // retries per batch on format errors
};

/// Issues total_n/batch_b rewriter calls, parses the strict JSON envelope
/// {"variants":[{"id":..,"system_prompt"|"question":..}]}, renumbers ids
/// globally, and validates every variant against the base template.
VariantSet generate_variants(const PromptTemplate& base, VariantTarget target,
                             ChatClient& rewriter, const RewriterOptions& options = {});

/// The rewriter request payloads for one batch (exposed for tests and for
/// offline inspection of the wire format).
std::string rewriter_system_prompt(VariantTarget target, int batch_size);
std::string rewriter_user_message(VariantTarget target, int batch_size,
                                  const std::string& base_text);

}  // namespace tsprobe::prompting
