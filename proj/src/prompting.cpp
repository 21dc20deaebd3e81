#include "tsprobe/prompting.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>

#include "tsprobe/errors.hpp"
#include "tsprobe/minitoml.hpp"
#include "tsprobe/util.hpp"

using nlohmann::json;

namespace tsprobe::prompting {

const char* kFormatRequirement = "The answer is [X] CLASS_NAME";
const char* kFormatExample = "The answer is [D] CABBAGE";

static const char* kDirectInstruction =
    "You will be given a multiple choice question and a time series. Your job is to use the "
    "time series to answer the question. Do not explain your reasoning.";
static const char* kCotInstruction =
    "You will be given a multiple choice question and a time series. Your job is to use the "
    "time series to answer the question. Briefly reason step by step, then end your response "
    "with the required answer line.";

std::string to_string(PromptStyle s) { return s == PromptStyle::direct ? "direct" : "cot"; }
std::string to_string(VariantTarget t) {
    return t == VariantTarget::system ? "system" : "question";
}

PromptStyle style_from_string(const std::string& s) {
    if (s == "direct") return PromptStyle::direct;
    if (s == "cot") return PromptStyle::cot;
    throw ConfigError("unknown prompt style: " + s);
}

VariantTarget target_from_string(const std::string& s) {
    if (s == "system") return VariantTarget::system;
    if (s == "question") return VariantTarget::question;
    throw ConfigError("unknown variant target: " + s);
}

void PromptTemplate::validate() const {
    if (options.empty()) throw ConfigError("template has no options");
    for (size_t i = 0; i < options.size(); ++i) {
        if (options[i].first != static_cast<char>('A' + i))
            throw ConfigError("option letters must be A.. in order");
        if (options[i].second.empty()) throw ConfigError("empty class name in options");
    }
    if (shots_per_class < 0) throw ConfigError("shots_per_class must be >= 0");
}

std::string PromptTemplate::hash() const {
    std::ostringstream ss;
    ss << dataset_id << '\x1f' << task_description << '\x1f' << question << '\x1f';
    for (const auto& h : hints) ss << h << '\x1e';
    ss << '\x1f';
    for (const auto& [letter, name] : options) ss << letter << name << '\x1e';
    ss << '\x1f' << to_string(style) << '\x1f' << shots_per_class;
    return util::sha256_hex(ss.str());
}

std::string PromptTemplate::render_system_text() const {
    std::ostringstream ss;
    ss << task_description << "\n\n";
    ss << (style == PromptStyle::cot ? kCotInstruction : kDirectInstruction) << "\n";
    ss << "Use exactly this format: " << kFormatRequirement << "\n";
    ss << "Example: " << kFormatExample << "\n";
    if (!hints.empty()) {
        ss << "\nAdditional information that may help:\n";
        for (const auto& h : hints) ss << "- " << h << "\n";
    }
    return ss.str();
}

PromptTemplate load_template_file(const std::string& path) {
    auto t = minitoml::Table::parse_file(path);
    PromptTemplate tmpl;
    tmpl.dataset_id = t.get_string_or("dataset", "");
    tmpl.task_description = t.get_string("task_description");
    tmpl.question = t.get_string("question");
    tmpl.hints = t.get_string_array_or("hints");
    tmpl.style = style_from_string(t.get_string_or("style", "direct"));
    tmpl.shots_per_class = static_cast<int>(t.get_int_or("shots_per_class", 0));
    return tmpl;
}

std::string PromptBundle::prompt_hash() const {
    uint64_t h = util::stable_hash(system_text);
    h = util::stable_hash(user_text, h);
    for (const auto& img : images) h = util::stable_hash(img.data(), img.size(), h);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

std::string payload_block(const represent::Representation& rep) {
    switch (rep.modality) {
        case represent::ModalityKind::d:
            return "Time series:\n" + *rep.text + "\n";
        case represent::ModalityKind::v:
            return "Time series: (see attached plot)\n";
        case represent::ModalityKind::d_plus_v:
            return "Time series (plot attached):\n" + *rep.text + "\n";
    }
    return "";
}

}  // namespace

PromptBundle assemble_prompt(const represent::Representation& representation,
                             const PromptTemplate& tmpl, const std::string& sample_id,
                             const std::vector<ShotExample>& shot_examples,
                             const std::optional<std::string>& system_override,
                             const std::optional<std::string>& question_override) {
    tmpl.validate();
    if (!representation.invariants_hold())
        throw AssemblyError("representation does not satisfy modality invariants");
    const int num_classes = static_cast<int>(tmpl.options.size());
    if (tmpl.shots_per_class > 0) {
        const size_t expected = static_cast<size_t>(tmpl.shots_per_class) * num_classes;
        if (shot_examples.size() != expected)
            throw AssemblyError("expected " + std::to_string(expected) + " shot examples, got " +
                                std::to_string(shot_examples.size()));
    } else if (!shot_examples.empty()) {
        throw AssemblyError("shot examples given but shots_per_class is 0");
    }
    for (const auto& shot : shot_examples) {
        if (shot.from_split != dataset::Split::train)
            throw LeakageError("shot example " + shot.sample_id + " is not from the train split");
        if (shot.representation.modality != representation.modality)
            throw AssemblyError("shot example modality differs from query modality");
        if (!shot.representation.invariants_hold())
            throw AssemblyError("shot representation does not satisfy modality invariants");
    }

    PromptBundle bundle;
    bundle.system_text = system_override ? *system_override : tmpl.render_system_text();
    bundle.answer_schema = tmpl.options;
    bundle.dataset_id = tmpl.dataset_id;
    bundle.sample_id = sample_id;
    bundle.modality = representation.modality;
    bundle.template_hash = tmpl.hash();

    std::ostringstream user;
    user << "Dataset: " << tmpl.dataset_id << "\n\n";
    user << "Question: " << (question_override ? *question_override : tmpl.question) << "\n\n";
    user << "Options:\n";
    for (const auto& [letter, name] : tmpl.options)
        user << "[" << letter << "] " << name << "\n";
    user << "\n";

    int shot_no = 0;
    for (const auto& shot : shot_examples) {
        ++shot_no;
        user << "Example " << shot_no << ":\n" << payload_block(shot.representation);
        const auto& [letter, name] = tmpl.options[static_cast<size_t>(shot.label - 1)];
        user << "The answer is [" << letter << "] " << name << "\n\n";
        for (const auto& img : shot.representation.images) bundle.images.push_back(img);
    }

    user << payload_block(representation);
    user << "\nOutput format requirement: " << kFormatRequirement << "\n";
    bundle.user_text = user.str();
    for (const auto& img : representation.images) bundle.images.push_back(img);
    return bundle;
}

int ParsedAnswer::class_index(const std::vector<std::pair<char, std::string>>& schema) const {
    if (!letter) return 0;
    for (size_t i = 0; i < schema.size(); ++i)
        if (schema[i].first == *letter) return static_cast<int>(i) + 1;
    return 0;
}

ParsedAnswer parse_answer(const std::string& raw,
                          const std::vector<std::pair<char, std::string>>& schema) {
    ParsedAnswer out;
    out.raw_text = raw;
    static const std::regex pattern(R"(answer\s+is\s*\[\s*([A-Za-z])\s*\])",
                                    std::regex::icase | std::regex::optimize);
    std::optional<char> last;
    for (auto it = std::sregex_iterator(raw.begin(), raw.end(), pattern);
         it != std::sregex_iterator(); ++it) {
        last = static_cast<char>(std::toupper(static_cast<unsigned char>((*it)[1].str()[0])));
    }
    if (!last) return out;
    for (const auto& [letter, name] : schema) {
        if (letter == *last) {
            out.letter = *last;
            return out;
        }
    }
    return out;  // letter outside schema -> FAILURE
}

namespace {

std::vector<size_t> bracket_positions(const std::string& text, char letter) {
    std::vector<size_t> out;
    std::string needle = std::string("[") + letter + "]";
    size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        out.push_back(pos);
        ++pos;
    }
    return out;
}

std::vector<char> bracketed_letters(const std::string& text) {
    std::vector<char> out;
    for (size_t i = 0; i + 2 < text.size(); ++i) {
        if (text[i] == '[' && text[i + 2] == ']' &&
            std::isupper(static_cast<unsigned char>(text[i + 1]))) {
            if (std::find(out.begin(), out.end(), text[i + 1]) == out.end())
                out.push_back(text[i + 1]);
        }
    }
    return out;
}

}  // namespace

std::vector<VariantViolation> validate_variant(const std::string& variant_text,
                                               const PromptTemplate& base,
                                               VariantTarget target) {
    std::vector<VariantViolation> violations;
    const std::string base_text =
        target == VariantTarget::system ? base.render_system_text() : base.question;

    // (1) class names that the base mentions must survive verbatim
    for (const auto& [letter, name] : base.options) {
        if (base_text.find(name) == std::string::npos) continue;
        if (variant_text.find(name) == std::string::npos)
            violations.push_back({1, "class name dropped: " + name});
    }

    // (2) option letters present in the base keep their original order
    size_t last_pos = 0;
    bool have_prev = false;
    for (const auto& [letter, name] : base.options) {
        if (bracket_positions(base_text, letter).empty()) continue;
        auto positions = bracket_positions(variant_text, letter);
        if (positions.empty()) {
            violations.push_back({2, std::string("option letter missing: [") + letter + "]"});
            continue;
        }
        if (have_prev && positions.front() < last_pos)
            violations.push_back({2, std::string("option letter out of order: [") + letter + "]"});
        last_pos = positions.front();
        have_prev = true;
    }

    // (3) system targets must carry the format requirement verbatim
    if (target == VariantTarget::system &&
        variant_text.find(kFormatRequirement) == std::string::npos)
        violations.push_back({3, std::string("format requirement missing: ") + kFormatRequirement});

    // (4) no bracketed letters beyond base/schema
    auto base_letters = bracketed_letters(base_text);
    for (char c : bracketed_letters(variant_text)) {
        bool in_base = std::find(base_letters.begin(), base_letters.end(), c) != base_letters.end();
        bool in_schema = false;
        for (const auto& [letter, name] : base.options) in_schema |= (letter == c);
        if (!in_base && !in_schema && c != 'X')
            violations.push_back({4, std::string("new option letter introduced: [") + c + "]"});
    }
    return violations;
}

std::string VariantSet::to_json() const {
    json j;
    j["base_template_hash"] = base_template_hash;
    j["target"] = prompting::to_string(target);
    j["variants"] = json::array();
    for (const auto& v : variants) j["variants"].push_back({{"id", v.id}, {"text", v.text}});
    return j.dump(2) + "\n";
}

VariantSet VariantSet::from_json(const std::string& text) {
    json j = json::parse(text);
    VariantSet vs;
    vs.base_template_hash = j.at("base_template_hash").get<std::string>();
    vs.target = target_from_string(j.at("target").get<std::string>());
    for (const auto& item : j.at("variants"))
        vs.variants.push_back({item.at("id").get<int>(), item.at("text").get<std::string>()});
    return vs;
}

std::string rewriter_system_prompt(VariantTarget target, int batch_size) {
    std::ostringstream ss;
    if (target == VariantTarget::system) {
        ss << "You are a prompt rewriter.\n\n"
           << "Rewrite the provided SYSTEM PROMPT into " << batch_size
           << " distinct SYSTEM PROMPT variants that preserve meaning, constraints, and all "
              "factual task content, while changing phrasing, structure, and formatting.\n\n"
           << "Hard constraints (must obey):\n"
           << "- Do NOT add, remove, rename, or reorder any class names.\n"
           << "- Do NOT alter the semantic meaning of any class description.\n"
           << "- Preserve answer-choice letters (e.g., [A], [B]) exactly and in order.\n"
           << "- Preserve required output format strings exactly (punctuation/casing), e.g., "
              "\"The answer is [X] CLASS_NAME\".\n"
           << "- Do NOT introduce new task instructions (e.g., reasoning, confidence).\n"
           << "- Maintain an academically appropriate tone.\n\n"
           << "Diversity requirements:\n"
           << "- Each variant must differ meaningfully in organization and wording.\n"
           << "- Use multiple presentation styles (headings, bullets, numbered steps, etc.).\n"
           << "- Avoid trivial paraphrases.\n\n"
           << "Output format (strict): return valid JSON only:\n"
           << "{\n  \"variants\": [\n    {\"id\": 1, \"system_prompt\": \"...\"},\n"
           << "    {\"id\": 2, \"system_prompt\": \"...\"}\n  ]\n}\n"
           << "No extra keys. No markdown. No commentary.\n";
    } else {
        ss << "You are a question rewriter.\n\n"
           << "Your task is to rewrite a GENERAL QUESTION into " << batch_size
           << " distinct variants that preserve the task, label space, and decision criteria, "
              "while changing wording, structure, and phrasing.\n\n"
           << "Hard constraints (must obey):\n"
           << "- Do NOT change, rename, remove, or reorder answer choices.\n"
           << "- Preserve answer-choice letters exactly (e.g., [A], [B]) and their order.\n"
           << "- Do NOT introduce new labels, hints, or constraints.\n"
           << "- Do NOT add explanations, reasoning instructions, or output formatting rules.\n"
           << "- The rewritten question must ask the same classification decision.\n\n"
           << "Diversity requirements:\n"
           << "- Each variant must differ meaningfully in wording and structure.\n"
           << "- Vary tone (instructional vs. role-based), sentence structure, and framing.\n"
           << "- Avoid trivial paraphrases.\n\n"
           << "Output format (strict): return valid JSON only:\n"
           << "{\n  \"variants\": [\n    {\"id\": 1, \"question\": \"...\"},\n"
           << "    {\"id\": 2, \"question\": \"...\"}\n  ]\n}\n"
           << "No extra keys. No markdown. No commentary.\n";
    }
    return ss.str();
}

std::string rewriter_user_message(VariantTarget target, int batch_size,
                                  const std::string& base_text) {
    std::ostringstream ss;
    ss << "Generate " << batch_size << " rewritten variants of the following.\n\n";
    if (target == VariantTarget::system) {
        ss << "IMPORTANT:\n"
           << "- Do NOT change class names.\n"
           << "- Do NOT change answer letters or their order.\n"
           << "- Do NOT change the required answer format.\n"
           << "- Output must be valid JSON only.\n\n";
    } else {
        ss << "IMPORTANT:\n"
           << "- Do NOT change the answer choice letters, names, or their order.\n"
           << "- Do NOT add output formatting rules.\n"
           << "- Do NOT add reasoning/explanation instructions.\n"
           << "- Output must be valid JSON only.\n\n";
    }
    ss << base_text;
    return ss.str();
}

namespace {

std::vector<std::string> parse_rewriter_envelope(const std::string& body, VariantTarget target,
                                                 int expected_count) {
    const std::string content_key =
        target == VariantTarget::system ? "system_prompt" : "question";
    std::string trimmed = util::trim(body);
    if (util::starts_with(trimmed, "```"))
        throw RewriterFormatError("rewriter response wrapped in markdown fences");
    json j;
    try {
        j = json::parse(trimmed);
    } catch (const json::parse_error& e) {
        throw RewriterFormatError(std::string("rewriter response is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("variants") || !j["variants"].is_array())
        throw RewriterFormatError("rewriter response missing \"variants\" array");
    std::vector<std::string> out;
    for (const auto& item : j["variants"]) {
        if (!item.is_object() || !item.contains("id") || !item.contains(content_key))
            throw RewriterFormatError("rewriter variant entry missing id/" + content_key);
        out.push_back(item.at(content_key).get<std::string>());
    }
    if (static_cast<int>(out.size()) != expected_count)
        throw RewriterFormatError("rewriter returned " + std::to_string(out.size()) +
                                  " variants, expected " + std::to_string(expected_count));
    return out;
}

}  // namespace

VariantSet generate_variants(const PromptTemplate& base, VariantTarget target,
                             ChatClient& rewriter, const RewriterOptions& options) {
    base.validate();
    if (options.total_n < 1 || options.batch_b < 1 || options.total_n % options.batch_b != 0)
        throw ConfigError("total_n must be a positive multiple of batch_b");
    const std::string base_text =
        target == VariantTarget::system ? base.render_system_text() : base.question;
    const std::string system_prompt = rewriter_system_prompt(target, options.batch_b);
    const std::string user_message = rewriter_user_message(target, options.batch_b, base_text);

    VariantSet vs;
    vs.base_template_hash = base.hash();
    vs.target = target;
    const int batches = options.total_n / options.batch_b;
    for (int b = 0; b < batches; ++b) {
        std::vector<std::string> texts;
        int attempts = 0;
        for (;;) {
            try {
                std::string body = rewriter.complete(system_prompt, user_message);
                texts = parse_rewriter_envelope(body, target, options.batch_b);
                break;
            } catch (const RewriterFormatError&) {
                if (++attempts > options.retry_limit) throw;
            }
        }
        for (auto& text : texts) {
            auto violations = validate_variant(text, base, target);
            if (!violations.empty())
                throw VariantRejectedError("variant rejected (check " +
                                           std::to_string(violations.front().check) +
                                           "): " + violations.front().message);
            // ids renumbered globally across batches
            vs.variants.push_back({static_cast<int>(vs.variants.size()) + 1, std::move(text)});
        }
    }
    return vs;
}

}  // namespace tsprobe::prompting
