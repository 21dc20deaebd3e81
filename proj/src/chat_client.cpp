#include "tsprobe/chat_client.hpp"

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "tsprobe/errors.hpp"
#include "tsprobe/util.hpp"

// httplib spawns threads for its server side only; the client here is blocking
#include <httplib.h>

using nlohmann::json;

namespace tsprobe::chat {

std::string base64_encode(const uint8_t* data, size_t len) {
    return util::base64_encode(data, len);
}

std::string build_chat_request_body(const HttpChatOptions& options, const std::string& system_text,
                                    const std::string& user_text,
                                    const std::vector<std::vector<uint8_t>>& images,
                                    int num_choices) {
    json body;
    body["model"] = options.model;
    body["temperature"] = options.temperature;
    body["top_p"] = options.top_p;
    body["max_tokens"] = options.max_tokens;
    if (num_choices > 1) body["n"] = num_choices;
    if (options.seed) body["seed"] = *options.seed;

    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", system_text}});
    if (images.empty()) {
        messages.push_back({{"role", "user"}, {"content", user_text}});
    } else {
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", user_text}});
        for (const auto& img : images) {
            parts.push_back(
                {{"type", "image_url"},
                 {"image_url",
                  {{"url", "data:image/png;base64," + base64_encode(img.data(), img.size())}}}});
        }
        messages.push_back({{"role", "user"}, {"content", parts}});
    }
    body["messages"] = messages;
    return body.dump();
}

std::vector<std::string> parse_chat_response_body(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw BackendError(std::string("chat response is not JSON: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
        throw BackendError("chat response has no choices");
    std::vector<std::string> out;
    for (const auto& choice : j["choices"]) {
        const auto& msg = choice.at("message");
        out.push_back(msg.at("content").is_null() ? std::string()
                                                  : msg.at("content").get<std::string>());
    }
    return out;
}

HttpChatClient::HttpChatClient(HttpChatOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw ConfigError("chat client: base_url is empty");
}

std::vector<std::string> HttpChatClient::complete_multi(
    const std::string& system_text, const std::string& user_text,
    const std::vector<std::vector<uint8_t>>& images, double temperature, double top_p,
    int max_tokens, std::optional<int64_t> seed, int num_choices) {
    HttpChatOptions opts = options_;
    opts.temperature = temperature;
    opts.top_p = top_p;
    opts.max_tokens = max_tokens;
    opts.seed = seed;
    std::string body = build_chat_request_body(opts, system_text, user_text, images, num_choices);

    httplib::Client client(options_.base_url);
    client.set_read_timeout(options_.timeout_seconds, 0);
    client.set_write_timeout(options_.timeout_seconds, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = client.Post(options_.path, headers, body, "application/json");
    if (!res)
        throw BackendError("chat request failed: " + httplib::to_string(res.error()));
    if (res->status == 413 || res->status == 400) {
        // servers signal context overflow either way; surface it distinctly
        if (res->body.find("context") != std::string::npos ||
            res->body.find("maximum") != std::string::npos)
            throw ContextLengthError("chat request rejected for context length: " + res->body);
    }
    if (res->status != 200)
        throw BackendError("chat request HTTP " + std::to_string(res->status) + ": " + res->body);
    return parse_chat_response_body(res->body);
}

std::string HttpChatClient::complete(const std::string& system_prompt,
                                     const std::string& user_message) {
    auto choices = complete_multi(system_prompt, user_message, {}, options_.temperature,
                                  options_.top_p, options_.max_tokens, options_.seed, 1);
    return choices.front();
}

}  // namespace tsprobe::chat
