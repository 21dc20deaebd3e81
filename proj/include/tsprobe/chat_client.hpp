#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsprobe/prompting.hpp"

namespace tsprobe::chat {

std::string base64_encode(const uint8_t* data, size_t len);

struct HttpChatOptions {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env = "TSPROBE_API_KEY";
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 1024;
    int timeout_seconds = 120;
    std::optional<int64_t> seed;
};

/// Chat request with an optional image part per attached PNG (sent as a
/// base64 data URL, OpenAI image_url content style).
std::string build_chat_request_body(const HttpChatOptions& options, const std::string& system_text,
                                    const std::string& user_text,
                                    const std::vector<std::vector<uint8_t>>& images,
                                    int num_choices = 1);

/// Extracts choices[i].message.content for all choices.
std::vector<std::string> parse_chat_response_body(const std::string& body);

/// Blocking OpenAI-compatible chat-completions client over cpp-httplib.
class HttpChatClient : public prompting::ChatClient {
public:
    explicit HttpChatClient(HttpChatOptions options);

    std::string complete(const std::string& system_prompt,
                         const std::string& user_message) override;

    /// Full-control variant used by the remote model adapter.
    std::vector<std::string> complete_multi(const std::string& system_text,
                                            const std::string& user_text,
                                            const std::vector<std::vector<uint8_t>>& images,
                                            double temperature, double top_p, int max_tokens,
                                            std::optional<int64_t> seed, int num_choices);

    const HttpChatOptions& options() const { return options_; }

private:
    HttpChatOptions options_;
};

}  // namespace tsprobe::chat
