#include "tsprobe/minitoml.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "tsprobe/errors.hpp"
#include "tsprobe/util.hpp"

namespace tsprobe::minitoml {

int64_t Value::as_int() const {
    if (std::holds_alternative<int64_t>(v)) return std::get<int64_t>(v);
    if (std::holds_alternative<double>(v)) return static_cast<int64_t>(std::get<double>(v));
    throw ConfigError("config value is not a number");
}

double Value::as_double() const {
    if (std::holds_alternative<double>(v)) return std::get<double>(v);
    if (std::holds_alternative<int64_t>(v)) return static_cast<double>(std::get<int64_t>(v));
    throw ConfigError("config value is not a number");
}

namespace {

struct Cursor {
    const std::string& text;
    size_t pos = 0;
    int line = 1;

    bool eof() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    char next() {
        char c = text[pos++];
        if (c == '\n') ++line;
        return c;
    }
    void skip_ws_inline() {
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos;
    }
    void skip_ws_and_comments() {
        for (;;) {
            skip_ws_inline();
            if (eof()) return;
            if (peek() == '#') {
                while (!eof() && peek() != '\n') ++pos;
                continue;
            }
            if (peek() == '\n') {
                next();
                continue;
            }
            return;
        }
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("config parse error at line " + std::to_string(line) + ": " + msg);
    }
};

std::string parse_basic_string(Cursor& c) {
    // c sits on the opening quote
    c.next();
    // triple-quoted?
    if (c.pos + 1 < c.text.size() && c.text[c.pos] == '"' && c.text[c.pos + 1] == '"') {
        c.next();
        c.next();
        // per TOML, a newline immediately after the opener is trimmed
        if (!c.eof() && c.peek() == '\n') c.next();
        std::string out;
        while (true) {
            if (c.eof()) c.fail("unterminated multiline string");
            if (c.text.compare(c.pos, 3, "\"\"\"") == 0) {
                c.pos += 3;
                return out;
            }
            out.push_back(c.next());
        }
    }
    std::string out;
    while (true) {
        if (c.eof()) c.fail("unterminated string");
        char ch = c.next();
        if (ch == '"') return out;
        if (ch == '\n') c.fail("newline in basic string");
        if (ch == '\\') {
            if (c.eof()) c.fail("dangling escape");
            char e = c.next();
            switch (e) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case 'r': out.push_back('\r'); break;
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                default: c.fail(std::string("unsupported escape \\") + e);
            }
        } else {
            out.push_back(ch);
        }
    }
}

Value parse_value(Cursor& c);

Value parse_array(Cursor& c) {
    c.next();  // '['
    std::vector<Value> items;
    for (;;) {
        c.skip_ws_and_comments();
        if (c.eof()) c.fail("unterminated array");
        if (c.peek() == ']') {
            c.next();
            break;
        }
        items.push_back(parse_value(c));
        c.skip_ws_and_comments();
        if (!c.eof() && c.peek() == ',') c.next();
    }
    return Value{std::move(items)};
}

Value parse_scalar(Cursor& c) {
    std::string tok;
    while (!c.eof()) {
        char ch = c.peek();
        if (ch == '\n' || ch == ',' || ch == ']' || ch == '#' || ch == ' ' || ch == '\t' ||
            ch == '\r')
            break;
        tok.push_back(c.next());
    }
    if (tok == "true") return Value{true};
    if (tok == "false") return Value{false};
    if (tok.empty()) c.fail("empty value");
    bool looks_float = tok.find_first_of(".eE") != std::string::npos;
    errno = 0;
    char* end = nullptr;
    if (!looks_float) {
        long long iv = std::strtoll(tok.c_str(), &end, 10);
        if (errno == 0 && end && *end == '\0') return Value{static_cast<int64_t>(iv)};
    }
    double dv = std::strtod(tok.c_str(), &end);
    if (end && *end == '\0') return Value{dv};
    c.fail("cannot parse value: " + tok);
}

Value parse_value(Cursor& c) {
    c.skip_ws_inline();
    if (c.eof()) c.fail("missing value");
    char ch = c.peek();
    if (ch == '"') return Value{parse_basic_string(c)};
    if (ch == '[') return parse_array(c);
    return parse_scalar(c);
}

bool is_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

}  // namespace

Table Table::parse(const std::string& text) {
    Table t;
    Cursor c{text};
    std::string section;
    for (;;) {
        c.skip_ws_and_comments();
        if (c.eof()) break;
        if (c.peek() == '[') {
            c.next();
            std::string name;
            while (!c.eof() && c.peek() != ']') name.push_back(c.next());
            if (c.eof()) c.fail("unterminated section header");
            c.next();
            section = util::trim(name);
            if (section.empty()) c.fail("empty section name");
            t.section_order_.push_back(section);
            continue;
        }
        std::string key;
        while (!c.eof() && is_key_char(c.peek())) key.push_back(c.next());
        if (key.empty()) c.fail("expected key");
        c.skip_ws_inline();
        if (c.eof() || c.peek() != '=') c.fail("expected '=' after key " + key);
        c.next();
        Value v = parse_value(c);
        std::string full = section.empty() ? key : section + "." + key;
        t.entries_[full] = std::move(v);
    }
    return t;
}

Table Table::parse_file(const std::string& path) {
    return parse(util::read_file(path));
}

bool Table::has(const std::string& key) const { return entries_.count(key) > 0; }

const Value& Table::at(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing config key: " + key);
    return it->second;
}

std::string Table::get_string(const std::string& key) const {
    const Value& v = at(key);
    if (!v.is_string()) throw ConfigError("config key is not a string: " + key);
    return v.as_string();
}

std::string Table::get_string_or(const std::string& key, const std::string& dflt) const {
    return has(key) ? get_string(key) : dflt;
}

int64_t Table::get_int_or(const std::string& key, int64_t dflt) const {
    return has(key) ? at(key).as_int() : dflt;
}

double Table::get_double_or(const std::string& key, double dflt) const {
    return has(key) ? at(key).as_double() : dflt;
}

bool Table::get_bool_or(const std::string& key, bool dflt) const {
    return has(key) ? at(key).as_bool() : dflt;
}

std::vector<std::string> Table::get_string_array_or(const std::string& key,
                                                    std::vector<std::string> dflt) const {
    if (!has(key)) return dflt;
    std::vector<std::string> out;
    for (const auto& item : at(key).as_array()) {
        if (!item.is_string()) throw ConfigError("array element is not a string: " + key);
        out.push_back(item.as_string());
    }
    return out;
}

std::vector<double> Table::get_double_array_or(const std::string& key,
                                               std::vector<double> dflt) const {
    if (!has(key)) return dflt;
    std::vector<double> out;
    for (const auto& item : at(key).as_array()) out.push_back(item.as_double());
    return out;
}

std::vector<std::string> Table::sections_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    std::string p = prefix + ".";
    for (const auto& s : section_order_) {
        if (util::starts_with(s, p) && std::find(out.begin(), out.end(), s) == out.end())
            out.push_back(s);
    }
    return out;
}

}  // namespace tsprobe::minitoml
