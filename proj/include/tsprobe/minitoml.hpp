#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tsprobe::minitoml {

/// Small TOML-like reader covering what the template and config files use:
/// [section] headers (dotted names allowed), `key = value` pairs, `#` comments,
/// basic "..." and """...""" strings, integers, floats, booleans, and
/// single-type arrays that may span lines.
struct Value {
    std::variant<std::string, int64_t, double, bool, std::vector<Value>> v;

    bool is_string() const { return std::holds_alternative<std::string>(v); }
    bool is_array() const { return std::holds_alternative<std::vector<Value>>(v); }
    const std::string& as_string() const { return std::get<std::string>(v); }
    int64_t as_int() const;
    double as_double() const;
    bool as_bool() const { return std::get<bool>(v); }
    const std::vector<Value>& as_array() const { return std::get<std::vector<Value>>(v); }
};

class Table {
public:
    static Table parse(const std::string& text);
    static Table parse_file(const std::string& path);

    bool has(const std::string& dotted_key) const;
    const Value& at(const std::string& dotted_key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string_or(const std::string& key, const std::string& dflt) const;
    int64_t get_int_or(const std::string& key, int64_t dflt) const;
    double get_double_or(const std::string& key, double dflt) const;
    bool get_bool_or(const std::string& key, bool dflt) const;
    std::vector<std::string> get_string_array_or(const std::string& key,
                                                 std::vector<std::string> dflt = {}) const;
    std::vector<double> get_double_array_or(const std::string& key,
                                            std::vector<double> dflt = {}) const;

    /// Section names (in file order) whose dotted name starts with `prefix.`.
    std::vector<std::string> sections_with_prefix(const std::string& prefix) const;

    const std::map<std::string, Value>& entries() const { return entries_; }

private:
    std::map<std::string, Value> entries_;
    std::vector<std::string> section_order_;
};

}  // namespace tsprobe::minitoml
