#pragma once

#include <map>
#include <optional>
#include <string>

namespace granet {

// Line-based `key = value` text with `[section]` headers. `#` and `;` start
// comment lines. Keys before any header land in section "".
class IniDocument {
public:
    static IniDocument parse(const std::string& text, const std::string& source_name = "<config>");
    static IniDocument read(const std::string& path);

    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, std::string value);
    bool has_section(const std::string& section) const { return sections_.count(section) != 0; }
    const std::map<std::string, std::string>& section(const std::string& name) const;

    std::string to_string() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

double parse_double_value(const std::string& key, const std::string& value);
long long parse_int_value(const std::string& key, const std::string& value);
bool parse_bool_value(const std::string& key, const std::string& value);

} // namespace granet
