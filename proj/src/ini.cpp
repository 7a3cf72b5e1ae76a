#include "granet/ini.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "granet/error.hpp"

namespace granet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

IniDocument IniDocument::parse(const std::string& text, const std::string& source_name) {
    IniDocument doc;
    std::istringstream in(text);
    std::string line, current;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(source_name + ":" + std::to_string(line_no) + ": unterminated section");
            current = trim(t.substr(1, t.size() - 2));
            doc.sections_[current];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source_name + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError(source_name + ":" + std::to_string(line_no) + ": empty key");
        doc.sections_[current][key] = trim(t.substr(eq + 1));
    }
    return doc;
}

IniDocument IniDocument::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
}

std::optional<std::string> IniDocument::get(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
}

void IniDocument::set(const std::string& section, const std::string& key, std::string value) {
    sections_[section][key] = std::move(value);
}

const std::map<std::string, std::string>& IniDocument::section(const std::string& name) const {
    static const std::map<std::string, std::string> empty;
    auto s = sections_.find(name);
    return s == sections_.end() ? empty : s->second;
}

std::string IniDocument::to_string() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& [name, kv] : sections_) {
        if (!first) os << '\n';
        first = false;
        if (!name.empty()) os << '[' << name << "]\n";
        for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
    }
    return os.str();
}

double parse_double_value(const std::string& key, const std::string& value) {
    double v = 0.0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
    }
    return v;
}

long long parse_int_value(const std::string& key, const std::string& value) {
    long long v = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not an integer");
    }
    return v;
}

bool parse_bool_value(const std::string& key, const std::string& value) {
    if (value == "true" || value == "on" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "off" || value == "0" || value == "no") return false;
    throw ConfigError("config key '" + key + "': '" + value + "' is not a boolean");
}

} // namespace granet
