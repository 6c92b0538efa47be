#include "ggnet/config.hpp"

#include <cstdint>
#include <istream>
#include <sstream>

#include "ggnet/errors.hpp"

namespace ggnet {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream is(value);
    T out{};
    if (!(is >> out) || !is.eof()) throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
    return out;
}

} // namespace

KeyValues parse_key_values(std::istream& is) {
    KeyValues out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": missing '='");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        out.emplace_back(key, trim(line.substr(eq + 1)));
    }
    return out;
}

void ConfigBinder::bind(const std::string& key, double& field) {
    setters_[key] = [&field, key](const std::string& v) { field = parse_number<double>(key, v); };
}

void ConfigBinder::bind(const std::string& key, int& field) {
    setters_[key] = [&field, key](const std::string& v) { field = parse_number<int>(key, v); };
}

void ConfigBinder::bind(const std::string& key, std::uint64_t& field) {
    setters_[key] = [&field, key](const std::string& v) { field = parse_number<std::uint64_t>(key, v); };
}

void ConfigBinder::bind(const std::string& key, bool& field) {
    setters_[key] = [&field, key](const std::string& v) {
        if (v == "true" || v == "1" || v == "on") {
            field = true;
        } else if (v == "false" || v == "0" || v == "off") {
            field = false;
        } else {
            throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
        }
    };
}

void ConfigBinder::bind(const std::string& key, std::string& field) {
    setters_[key] = [&field](const std::string& v) { field = v; };
}

void ConfigBinder::apply(const KeyValues& kv) const {
    for (const auto& [k, v] : kv) {
        const auto it = setters_.find(k);
        if (it == setters_.end()) throw ConfigError("unknown config key '" + k + "'");
        it->second(v);
    }
}

} // namespace ggnet
