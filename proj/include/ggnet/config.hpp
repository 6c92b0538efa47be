#pragma once

// Line-oriented `key = value` configuration files. '#' starts a comment.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ggnet {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Throws ConfigError on lines without '=' or with an empty key.
KeyValues parse_key_values(std::istream& is);

/// Maps keys onto typed fields. Applying a key that was never bound, or a
/// value that does not parse, throws ConfigError.
class ConfigBinder {
public:
    void bind(const std::string& key, double& field);
    void bind(const std::string& key, int& field);
    void bind(const std::string& key, std::uint64_t& field);
    void bind(const std::string& key, bool& field);
    void bind(const std::string& key, std::string& field);

    void apply(const KeyValues& kv) const;

private:
    std::map<std::string, std::function<void(const std::string&)>> setters_;
};

} // namespace ggnet
