#pragma once

#include "dinoprobe/classifiers.hpp"
#include "dinoprobe/experiment.hpp"
#include "dinoprobe/image.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dinoprobe {

enum class ValueType { text, integer, number, boolean, list };

std::string_view to_string(ValueType type);

struct KeySpec {
    std::string key;
    ValueType type = ValueType::text;
    std::string default_value;
    std::string help;
};

/// Flat settings file:
///
///     # comment
///     dotted.key = value      # trailing comment after whitespace
///
/// UTF-8, one assignment per line, keys from a fixed schema, lists are
/// comma separated. Later layers win: schema defaults, then the file, then
/// overrides ("key=value"). Every error names the line (or override) that
/// caused it.
class Settings {
public:
    explicit Settings(std::vector<KeySpec> schema);

    void load_file(const std::filesystem::path& path);
    void load_text(std::string_view content, const std::string& origin);
    void apply_override(std::string_view assignment);

    const std::string& raw(const std::string& key) const;
    std::string text(const std::string& key) const { return raw(key); }
    long long integer(const std::string& key) const;
    std::size_t count(const std::string& key) const; ///< non-negative integer
    double number(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<std::string> list(const std::string& key) const;
    /// Throws ConfigError when the effective value is empty.
    const std::string& required(const std::string& key) const;

    /// "default", "<file>:<line>" or "override".
    const std::string& source(const std::string& key) const;
    /// Every key with its effective value.
    std::map<std::string, std::string> effective() const;
    const std::vector<KeySpec>& schema() const { return schema_; }
    /// One line per key: "  key = default  (type) help".
    std::string help_text() const;

private:
    void assign(const std::string& key, const std::string& value, const std::string& where);
    const KeySpec& spec(const std::string& key) const;

    std::vector<KeySpec> schema_;
    std::map<std::string, std::string> values_;
    std::map<std::string, std::string> sources_;
};

/// Every key the command-line tool understands.
std::vector<KeySpec> settings_schema();

ClassifierSpec classifier_spec(const Settings& s, ClassifierKind kind);
/// experiment.* / split.* / classifier keys; jobs stays 1 and metadata
/// receives every effective setting.
ExperimentConfig experiment_config(const Settings& s);
PreprocessSpec preprocess_spec(const Settings& s);

} // namespace dinoprobe
