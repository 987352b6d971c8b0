#include "dinoprobe/config.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dinoprobe {

namespace {

bool valid_key(std::string_view key)
{
    return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
    });
}

/// Strips a '#' comment that starts the line or follows whitespace.
std::string_view strip_comment(std::string_view line)
{
    for (std::size_t i = 0; i < line.size(); ++i)
        if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t'))
            return line.substr(0, i);
    return line;
}

std::vector<std::string> split_list(const std::string& value)
{
    std::vector<std::string> out;
    if (text::trim(value).empty())
        return out;
    for (const auto& item : text::split(value))
        out.emplace_back(text::trim(item));
    return out;
}

/// Throws std::invalid_argument when `value` does not fit `type`.
void check_type(ValueType type, const std::string& value)
{
    switch (type) {
    case ValueType::integer:
        text::parse_int(value);
        break;
    case ValueType::number:
        if (!std::isfinite(text::parse_double(value)))
            throw std::invalid_argument("not finite");
        break;
    case ValueType::boolean:
        if (value != "true" && value != "false")
            throw std::invalid_argument("not a boolean");
        break;
    case ValueType::list:
        for (const auto& item : split_list(value))
            if (item.empty())
                throw std::invalid_argument("empty list item");
        break;
    case ValueType::text:
        break;
    }
}

} // namespace

std::string_view to_string(ValueType type)
{
    switch (type) {
    case ValueType::text:
        return "text";
    case ValueType::integer:
        return "integer";
    case ValueType::number:
        return "number";
    case ValueType::boolean:
        return "boolean";
    case ValueType::list:
        return "list";
    }
    return "text";
}

Settings::Settings(std::vector<KeySpec> schema) : schema_(std::move(schema))
{
    for (const auto& k : schema_) {
        values_[k.key] = k.default_value;
        sources_[k.key] = "default";
    }
}

const KeySpec& Settings::spec(const std::string& key) const
{
    for (const auto& k : schema_)
        if (k.key == key)
            return k;
    throw ConfigError("unknown setting '" + key + "'");
}

void Settings::assign(const std::string& key, const std::string& value, const std::string& where)
{
    if (!valid_key(key))
        throw ConfigError(where + ": malformed key '" + key + "'");
    const auto it = std::find_if(schema_.begin(), schema_.end(), [&](const KeySpec& k) { return k.key == key; });
    if (it == schema_.end())
        throw ConfigError(where + ": unknown key '" + key + "'");
    try {
        check_type(it->type, value);
    } catch (const std::invalid_argument&) {
        throw ConfigError(where + ": key '" + key + "' expects " + std::string(to_string(it->type)) + ", got '" +
                          value + "'");
    }
    values_[key] = value;
    sources_[key] = where;
}

void Settings::load_file(const std::filesystem::path& path)
{
    std::string content;
    try {
        content = text::read_text(path.string());
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw IoError("cannot read config file " + path.string());
    }
    load_text(content, path.string());
}

void Settings::load_text(std::string_view content, const std::string& origin)
{
    if (content.substr(0, 3) == "\xEF\xBB\xBF")
        content.remove_prefix(3);
    std::map<std::string, std::size_t> seen;
    std::size_t line_no = 0;
    for (const auto& raw_line : text::lines(content)) {
        ++line_no;
        const auto where = origin + ":" + std::to_string(line_no);
        const auto line = text::trim(strip_comment(raw_line));
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(where + ": expected 'key = value'");
        const std::string key(text::trim(line.substr(0, eq)));
        const std::string value(text::trim(line.substr(eq + 1)));
        if (const auto prev = seen.find(key); prev != seen.end())
            throw ConfigError(where + ": key '" + key + "' already set on line " + std::to_string(prev->second));
        seen[key] = line_no;
        assign(key, value, where);
    }
}

void Settings::apply_override(std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw ConfigError("override '" + std::string(assignment) + "': expected key=value");
    assign(std::string(text::trim(assignment.substr(0, eq))), std::string(text::trim(assignment.substr(eq + 1))),
           "override");
}

const std::string& Settings::raw(const std::string& key) const
{
    spec(key);
    return values_.at(key);
}

long long Settings::integer(const std::string& key) const
{
    return text::parse_int(raw(key));
}

std::size_t Settings::count(const std::string& key) const
{
    const auto v = integer(key);
    if (v < 0)
        throw ConfigError(source(key) + ": key '" + key + "' must not be negative");
    return static_cast<std::size_t>(v);
}

double Settings::number(const std::string& key) const { return text::parse_double(raw(key)); }

bool Settings::boolean(const std::string& key) const { return raw(key) == "true"; }

std::vector<std::string> Settings::list(const std::string& key) const { return split_list(raw(key)); }

const std::string& Settings::required(const std::string& key) const
{
    const auto& v = raw(key);
    if (text::trim(v).empty())
        throw ConfigError("missing required setting '" + key + "'");
    return v;
}

const std::string& Settings::source(const std::string& key) const
{
    spec(key);
    return sources_.at(key);
}

std::map<std::string, std::string> Settings::effective() const { return values_; }

std::string Settings::help_text() const
{
    std::size_t width = 0;
    for (const auto& k : schema_)
        width = std::max(width, k.key.size() + 3 + k.default_value.size());
    std::string out;
    for (const auto& k : schema_) {
        std::string lhs = k.key + " = " + k.default_value;
        lhs.resize(width, ' ');
        out += "  " + lhs + "  (" + std::string(to_string(k.type)) + ") " + k.help + "\n";
    }
    return out;
}

} // namespace dinoprobe
