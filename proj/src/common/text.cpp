#include "dinoprobe/text.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/tensor_file.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace dinoprobe::text {

namespace {

template <typename T>
std::string shortest_impl(T value)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

template <typename T>
T parse_impl(std::string_view s, const char* what)
{
    s = trim(s);
    T value{};
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, value);
    if (s.empty() || res.ec != std::errc{} || res.ptr != end)
        throw std::invalid_argument("not " + std::string(what) + ": '" + std::string(s) + "'");
    return value;
}

} // namespace

std::string shortest(float value) { return shortest_impl(value); }
std::string shortest(double value) { return shortest_impl(value); }

std::string fixed(double value, int decimals)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, decimals);
    std::string s(buf, res.ptr);
    if (s.starts_with('-') && s.find_first_not_of("-0.") == std::string::npos)
        s.erase(0, 1); // no "-0.000"
    return s;
}

double parse_double(std::string_view s) { return parse_impl<double>(s, "a number"); }
float parse_float(std::string_view s) { return parse_impl<float>(s, "a number"); }
long long parse_int(std::string_view s) { return parse_impl<long long>(s, "an integer"); }

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(std::string_view line, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            return out;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<std::string> lines(std::string_view content)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start < content.size()) {
        auto pos = content.find('\n', start);
        if (pos == std::string_view::npos)
            pos = content.size();
        std::string_view l = content.substr(start, pos - start);
        if (l.ends_with('\r'))
            l.remove_suffix(1);
        out.emplace_back(l);
        start = pos + 1;
    }
    return out;
}

std::string read_text(const std::string& path)
{
    const auto bytes = read_file_bytes(path);
    return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void require_csv_safe(std::string_view cell)
{
    if (cell.find_first_of(",\"\r\n") != std::string_view::npos)
        throw DataError("value '" + std::string(cell) + "' cannot be written to CSV (contains a comma, quote or newline)");
}

} // namespace dinoprobe::text
