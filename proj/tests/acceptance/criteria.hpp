#pragma once

#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>

namespace acceptance {

enum class Verdict { pass, fail, skip };

struct Outcome {
    Verdict verdict = Verdict::fail;
    std::string detail;
};

inline Outcome pass_if(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }
inline Outcome skip(std::string why) { return {Verdict::skip, std::move(why)}; }

/// Non-empty environment variable.
inline std::optional<std::string> env(const char* name)
{
    const char* v = std::getenv(name);
    if (!v || !*v)
        return std::nullopt;
    return std::string(v);
}

/// Short decimal for detail lines.
inline std::string num(double v, int precision = 4)
{
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

Outcome kernel_oracles();      // 1
Outcome vit_parity();          // 2
Outcome classifier_sanity();   // 3
Outcome fayoum_reproduction(); // 4
Outcome casc_scarce_data();    // 5
Outcome pca_claims();          // 6
Outcome determinism();         // 7

} // namespace acceptance
