#include "dinoprobe/error.hpp"
#include "dinoprobe/experiment.hpp"
#include "dinoprobe/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>

namespace dinoprobe {

namespace {

/// Largest-remainder apportionment of `total` by `fractions`; equal
/// remainders go to the lower index.
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& fractions)
{
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double quota = fractions[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
        remainder[i] = quota - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return remainder[a] > remainder[b] + 1e-12;
    });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned)
        ++counts[order[i % 3]];
    return counts;
}

std::vector<double> ranks(std::span<const double> v)
{
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]])
            ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

} // namespace

void SplitFractions::validate() const
{
    for (double f : {train, val, test})
        if (!(f >= 0.0 && f <= 1.0))
            throw ConfigError("split fractions must lie in [0, 1]");
    if (train <= 0.0 || test <= 0.0)
        throw ConfigError("split.train and split.test must be positive");
    const double sum = train + val + test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split fractions sum to " + std::to_string(sum) + ", expected 1");
}

SplitIndices stratified_split(std::span<const int> labels, std::span<const std::string> class_names,
                              const SplitFractions& fractions, std::uint64_t seed)
{
    fractions.validate();
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
        members[labels[i]].push_back(i);
    SplitIndices out;
    for (auto& [label, rows] : members) {
        const auto name = label >= 0 && static_cast<std::size_t>(label) < class_names.size()
                              ? class_names[static_cast<std::size_t>(label)]
                              : "#" + std::to_string(label);
        if (rows.size() < 3)
            throw DataError("class '" + name + "' has " + std::to_string(rows.size()) +
                            " samples; a stratified split needs at least 3");
        const auto counts = apportion(rows.size(), {fractions.train, fractions.val, fractions.test});
        Rng rng(hash64(seed, static_cast<std::uint64_t>(label)));
        rng.shuffle(std::span<std::size_t>(rows));
        auto it = rows.begin();
        for (auto [part, count] : {std::pair{&out.train, counts[0]}, {&out.val, counts[1]}, {&out.test, counts[2]}}) {
            part->insert(part->end(), it, it + static_cast<std::ptrdiff_t>(count));
            it += static_cast<std::ptrdiff_t>(count);
        }
    }
    for (auto* part : {&out.train, &out.val, &out.test})
        std::sort(part->begin(), part->end());
    return out;
}

std::vector<std::size_t> balanced_subsample(std::span<const std::size_t> pool, std::span<const int> labels,
                                            std::size_t n, std::uint64_t seed)
{
    if (n > pool.size())
        throw ConfigError("subsample of " + std::to_string(n) + " requested from a pool of " +
                          std::to_string(pool.size()));
    std::map<int, std::size_t> freq;
    for (auto i : pool)
        ++freq[labels[i]];
    // Key u^(1/w) with w = 1/freq, compared in log space: freq * log(u).
    Rng rng(seed);
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(pool.size());
    for (auto i : pool)
        keyed.emplace_back(static_cast<double>(freq[labels[i]]) * std::log(rng.uniform_open0()), i);
    std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(n), keyed.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back(keyed[i].second);
    std::sort(out.begin(), out.end());
    return out;
}

double mean(std::span<const double> v)
{
    if (v.empty())
        throw ConfigError("mean of an empty list");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v)
{
    if (v.size() < 2)
        throw ConfigError("sample standard deviation needs two values");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double spearman(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.size() < 2)
        throw ConfigError("spearman needs two equally long lists of at least 2 values");
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double ma = mean(ra);
    const double mb = mean(rb);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0)
        throw NumericError("spearman correlation undefined for constant input");
    return sab / std::sqrt(saa * sbb);
}

} // namespace dinoprobe
