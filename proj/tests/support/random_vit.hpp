#pragma once

#include "dinoprobe/rng.hpp"
#include "dinoprobe/tensor_file.hpp"
#include "dinoprobe/vit.hpp"

#include <cmath>

namespace testing_support {

/// Container with every expected backbone tensor filled with seeded noise.
inline dinoprobe::TensorFile random_vit_container(const dinoprobe::ViTConfig& cfg, std::uint64_t seed)
{
    dinoprobe::Rng rng(seed);
    dinoprobe::TensorFile file;
    for (const auto& [name, shape] : dinoprobe::expected_tensors(cfg)) {
        std::int64_t n = 1;
        for (auto d : shape)
            n *= d;
        std::vector<float> v(static_cast<std::size_t>(n));
        const bool gamma = name.ends_with("norm1.weight") || name.ends_with("norm2.weight") || name == "norm.weight";
        const double fan_in = shape.size() >= 2 ? static_cast<double>(n / shape[0]) : 1.0;
        const double scale = shape.size() >= 2 && name != "pos_embed" ? 1.0 / std::sqrt(fan_in) : 0.1;
        for (auto& x : v)
            x = static_cast<float>((gamma ? 1.0 : 0.0) + scale * rng.normal());
        file.put(name, shape, std::span<const float>(v));
    }
    file.metadata()["num_heads"] = std::to_string(cfg.num_heads);
    return file;
}

} // namespace testing_support
