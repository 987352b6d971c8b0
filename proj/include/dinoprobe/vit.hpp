#pragma once

#include "dinoprobe/image.hpp"
#include "dinoprobe/kernels.hpp"
#include "dinoprobe/matrix.hpp"
#include "dinoprobe/tensor_file.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dinoprobe {

struct ViTConfig {
    std::size_t patch_size = 16;
    std::size_t embed_dim = 384;
    std::size_t depth = 12;
    std::size_t num_heads = 6;
    std::size_t mlp_ratio = 4;
    std::size_t image_side = 224;
    float layernorm_eps = 1e-6f;

    /// "vit-s16", "vit-s8", "vit-b16", "vit-b8".
    static ViTConfig variant(std::string_view name);

    void validate() const;
    std::size_t grid() const { return image_side / patch_size; }
    std::size_t patch_count() const { return grid() * grid(); }
    std::size_t token_count() const { return patch_count() + 1; }
    std::size_t head_dim() const { return embed_dim / num_heads; }
    std::size_t mlp_hidden() const { return embed_dim * mlp_ratio; }

    bool operator==(const ViTConfig&) const = default;
};

/// Every tensor a backbone checkpoint must provide, with its shape, in
/// publisher naming (patch_embed.proj.*, cls_token, pos_embed,
/// blocks.{i}.{norm1,attn.qkv,attn.proj,norm2,mlp.fc1,mlp.fc2}.*, norm.*).
std::vector<std::pair<std::string, std::vector<std::int64_t>>> expected_tensors(const ViTConfig& cfg);

struct NamedTensor {
    std::vector<std::int64_t> shape;
    std::vector<float> values;
};

/// Immutable set of pre-trained backbone parameters.
class WeightStore {
public:
    /// Throws IoError naming the offending tensor on a missing tensor, a
    /// shape mismatch or a non-finite value. Without `declared`, the
    /// architecture is inferred from tensor shapes; the head count comes from
    /// the container's "num_heads" metadata, else embed_dim / 64.
    /// Tensors outside the expected set are skipped and listed in skipped().
    static WeightStore load(const std::filesystem::path& path, std::optional<ViTConfig> declared = {});
    static WeightStore from_container(const TensorFile& file, std::optional<ViTConfig> declared,
                                      std::string_view origin);

    const ViTConfig& config() const { return config_; }
    const NamedTensor& at(const std::string& name) const;
    std::size_t size() const { return tensors_.size(); }
    const std::vector<std::string>& skipped() const { return skipped_; }

private:
    ViTConfig config_;
    std::map<std::string, NamedTensor> tensors_;
    std::vector<std::string> skipped_;
};

/// Planar 3 x p x p patches, row-major over the patch grid; each row is one
/// patch flattened in (channel, y, x) order, matching a conv kernel's layout.
MatrixF unfold_patches(const ImageTensor& planar, std::size_t patch_size);

/// Non-overlapping patch projection, i.e. a stride-p convolution.
MatrixF patch_embed(const ImageTensor& planar, const Linear& projection, std::size_t patch_size);

/// Pre-norm ViT backbone. Construct once per WeightStore; forward calls are
/// const and may run concurrently.
class VisionTransformer {
public:
    explicit VisionTransformer(const WeightStore& weights);

    const ViTConfig& config() const { return config_; }

    MatrixF patch_tokens(const ImageTensor& planar) const;
    /// [cls; patches] + positional embedding.
    MatrixF embed(const ImageTensor& planar) const;
    /// Encoder blocks followed by the final LayerNorm over every token.
    MatrixF encode(MatrixF tokens) const;
    /// Embedding of an image preprocessed to config().image_side: the CLS
    /// token after the final LayerNorm (no projection head).
    std::vector<float> forward_cls(const ImageTensor& planar) const;

private:
    struct Block {
        std::vector<float> norm1_gamma, norm1_beta;
        AttentionWeights attn;
        std::vector<float> norm2_gamma, norm2_beta;
        Linear fc1, fc2;
    };

    ViTConfig config_;
    Linear patch_proj_;
    std::vector<float> cls_token_;
    MatrixF pos_embed_;
    std::vector<Block> blocks_;
    std::vector<float> norm_gamma_, norm_beta_;
};

} // namespace dinoprobe
