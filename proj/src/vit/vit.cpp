#include "dinoprobe/vit.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/log.hpp"

#include <cmath>
#include <set>

namespace dinoprobe {

namespace {

std::string shape_string(const std::vector<std::int64_t>& shape)
{
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i)
        s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
}

std::int64_t as_i64(std::size_t v) { return static_cast<std::int64_t>(v); }

ViTConfig infer_config(const TensorFile& file, std::string_view origin)
{
    const std::string where(origin);
    if (!file.contains("patch_embed.proj.weight"))
        throw IoError(where + ": missing tensor 'patch_embed.proj.weight'");
    if (!file.contains("pos_embed"))
        throw IoError(where + ": missing tensor 'pos_embed'");
    const auto& proj = file.at("patch_embed.proj.weight").shape;
    if (proj.size() != 4 || proj[1] != 3 || proj[2] != proj[3] || proj[0] <= 0 || proj[2] <= 0)
        throw IoError(where + ": tensor 'patch_embed.proj.weight' has unexpected shape " + shape_string(proj));
    ViTConfig cfg;
    cfg.embed_dim = static_cast<std::size_t>(proj[0]);
    cfg.patch_size = static_cast<std::size_t>(proj[2]);
    cfg.num_heads = std::max<std::size_t>(1, cfg.embed_dim / 64);
    if (auto it = file.metadata().find("num_heads"); it != file.metadata().end()) {
        try {
            cfg.num_heads = static_cast<std::size_t>(std::stoul(it->second));
        } catch (const std::exception&) {
            throw IoError(where + ": metadata num_heads is not an integer");
        }
    }

    const auto& pos = file.at("pos_embed").shape;
    if (pos.size() != 3 || pos[1] < 2)
        throw IoError(where + ": tensor 'pos_embed' has unexpected shape " + shape_string(pos));
    const auto grid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pos[1] - 1))));
    cfg.image_side = grid * cfg.patch_size;

    std::size_t depth = 0;
    while (file.contains("blocks." + std::to_string(depth) + ".norm1.weight"))
        ++depth;
    cfg.depth = depth;
    const std::string fc1 = "blocks.0.mlp.fc1.weight";
    if (depth > 0 && file.contains(fc1) && !file.at(fc1).shape.empty())
        cfg.mlp_ratio = static_cast<std::size_t>(file.at(fc1).shape[0]) / cfg.embed_dim;
    return cfg;
}

std::vector<float> copy_span(std::span<const float> s) { return {s.begin(), s.end()}; }

void require_finite(const MatrixF& x, const std::string& stage)
{
    for (float v : x.values())
        if (!std::isfinite(v))
            throw NumericError("non-finite activation after " + stage);
}

} // namespace

ViTConfig ViTConfig::variant(std::string_view name)
{
    ViTConfig cfg;
    if (name == "vit-s16" || name == "vit-s8") {
        cfg.embed_dim = 384;
        cfg.num_heads = 6;
    } else if (name == "vit-b16" || name == "vit-b8") {
        cfg.embed_dim = 768;
        cfg.num_heads = 12;
    } else {
        throw ConfigError("unknown ViT variant '" + std::string(name) + "' (expected vit-s16, vit-s8, vit-b16, vit-b8)");
    }
    cfg.patch_size = name.ends_with("8") ? 8 : 16;
    return cfg;
}

void ViTConfig::validate() const
{
    if (patch_size == 0 || embed_dim == 0 || num_heads == 0 || depth == 0 || mlp_ratio == 0 || image_side == 0)
        throw ConfigError("ViT config: all sizes must be positive");
    if (embed_dim % num_heads != 0)
        throw ConfigError("ViT config: embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                          std::to_string(num_heads));
    if (image_side % patch_size != 0)
        throw ConfigError("ViT config: image_side " + std::to_string(image_side) + " not divisible by patch_size " +
                          std::to_string(patch_size));
    if (!(layernorm_eps >= 0.0f))
        throw ConfigError("ViT config: layernorm eps must be non-negative");
}

std::vector<std::pair<std::string, std::vector<std::int64_t>>> expected_tensors(const ViTConfig& cfg)
{
    const auto d = as_i64(cfg.embed_dim);
    const auto p = as_i64(cfg.patch_size);
    const auto hidden = as_i64(cfg.mlp_hidden());
    std::vector<std::pair<std::string, std::vector<std::int64_t>>> out = {
        {"patch_embed.proj.weight", {d, 3, p, p}},
        {"patch_embed.proj.bias", {d}},
        {"cls_token", {1, 1, d}},
        {"pos_embed", {1, as_i64(cfg.token_count()), d}},
    };
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        out.push_back({b + "norm1.weight", {d}});
        out.push_back({b + "norm1.bias", {d}});
        out.push_back({b + "attn.qkv.weight", {3 * d, d}});
        out.push_back({b + "attn.qkv.bias", {3 * d}});
        out.push_back({b + "attn.proj.weight", {d, d}});
        out.push_back({b + "attn.proj.bias", {d}});
        out.push_back({b + "norm2.weight", {d}});
        out.push_back({b + "norm2.bias", {d}});
        out.push_back({b + "mlp.fc1.weight", {hidden, d}});
        out.push_back({b + "mlp.fc1.bias", {hidden}});
        out.push_back({b + "mlp.fc2.weight", {d, hidden}});
        out.push_back({b + "mlp.fc2.bias", {d}});
    }
    out.push_back({"norm.weight", {d}});
    out.push_back({"norm.bias", {d}});
    return out;
}

WeightStore WeightStore::load(const std::filesystem::path& path, std::optional<ViTConfig> declared)
{
    if (!std::filesystem::exists(path))
        throw IoError("weights file not found: " + path.string());
    return from_container(TensorFile::read(path), declared, path.string());
}

WeightStore WeightStore::from_container(const TensorFile& file, std::optional<ViTConfig> declared,
                                        std::string_view origin)
{
    const std::string where(origin);
    WeightStore store;
    store.config_ = declared ? *declared : infer_config(file, origin);
    store.config_.validate();

    const auto expected = expected_tensors(store.config_);
    std::set<std::string> known;
    for (const auto& [name, shape] : expected) {
        known.insert(name);
        if (!file.contains(name))
            throw IoError(where + ": missing tensor '" + name + "'");
        const auto& entry = file.at(name);
        if (entry.shape != shape)
            throw IoError(where + ": tensor '" + name + "' has shape " + shape_string(entry.shape) + ", expected " +
                          shape_string(shape));
        NamedTensor t{entry.shape, file.f32(name)};
        for (float v : t.values)
            if (!std::isfinite(v))
                throw IoError(where + ": tensor '" + name + "' contains a non-finite value");
        store.tensors_.emplace(name, std::move(t));
    }
    for (const auto& [name, entry] : file.tensors()) {
        if (!known.contains(name)) {
            store.skipped_.push_back(name);
            log::warning(where + ": ignoring unexpected tensor '" + name + "'");
        }
    }
    return store;
}

const NamedTensor& WeightStore::at(const std::string& name) const
{
    auto it = tensors_.find(name);
    if (it == tensors_.end())
        throw IoError("weight store has no tensor '" + name + "'");
    return it->second;
}

MatrixF unfold_patches(const ImageTensor& planar, std::size_t patch_size)
{
    if (planar.is_u8() || planar.layout() != PixelLayout::planar)
        throw ConfigError("patch_embed: expects a planar float tensor");
    if (patch_size == 0 || planar.height() % patch_size != 0 || planar.width() % patch_size != 0)
        throw ConfigError("patch_embed: image " + std::to_string(planar.height()) + "x" +
                          std::to_string(planar.width()) + " not divisible by patch size " +
                          std::to_string(patch_size));
    const std::size_t c = planar.channels();
    const std::size_t gh = planar.height() / patch_size;
    const std::size_t gw = planar.width() / patch_size;
    const std::size_t h = planar.height();
    const std::size_t w = planar.width();
    const auto src = planar.f32();
    MatrixF out(gh * gw, c * patch_size * patch_size);
    for (std::size_t py = 0; py < gh; ++py) {
        for (std::size_t px = 0; px < gw; ++px) {
            float* dst = out.row(py * gw + px).data();
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t y = 0; y < patch_size; ++y) {
                    const float* line = src.data() + (ch * h + py * patch_size + y) * w + px * patch_size;
                    std::copy_n(line, patch_size, dst);
                    dst += patch_size;
                }
        }
    }
    return out;
}

MatrixF patch_embed(const ImageTensor& planar, const Linear& projection, std::size_t patch_size)
{
    const MatrixF patches = unfold_patches(planar, patch_size);
    if (projection.weight.rows() != patches.cols())
        throw ConfigError("patch_embed: projection expects " + std::to_string(projection.weight.rows()) +
                          " inputs per patch, got " + std::to_string(patches.cols()));
    return projection(patches);
}

VisionTransformer::VisionTransformer(const WeightStore& weights) : config_(weights.config())
{
    const std::size_t d = config_.embed_dim;
    const std::size_t hidden = config_.mlp_hidden();
    const std::size_t p = config_.patch_size;
    auto vec = [&](const std::string& name) { return copy_span(weights.at(name).values); };
    auto linear = [&](const std::string& prefix, std::size_t out, std::size_t in) {
        return Linear::from_out_in(weights.at(prefix + ".weight").values, weights.at(prefix + ".bias").values, out,
                                   in);
    };

    patch_proj_ = linear("patch_embed.proj", d, 3 * p * p);
    cls_token_ = vec("cls_token");
    pos_embed_ = MatrixF(config_.token_count(), d, vec("pos_embed"));
    blocks_.reserve(config_.depth);
    for (std::size_t i = 0; i < config_.depth; ++i) {
        const std::string b = "blocks." + std::to_string(i) + ".";
        Block block;
        block.norm1_gamma = vec(b + "norm1.weight");
        block.norm1_beta = vec(b + "norm1.bias");
        block.attn.qkv = linear(b + "attn.qkv", 3 * d, d);
        block.attn.proj = linear(b + "attn.proj", d, d);
        block.norm2_gamma = vec(b + "norm2.weight");
        block.norm2_beta = vec(b + "norm2.bias");
        block.fc1 = linear(b + "mlp.fc1", hidden, d);
        block.fc2 = linear(b + "mlp.fc2", d, hidden);
        blocks_.push_back(std::move(block));
    }
    norm_gamma_ = vec("norm.weight");
    norm_beta_ = vec("norm.bias");
}

MatrixF VisionTransformer::patch_tokens(const ImageTensor& planar) const
{
    if (planar.height() != config_.image_side || planar.width() != config_.image_side || planar.channels() != 3)
        throw ConfigError("ViT input must be 3x" + std::to_string(config_.image_side) + "x" +
                          std::to_string(config_.image_side));
    return patch_embed(planar, patch_proj_, config_.patch_size);
}

MatrixF VisionTransformer::embed(const ImageTensor& planar) const
{
    const MatrixF patches = patch_tokens(planar);
    if (patches.rows() + 1 != pos_embed_.rows())
        throw ConfigError("token count " + std::to_string(patches.rows() + 1) +
                          " does not match the positional embedding (" + std::to_string(pos_embed_.rows()) + ")");
    const std::size_t d = config_.embed_dim;
    MatrixF tokens(patches.rows() + 1, d);
    std::copy(cls_token_.begin(), cls_token_.end(), tokens.row(0).begin());
    for (std::size_t t = 0; t < patches.rows(); ++t)
        std::copy_n(patches.row(t).begin(), d, tokens.row(t + 1).begin());
    for (std::size_t t = 0; t < tokens.rows(); ++t) {
        auto row = tokens.row(t);
        const auto pos = pos_embed_.row(t);
        for (std::size_t j = 0; j < d; ++j)
            row[j] += pos[j];
    }
    return tokens;
}

MatrixF VisionTransformer::encode(MatrixF x) const
{
    if (x.cols() != config_.embed_dim)
        throw ConfigError("encode: token width does not match embed_dim");
    const float eps = config_.layernorm_eps;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& b = blocks_[i];
        const MatrixF attn =
            multi_head_self_attention(layer_norm_rows(x, b.norm1_gamma, b.norm1_beta, eps), b.attn, config_.num_heads);
        for (std::size_t k = 0; k < x.values().size(); ++k)
            x.values()[k] += attn.values()[k];

        MatrixF hidden = b.fc1(layer_norm_rows(x, b.norm2_gamma, b.norm2_beta, eps));
        for (float& v : hidden.values())
            v = gelu(v);
        const MatrixF mlp = b.fc2(hidden);
        for (std::size_t k = 0; k < x.values().size(); ++k)
            x.values()[k] += mlp.values()[k];
        require_finite(x, "block " + std::to_string(i));
    }
    MatrixF out = layer_norm_rows(x, norm_gamma_, norm_beta_, eps);
    require_finite(out, "final norm");
    return out;
}

std::vector<float> VisionTransformer::forward_cls(const ImageTensor& planar) const
{
    MatrixF tokens = embed(planar);
    require_finite(tokens, "patch embedding");
    const MatrixF out = encode(std::move(tokens));
    return copy_span(out.row(0));
}

} // namespace dinoprobe
