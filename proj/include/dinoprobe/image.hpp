#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dinoprobe {

/// Interleaved rasters are row-major HWC (decoder output, geometric ops).
/// Planar rasters are CHW (model input).
enum class PixelLayout { interleaved, planar };

/// A raster in one of two stages: 8-bit samples straight from the decoder,
/// or 32-bit floats. Float rasters produced by to_float() and the geometric
/// ops stay on the 0..255 scale; to_model_input() produces normalized values.
class ImageTensor {
public:
    ImageTensor() = default;

    static ImageTensor from_u8(std::size_t height, std::size_t width, std::size_t channels,
                               std::vector<std::uint8_t> data);
    static ImageTensor from_f32(std::size_t height, std::size_t width, std::size_t channels,
                                std::vector<float> data, PixelLayout layout = PixelLayout::interleaved);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t channels() const { return channels_; }
    PixelLayout layout() const { return layout_; }
    std::size_t size() const { return height_ * width_ * channels_; }

    bool is_u8() const { return std::holds_alternative<std::vector<std::uint8_t>>(data_); }
    std::span<const std::uint8_t> u8() const;
    std::span<const float> f32() const;

    /// Sample value as float regardless of stage/layout.
    float at(std::size_t y, std::size_t x, std::size_t c) const;

    bool operator==(const ImageTensor&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    PixelLayout layout_ = PixelLayout::interleaved;
    std::variant<std::vector<std::uint8_t>, std::vector<float>> data_;
};

enum class ResizeMode { resize_bilinear, fit_width_pad_height };

std::string_view to_string(ResizeMode mode);
ResizeMode parse_resize_mode(std::string_view text);

struct PreprocessSpec {
    std::size_t target_side = 224;
    ResizeMode mode = ResizeMode::resize_bilinear;
    std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> std{0.229f, 0.224f, 0.225f};

    /// Throws ConfigError when target_side == 0 or any std component <= 0.
    void validate() const;
    /// Stable textual form, hashed into embedding cache keys.
    std::string canonical() const;
};

/// PNG or JPEG file contents -> 8-bit RGB. Grayscale is replicated to three
/// channels; alpha is dropped. `origin` is used in error messages.
ImageTensor decode_image(std::span<const std::byte> bytes, std::string_view origin);
ImageTensor load_image(const std::filesystem::path& path);

ImageTensor to_float(const ImageTensor& img);

/// Bilinear resampling with half-pixel centres (no corner alignment):
///
///   src = (dst + 0.5) * in / out - 0.5, clamped below at 0,
///
/// neighbours floor(src) and min(floor(src) + 1, in - 1). 8-bit input gives
/// 8-bit output (rounded), float input gives float output. Resizing to the
/// current size returns the input unchanged.
ImageTensor resize_bilinear(const ImageTensor& img, std::size_t out_h, std::size_t out_w);

/// Aspect-preserving fit into target x target. Landscape (and square) inputs
/// are scaled to width = target and zero-padded top and bottom; portrait
/// inputs are scaled to height = target and zero-padded left and right.
/// The band is centred, an odd remainder row/column goes to the bottom/right.
ImageTensor fit_width_pad_height(const ImageTensor& img, std::size_t target);

/// Interleaved target_side x target_side raster (8-bit or 0..255 float) ->
/// planar float, (v / 255 - mean_c) / std_c.
ImageTensor to_model_input(const ImageTensor& img, const PreprocessSpec& spec);

/// decode -> float -> geometry per spec.mode -> normalize.
ImageTensor preprocess(const ImageTensor& decoded, const PreprocessSpec& spec);

/// Debug dump of a planar float tensor: per channel, u32 LE height, u32 LE
/// width, then height*width f32 LE values.
void write_tensor_dump(const std::filesystem::path& path, const ImageTensor& planar);

} // namespace dinoprobe
