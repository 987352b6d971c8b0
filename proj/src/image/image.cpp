#include "dinoprobe/image.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/tensor_file.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace dinoprobe {

ImageTensor ImageTensor::from_u8(std::size_t height, std::size_t width, std::size_t channels,
                                 std::vector<std::uint8_t> data)
{
    if (data.size() != height * width * channels)
        throw ConfigError("image data length does not match height*width*channels");
    ImageTensor img;
    img.height_ = height;
    img.width_ = width;
    img.channels_ = channels;
    img.data_ = std::move(data);
    return img;
}

ImageTensor ImageTensor::from_f32(std::size_t height, std::size_t width, std::size_t channels,
                                  std::vector<float> data, PixelLayout layout)
{
    if (data.size() != height * width * channels)
        throw ConfigError("image data length does not match height*width*channels");
    for (float v : data)
        if (!std::isfinite(v))
            throw NumericError("non-finite value in float image");
    ImageTensor img;
    img.height_ = height;
    img.width_ = width;
    img.channels_ = channels;
    img.layout_ = layout;
    img.data_ = std::move(data);
    return img;
}

std::span<const std::uint8_t> ImageTensor::u8() const
{
    if (!is_u8())
        throw ConfigError("image is not in the 8-bit stage");
    return std::get<std::vector<std::uint8_t>>(data_);
}

std::span<const float> ImageTensor::f32() const
{
    if (is_u8())
        throw ConfigError("image is not in the float stage");
    return std::get<std::vector<float>>(data_);
}

float ImageTensor::at(std::size_t y, std::size_t x, std::size_t c) const
{
    const std::size_t idx = layout_ == PixelLayout::interleaved ? (y * width_ + x) * channels_ + c
                                                                : (c * height_ + y) * width_ + x;
    if (is_u8())
        return static_cast<float>(std::get<std::vector<std::uint8_t>>(data_)[idx]);
    return std::get<std::vector<float>>(data_)[idx];
}

std::string_view to_string(ResizeMode mode)
{
    return mode == ResizeMode::resize_bilinear ? "resize-bilinear" : "fit-width-pad-height";
}

ResizeMode parse_resize_mode(std::string_view text)
{
    if (text == "resize-bilinear")
        return ResizeMode::resize_bilinear;
    if (text == "fit-width-pad-height")
        return ResizeMode::fit_width_pad_height;
    throw ConfigError("unknown preprocessing mode '" + std::string(text) +
                      "' (expected resize-bilinear or fit-width-pad-height)");
}

void PreprocessSpec::validate() const
{
    if (target_side == 0)
        throw ConfigError("preprocess target_side must be positive");
    for (float s : std)
        if (!(s > 0.0f))
            throw ConfigError("preprocess std components must be positive");
}

std::string PreprocessSpec::canonical() const
{
    std::ostringstream os;
    os.precision(9);
    os << to_string(mode) << ';' << target_side;
    for (float m : mean)
        os << ';' << m;
    for (float s : std)
        os << ';' << s;
    return os.str();
}

ImageTensor to_float(const ImageTensor& img)
{
    if (!img.is_u8())
        return img;
    const auto src = img.u8();
    std::vector<float> out(src.begin(), src.end());
    return ImageTensor::from_f32(img.height(), img.width(), img.channels(), std::move(out));
}

namespace {

struct Tap {
    std::size_t lo;
    std::size_t hi;
    double frac;
};

std::vector<Tap> taps(std::size_t in, std::size_t out)
{
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
        double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
        if (src < 0.0)
            src = 0.0;
        auto lo = static_cast<std::size_t>(std::floor(src));
        lo = std::min(lo, in - 1);
        t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return t;
}

/// Copy `band` (interleaved) into a zero canvas at (top, left).
ImageTensor place_on_canvas(const ImageTensor& band, std::size_t side, std::size_t top, std::size_t left)
{
    const std::size_t c = band.channels();
    auto blit = [&](auto& canvas, auto src) {
        for (std::size_t y = 0; y < band.height(); ++y)
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(y * band.width() * c), band.width() * c,
                        canvas.begin() + static_cast<std::ptrdiff_t>(((top + y) * side + left) * c));
    };
    if (band.is_u8()) {
        std::vector<std::uint8_t> canvas(side * side * c, 0);
        blit(canvas, band.u8());
        return ImageTensor::from_u8(side, side, c, std::move(canvas));
    }
    std::vector<float> canvas(side * side * c, 0.0f);
    blit(canvas, band.f32());
    return ImageTensor::from_f32(side, side, c, std::move(canvas));
}

std::size_t scaled_extent(std::size_t extent, std::size_t target, std::size_t reference)
{
    const auto v = static_cast<std::size_t>(
        std::llround(static_cast<double>(extent) * static_cast<double>(target) / static_cast<double>(reference)));
    return std::clamp<std::size_t>(v, 1, target);
}

} // namespace

ImageTensor resize_bilinear(const ImageTensor& img, std::size_t out_h, std::size_t out_w)
{
    if (out_h == 0 || out_w == 0)
        throw ConfigError("resize_bilinear: target size must be at least 1x1");
    if (img.size() == 0)
        throw ConfigError("resize_bilinear: empty source image");
    if (img.layout() != PixelLayout::interleaved)
        throw ConfigError("resize_bilinear: expects an interleaved raster");
    if (out_h == img.height() && out_w == img.width())
        return img;

    const std::size_t c = img.channels();
    const auto ty = taps(img.height(), out_h);
    const auto tx = taps(img.width(), out_w);
    std::vector<float> out(out_h * out_w * c);
    for (std::size_t y = 0; y < out_h; ++y) {
        const auto& [y0, y1, fy] = ty[y];
        for (std::size_t x = 0; x < out_w; ++x) {
            const auto& [x0, x1, fx] = tx[x];
            for (std::size_t k = 0; k < c; ++k) {
                const double top = (1.0 - fx) * img.at(y0, x0, k) + fx * img.at(y0, x1, k);
                const double bottom = (1.0 - fx) * img.at(y1, x0, k) + fx * img.at(y1, x1, k);
                out[(y * out_w + x) * c + k] = static_cast<float>((1.0 - fy) * top + fy * bottom);
            }
        }
    }
    if (!img.is_u8())
        return ImageTensor::from_f32(out_h, out_w, c, std::move(out));

    std::vector<std::uint8_t> quantized(out.size());
    std::transform(out.begin(), out.end(), quantized.begin(), [](float v) {
        return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    });
    return ImageTensor::from_u8(out_h, out_w, c, std::move(quantized));
}

ImageTensor fit_width_pad_height(const ImageTensor& img, std::size_t target)
{
    if (target == 0)
        throw ConfigError("fit_width_pad_height: target must be positive");
    if (img.height() == img.width())
        return resize_bilinear(img, target, target);
    if (img.width() > img.height()) {
        const std::size_t band_h = scaled_extent(img.height(), target, img.width());
        const auto band = resize_bilinear(img, band_h, target);
        return place_on_canvas(band, target, (target - band_h) / 2, 0);
    }
    const std::size_t band_w = scaled_extent(img.width(), target, img.height());
    const auto band = resize_bilinear(img, target, band_w);
    return place_on_canvas(band, target, 0, (target - band_w) / 2);
}

ImageTensor to_model_input(const ImageTensor& img, const PreprocessSpec& spec)
{
    spec.validate();
    if (img.height() != spec.target_side || img.width() != spec.target_side || img.channels() != 3 ||
        img.layout() != PixelLayout::interleaved)
        throw ConfigError("to_model_input: expected an interleaved " + std::to_string(spec.target_side) + "x" +
                          std::to_string(spec.target_side) + " RGB image, got " + std::to_string(img.height()) +
                          "x" + std::to_string(img.width()) + "x" + std::to_string(img.channels()));
    const std::size_t h = img.height();
    const std::size_t w = img.width();
    std::vector<float> out(3 * h * w);
    for (std::size_t c = 0; c < 3; ++c) {
        const float mean = spec.mean[c];
        const float inv_std = 1.0f / spec.std[c];
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out[(c * h + y) * w + x] = (img.at(y, x, c) / 255.0f - mean) * inv_std;
    }
    return ImageTensor::from_f32(h, w, 3, std::move(out), PixelLayout::planar);
}

ImageTensor preprocess(const ImageTensor& decoded, const PreprocessSpec& spec)
{
    spec.validate();
    const auto f = to_float(decoded);
    const auto geometric = spec.mode == ResizeMode::resize_bilinear
                               ? resize_bilinear(f, spec.target_side, spec.target_side)
                               : fit_width_pad_height(f, spec.target_side);
    return to_model_input(geometric, spec);
}

void write_tensor_dump(const std::filesystem::path& path, const ImageTensor& planar)
{
    if (planar.is_u8() || planar.layout() != PixelLayout::planar)
        throw ConfigError("tensor dump expects a planar float tensor");
    const auto values = planar.f32();
    const std::size_t plane = planar.height() * planar.width();
    std::vector<std::byte> out;
    out.reserve(planar.channels() * (8 + plane * 4));
    auto append = [&out](const void* p, std::size_t n) {
        const auto* b = static_cast<const std::byte*>(p);
        out.insert(out.end(), b, b + n);
    };
    const auto h = static_cast<std::uint32_t>(planar.height());
    const auto w = static_cast<std::uint32_t>(planar.width());
    for (std::size_t c = 0; c < planar.channels(); ++c) {
        append(&h, 4);
        append(&w, 4);
        append(values.data() + c * plane, plane * sizeof(float));
    }
    write_file_bytes(path, out);
}

} // namespace dinoprobe
