#include "dinoprobe/error.hpp"
#include "dinoprobe/image.hpp"
#include "dinoprobe/tensor_file.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
// jpeglib.h needs size_t/FILE declared first
#include <jpeglib.h>

namespace dinoprobe {

namespace {

bool has_png_signature(std::span<const std::byte> b)
{
    static constexpr unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool has_jpeg_signature(std::span<const std::byte> b)
{
    return b.size() >= 3 && b[0] == std::byte{0xff} && b[1] == std::byte{0xd8} && b[2] == std::byte{0xff};
}

ImageTensor decode_png(std::span<const std::byte> bytes, const std::string& origin)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw DataError("cannot decode PNG " + origin + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw DataError("cannot decode PNG " + origin + ": " + msg);
    }
    return ImageTensor::from_u8(image.height, image.width, 3, std::move(pixels));
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

extern "C" void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, mgr->message);
    std::longjmp(mgr->jump, 1);
}

// Corrupt-data warnings (e.g. premature end of stream) are treated as errors.
extern "C" void jpeg_record_warning(j_common_ptr cinfo, int level)
{
    if (level < 0) {
        auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
        if (mgr->base.num_warnings++ == 0)
            (*cinfo->err->format_message)(cinfo, mgr->message);
    }
}

// Only trivially-destructible state may live across setjmp; the caller owns
// the output buffer.
bool decode_jpeg_raw(std::span<const std::byte> bytes, std::vector<std::uint8_t>& pixels, std::size_t& height,
                     std::size_t& width, std::string& error)
{
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    err.base.emit_message = jpeg_record_warning;
    err.message[0] = '\0';
    if (setjmp(err.jump)) {
        error = err.message;
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
                 static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    const bool gray = cinfo.num_components == 1;
    cinfo.out_color_space = gray ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    height = cinfo.output_height;
    width = cinfo.output_width;
    pixels.assign(height * width * 3, 0);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
        JSAMPROW rows[1] = {row};
        jpeg_read_scanlines(&cinfo, rows, 1);
        if (gray) {
            // expand in place from the back: g -> g g g
            for (std::size_t x = width; x-- > 0;) {
                const unsigned char g = row[x];
                row[3 * x] = row[3 * x + 1] = row[3 * x + 2] = g;
            }
        }
    }
    jpeg_finish_decompress(&cinfo);
    const bool clean = err.base.num_warnings == 0;
    if (!clean)
        error = err.message;
    jpeg_destroy_decompress(&cinfo);
    return clean;
}

} // namespace

ImageTensor decode_image(std::span<const std::byte> bytes, std::string_view origin)
{
    const std::string where(origin);
    if (has_png_signature(bytes))
        return decode_png(bytes, where);
    if (has_jpeg_signature(bytes)) {
        std::vector<std::uint8_t> pixels;
        std::size_t h = 0;
        std::size_t w = 0;
        std::string error;
        if (!decode_jpeg_raw(bytes, pixels, h, w, error))
            throw DataError("cannot decode JPEG " + where + ": " + error);
        return ImageTensor::from_u8(h, w, 3, std::move(pixels));
    }
    throw DataError("cannot decode " + where + ": not a PNG or JPEG file");
}

ImageTensor load_image(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    return decode_image(bytes, path.string());
}

} // namespace dinoprobe
