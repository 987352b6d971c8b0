#include "dinoprobe/tensor_file.hpp"

#include "dinoprobe/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace dinoprobe {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

DType parse_dtype(const std::string& s, std::string_view origin, const std::string& name)
{
    if (s == "F32") return DType::f32;
    if (s == "F64") return DType::f64;
    if (s == "I32") return DType::i32;
    if (s == "I64") return DType::i64;
    throw IoError(std::string(origin) + ": tensor '" + name + "' has unsupported dtype " + s);
}

template <typename T>
void put_impl(std::map<std::string, TensorEntry>& tensors, const std::string& name, DType dtype,
              std::vector<std::int64_t> shape, std::span<const T> values)
{
    TensorEntry entry;
    entry.dtype = dtype;
    entry.shape = std::move(shape);
    if (entry.numel() != static_cast<std::int64_t>(values.size()))
        throw ConfigError("tensor '" + name + "': shape does not match value count");
    entry.bytes.resize(values.size_bytes());
    if (!values.empty())
        std::memcpy(entry.bytes.data(), values.data(), values.size_bytes());
    tensors[name] = std::move(entry);
}

template <typename T>
std::vector<T> typed_copy(const TensorEntry& e)
{
    std::vector<T> out(e.bytes.size() / sizeof(T));
    if (!out.empty())
        std::memcpy(out.data(), e.bytes.data(), out.size() * sizeof(T));
    return out;
}

} // namespace

std::string_view dtype_name(DType dtype)
{
    switch (dtype) {
    case DType::f32: return "F32";
    case DType::f64: return "F64";
    case DType::i32: return "I32";
    case DType::i64: return "I64";
    }
    return "?";
}

std::size_t dtype_size(DType dtype)
{
    switch (dtype) {
    case DType::f32:
    case DType::i32: return 4;
    case DType::f64:
    case DType::i64: return 8;
    }
    return 0;
}

std::int64_t TensorEntry::numel() const
{
    std::int64_t n = 1;
    for (auto d : shape)
        n *= d;
    return n;
}

TensorFile TensorFile::read(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    return parse(bytes, path.string());
}

TensorFile TensorFile::parse(std::span<const std::byte> blob, std::string_view origin)
{
    const std::string where(origin);
    if (blob.size() < 8)
        throw IoError(where + ": truncated tensor container (no header length)");
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, blob.data(), 8);
    if (header_len > blob.size() - 8)
        throw IoError(where + ": header length " + std::to_string(header_len) + " exceeds file size");

    const auto* header_begin = reinterpret_cast<const char*>(blob.data() + 8);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_begin, header_begin + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(where + ": malformed container header: " + e.what());
    }
    if (!header.is_object())
        throw IoError(where + ": container header is not a JSON object");

    const std::span<const std::byte> data = blob.subspan(8 + header_len);
    TensorFile file;
    for (const auto& [name, desc] : header.items()) {
        if (name == "__metadata__") {
            if (!desc.is_object())
                throw IoError(where + ": __metadata__ must be an object");
            for (const auto& [k, v] : desc.items()) {
                if (!v.is_string())
                    throw IoError(where + ": metadata value for '" + k + "' is not a string");
                file.metadata_[k] = v.get<std::string>();
            }
            continue;
        }
        try {
            TensorEntry entry;
            entry.dtype = parse_dtype(desc.at("dtype").get<std::string>(), origin, name);
            entry.shape = desc.at("shape").get<std::vector<std::int64_t>>();
            const auto offsets = desc.at("data_offsets").get<std::vector<std::uint64_t>>();
            if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > data.size())
                throw IoError(where + ": tensor '" + name + "' has out-of-range data_offsets");
            for (auto d : entry.shape)
                if (d < 0)
                    throw IoError(where + ": tensor '" + name + "' has a negative dimension");
            const auto expected = static_cast<std::uint64_t>(entry.numel()) * dtype_size(entry.dtype);
            if (offsets[1] - offsets[0] != expected)
                throw IoError(where + ": tensor '" + name + "' byte range does not match its shape");
            entry.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(offsets[0]),
                               data.begin() + static_cast<std::ptrdiff_t>(offsets[1]));
            file.tensors_.emplace(name, std::move(entry));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(where + ": bad descriptor for tensor '" + name + "': " + e.what());
        }
    }
    return file;
}

std::vector<std::byte> TensorFile::serialize() const
{
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, e] : tensors_) {
        header[name] = {{"dtype", dtype_name(e.dtype)},
                        {"shape", e.shape},
                        {"data_offsets", {offset, offset + e.bytes.size()}}};
        offset += e.bytes.size();
    }
    if (!metadata_.empty())
        header["__metadata__"] = metadata_;

    std::string text = header.dump();
    while ((text.size() % 8) != 0)
        text.push_back(' ');

    std::vector<std::byte> out(8 + text.size() + offset);
    const std::uint64_t n = text.size();
    std::memcpy(out.data(), &n, 8);
    std::memcpy(out.data() + 8, text.data(), text.size());
    auto* cursor = out.data() + 8 + text.size();
    for (const auto& [name, e] : tensors_) {
        if (!e.bytes.empty())
            std::memcpy(cursor, e.bytes.data(), e.bytes.size());
        cursor += e.bytes.size();
    }
    return out;
}

void TensorFile::write(const std::filesystem::path& path) const
{
    write_file_bytes(path, serialize());
}

void TensorFile::put(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values)
{
    put_impl(tensors_, name, DType::f32, std::move(shape), values);
}

void TensorFile::put(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> values)
{
    put_impl(tensors_, name, DType::f64, std::move(shape), values);
}

void TensorFile::put(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int32_t> values)
{
    put_impl(tensors_, name, DType::i32, std::move(shape), values);
}

void TensorFile::put(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int64_t> values)
{
    put_impl(tensors_, name, DType::i64, std::move(shape), values);
}

const TensorEntry& TensorFile::at(const std::string& name) const
{
    auto it = tensors_.find(name);
    if (it == tensors_.end())
        throw IoError("missing tensor '" + name + "'");
    return it->second;
}

std::vector<float> TensorFile::f32(const std::string& name) const
{
    const auto& e = at(name);
    if (e.dtype == DType::f32)
        return typed_copy<float>(e);
    if (e.dtype == DType::f64) {
        const auto wide = typed_copy<double>(e);
        return {wide.begin(), wide.end()};
    }
    throw IoError("tensor '" + name + "' is " + std::string(dtype_name(e.dtype)) + ", expected F32");
}

std::vector<double> TensorFile::f64(const std::string& name) const
{
    const auto& e = at(name);
    if (e.dtype != DType::f64)
        throw IoError("tensor '" + name + "' is " + std::string(dtype_name(e.dtype)) + ", expected F64");
    return typed_copy<double>(e);
}

std::vector<std::int32_t> TensorFile::i32(const std::string& name) const
{
    const auto& e = at(name);
    if (e.dtype != DType::i32)
        throw IoError("tensor '" + name + "' is " + std::string(dtype_name(e.dtype)) + ", expected I32");
    return typed_copy<std::int32_t>(e);
}

std::vector<std::int64_t> TensorFile::i64(const std::string& name) const
{
    const auto& e = at(name);
    if (e.dtype != DType::i64)
        throw IoError("tensor '" + name + "' is " + std::string(dtype_name(e.dtype)) + ", expected I64");
    return typed_copy<std::int64_t>(e);
}

std::string TensorFile::meta(const std::string& key) const
{
    auto it = metadata_.find(key);
    if (it == metadata_.end())
        throw IoError("container metadata has no key '" + key + "'");
    return it->second;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in)
        throw IoError("cannot open " + path.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> bytes(size);
    if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
        throw IoError("failed reading " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("failed writing " + path.string());
}

void write_file_text(const std::filesystem::path& path, std::string_view text)
{
    write_file_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed)
{
    std::uint64_t h = seed;
    for (auto b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed)
{
    return fnv1a64(std::as_bytes(std::span(text.data(), text.size())), seed);
}

std::string hex64(std::uint64_t value)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return s;
}

} // namespace dinoprobe
