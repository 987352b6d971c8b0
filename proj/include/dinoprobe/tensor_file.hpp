#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dinoprobe {

enum class DType { f32, f64, i32, i64 };

std::string_view dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

struct TensorEntry {
    DType dtype = DType::f32;
    std::vector<std::int64_t> shape;
    std::vector<std::byte> bytes;

    std::int64_t numel() const;
};

/// Named-tensor container:
///
///   [u64 LE header length N][N bytes UTF-8 JSON][raw LE tensor bytes]
///
/// The JSON maps tensor-name -> {"dtype": "F32", "shape": [...],
/// "data_offsets": [begin, end)} with offsets relative to the first byte
/// after the header. An optional "__metadata__" object holds string pairs.
/// Serialization is deterministic: tensors are laid out in name order and
/// the header is padded with spaces to a multiple of 8 bytes.
class TensorFile {
public:
    static TensorFile read(const std::filesystem::path& path);
    static TensorFile parse(std::span<const std::byte> blob, std::string_view origin);

    void write(const std::filesystem::path& path) const;
    std::vector<std::byte> serialize() const;

    void put(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values);
    void put(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> values);
    void put(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int32_t> values);
    void put(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int64_t> values);

    bool contains(const std::string& name) const { return tensors_.contains(name); }
    const TensorEntry& at(const std::string& name) const;
    std::size_t size() const { return tensors_.size(); }
    const std::map<std::string, TensorEntry>& tensors() const { return tensors_; }

    /// Typed copies. Throw IoError naming the tensor on dtype mismatch; f32
    /// accepts f64 storage and narrows.
    std::vector<float> f32(const std::string& name) const;
    std::vector<double> f64(const std::string& name) const;
    std::vector<std::int32_t> i32(const std::string& name) const;
    std::vector<std::int64_t> i64(const std::string& name) const;

    std::map<std::string, std::string>& metadata() { return metadata_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }
    std::string meta(const std::string& key) const;

private:
    std::map<std::string, TensorEntry> tensors_;
    std::map<std::string, std::string> metadata_;
};

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);

/// FNV-1a 64-bit, used for cache keys.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

} // namespace dinoprobe
