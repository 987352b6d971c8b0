#include "dinoprobe/embeddings.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/log.hpp"
#include "dinoprobe/parallel.hpp"
#include "dinoprobe/tensor_file.hpp"
#include "dinoprobe/text.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace dinoprobe {

namespace fs = std::filesystem;

namespace {

constexpr const char* kHashPrefix = "content_hash:";

std::string join(const std::vector<std::string>& items)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i)
        out += (i ? "\n" : "") + items[i];
    return out;
}

std::vector<std::string> class_list(const std::string& joined)
{
    return joined.empty() ? std::vector<std::string>{} : text::lines(joined);
}

} // namespace

void EmbeddingSet::validate() const
{
    if (labels.size() != sample_ids.size() || vectors.rows() != sample_ids.size())
        throw DataError("embedding set: row counts disagree");
    if (size() > 0 && vectors.cols() != dim)
        throw DataError("embedding set: vector width differs from dim");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!ids.insert(sample_ids[i]).second)
            throw DataError("embedding set: duplicate sample id '" + sample_ids[i] + "'");
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_names.size())
            throw DataError("embedding set: label out of range for '" + sample_ids[i] + "'");
    }
    for (float v : vectors.values())
        if (!std::isfinite(v))
            throw NumericError("embedding set: non-finite value");
}

EmbeddingSet EmbeddingSet::subset(const std::vector<std::size_t>& rows) const
{
    EmbeddingSet out;
    out.model_tag = model_tag;
    out.dim = dim;
    out.class_names = class_names;
    out.vectors = MatrixF(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.sample_ids.push_back(sample_ids.at(rows[r]));
        out.labels.push_back(labels.at(rows[r]));
        std::copy_n(vectors.row(rows[r]).begin(), dim, out.vectors.row(r).begin());
    }
    return out;
}

fs::path embedding_cache_path(const fs::path& cache_dir, const std::string& model_tag, const PreprocessSpec& preprocess)
{
    return cache_dir / (model_tag + "-" + hex64(fnv1a64(preprocess.canonical())) + ".dpt");
}

ExtractResult extract_embeddings(const DatasetManifest& manifest, const VisionTransformer& model,
                                 const std::string& model_tag, const fs::path& cache_dir,
                                 const ExtractOptions& options)
{
    ExtractResult result;
    const std::size_t dim = model.config().embed_dim;
    EmbeddingSet& set = result.embeddings;
    set.model_tag = model_tag;
    set.dim = dim;
    set.class_names = manifest.class_names;
    if (manifest.entries.empty()) {
        set.vectors = MatrixF(0, dim);
        return result;
    }
    manifest.preprocess.validate();

    const fs::path cache_path = embedding_cache_path(cache_dir, model_tag, manifest.preprocess);
    TensorFile cache;
    if (fs::exists(cache_path)) {
        cache = TensorFile::read(cache_path);
        if (cache.metadata()["model_tag"] != model_tag || cache.metadata()["preprocess"] != manifest.preprocess.canonical()) {
            log::warning("embedding cache " + cache_path.string() + " belongs to another model; rebuilding");
            cache = TensorFile{};
        }
    }

    const std::size_t n = manifest.entries.size();
    struct Slot {
        std::optional<std::vector<float>> vector;
        std::string hash;
        std::string error;
        bool computed = false;
    };
    std::vector<Slot> slots(n);

    parallel_for(n, options.jobs, [&](std::size_t i) {
        const auto& entry = manifest.entries[i];
        Slot& slot = slots[i];
        try {
            const auto bytes = read_file_bytes(entry.path);
            slot.hash = hex64(fnv1a64(bytes));
            const auto hit = cache.metadata().find(kHashPrefix + entry.sample_id);
            if (hit != cache.metadata().end() && hit->second == slot.hash && cache.contains(entry.sample_id)) {
                auto v = cache.f32(entry.sample_id);
                if (v.size() == dim) {
                    slot.vector = std::move(v);
                    return;
                }
            }
            const auto input = preprocess(decode_image(bytes, entry.path.string()), manifest.preprocess);
            slot.vector = model.forward_cls(input);
            slot.computed = true;
        } catch (const NumericError&) {
            throw;
        } catch (const Error& e) {
            slot.error = e.what();
        }
    });

    bool changed = false;
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& id = manifest.entries[i].sample_id;
        if (!slots[i].vector) {
            result.failures.push_back(id + ": " + slots[i].error);
            continue;
        }
        ok.push_back(i);
        if (slots[i].computed) {
            ++result.forward_passes;
            cache.put(id, {static_cast<std::int64_t>(dim)}, std::span<const float>(*slots[i].vector));
            cache.metadata()[kHashPrefix + id] = slots[i].hash;
            changed = true;
        } else {
            ++result.cache_hits;
        }
    }
    for (const auto& f : result.failures)
        log::warning("embedding failed for " + f);
    if (static_cast<double>(result.failures.size()) > options.max_failure_fraction * static_cast<double>(n))
        throw DataError(std::to_string(result.failures.size()) + " of " + std::to_string(n) +
                        " samples could not be embedded (first: " + result.failures.front() + ")");

    set.vectors = MatrixF(ok.size(), dim);
    for (std::size_t r = 0; r < ok.size(); ++r) {
        const auto& entry = manifest.entries[ok[r]];
        set.sample_ids.push_back(entry.sample_id);
        set.labels.push_back(static_cast<int>(manifest.label_index(entry.label)));
        std::copy(slots[ok[r]].vector->begin(), slots[ok[r]].vector->end(), set.vectors.row(r).begin());
    }
    if (changed) {
        cache.metadata()["model_tag"] = model_tag;
        cache.metadata()["preprocess"] = manifest.preprocess.canonical();
        cache.write(cache_path);
    }
    set.validate();
    return result;
}

void write_embeddings_csv(const EmbeddingSet& set, const fs::path& csv)
{
    std::string out = "sample_id,label";
    for (std::size_t j = 0; j < set.dim; ++j)
        out += ",e" + std::to_string(j);
    out += '\n';
    for (std::size_t i = 0; i < set.size(); ++i) {
        text::require_csv_safe(set.sample_ids[i]);
        out += set.sample_ids[i];
        out += ',';
        out += set.class_names.at(static_cast<std::size_t>(set.labels[i]));
        for (float v : set.vectors.row(i)) {
            out += ',';
            out += text::shortest(v);
        }
        out += '\n';
    }
    write_file_text(csv, out);
}

EmbeddingSet import_embeddings(const fs::path& csv, const DatasetManifest& manifest, const std::string& model_tag)
{
    const std::string where = csv.string();
    const auto rows = text::lines(text::read_text(where));
    if (rows.empty())
        throw DataError(where + ": empty embedding file");
    const auto header = text::split(rows[0]);
    if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label")
        throw DataError(where + ": header must start with 'sample_id,label,e0'");
    const std::size_t dim = header.size() - 2;
    for (std::size_t j = 0; j < dim; ++j)
        if (header[j + 2] != "e" + std::to_string(j))
            throw DataError(where + ": header column " + std::to_string(j + 3) + " should be 'e" + std::to_string(j) + "'");

    std::map<std::size_t, std::vector<float>> by_manifest_row;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (text::trim(rows[r]).empty())
            continue;
        const std::string at_row = where + ": row " + std::to_string(r + 1);
        const auto cells = text::split(rows[r]);
        if (cells.size() != dim + 2)
            throw DataError(at_row + " has " + std::to_string(cells.size()) + " fields, expected " +
                            std::to_string(dim + 2));
        const auto idx = manifest.find(cells[0]);
        if (!idx)
            throw DataError(at_row + ": unknown sample id '" + cells[0] + "'");
        if (manifest.entries[*idx].label != cells[1])
            throw DataError(at_row + ": label '" + cells[1] + "' disagrees with the manifest ('" +
                            manifest.entries[*idx].label + "')");
        if (by_manifest_row.contains(*idx))
            throw DataError(at_row + ": duplicate sample id '" + cells[0] + "'");
        std::vector<float> v(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            try {
                v[j] = text::parse_float(cells[j + 2]);
            } catch (const std::exception&) {
                throw DataError(at_row + ": column e" + std::to_string(j) + " is not a number");
            }
            if (!std::isfinite(v[j]))
                throw DataError(at_row + ": column e" + std::to_string(j) + " is not finite");
        }
        by_manifest_row.emplace(*idx, std::move(v));
    }

    EmbeddingSet set;
    set.model_tag = model_tag.empty() ? csv.stem().string() : model_tag;
    set.dim = dim;
    set.class_names = manifest.class_names;
    set.vectors = MatrixF(by_manifest_row.size(), dim);
    std::size_t r = 0;
    for (const auto& [idx, v] : by_manifest_row) {
        set.sample_ids.push_back(manifest.entries[idx].sample_id);
        set.labels.push_back(static_cast<int>(manifest.label_index(manifest.entries[idx].label)));
        std::copy(v.begin(), v.end(), set.vectors.row(r++).begin());
    }
    set.validate();
    return set;
}

void save_embeddings(const EmbeddingSet& set, const fs::path& path)
{
    TensorFile file;
    for (std::size_t i = 0; i < set.size(); ++i)
        file.put(set.sample_ids[i], {static_cast<std::int64_t>(set.dim)}, set.vectors.row(i));
    file.metadata()["model_tag"] = set.model_tag;
    file.metadata()["dim"] = std::to_string(set.dim);
    file.metadata()["classes"] = join(set.class_names);
    file.write(path);
}

EmbeddingSet load_embeddings(const fs::path& path, const DatasetManifest& manifest)
{
    const auto file = TensorFile::read(path);
    EmbeddingSet set;
    set.model_tag = file.meta("model_tag");
    set.dim = static_cast<std::size_t>(text::parse_int(file.meta("dim")));
    set.class_names = manifest.class_names;
    if (class_list(file.meta("classes")) != manifest.class_names)
        throw DataError(path.string() + ": class list differs from the manifest");
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        if (file.contains(manifest.entries[i].sample_id))
            rows.push_back(i);
    if (rows.size() != file.size())
        throw DataError(path.string() + ": contains sample ids missing from the manifest");
    set.vectors = MatrixF(rows.size(), set.dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& entry = manifest.entries[rows[r]];
        const auto v = file.f32(entry.sample_id);
        if (v.size() != set.dim)
            throw DataError(path.string() + ": tensor '" + entry.sample_id + "' has the wrong length");
        set.sample_ids.push_back(entry.sample_id);
        set.labels.push_back(static_cast<int>(manifest.label_index(entry.label)));
        std::copy(v.begin(), v.end(), set.vectors.row(r).begin());
    }
    set.validate();
    return set;
}

} // namespace dinoprobe
