#include "dinoprobe/cli.hpp"

#include "dinoprobe/config.hpp"
#include "dinoprobe/embeddings.hpp"
#include "dinoprobe/error.hpp"
#include "dinoprobe/experiment.hpp"
#include "dinoprobe/log.hpp"
#include "dinoprobe/parallel.hpp"
#include "dinoprobe/pca.hpp"
#include "dinoprobe/tensor_file.hpp"
#include "dinoprobe/text.hpp"
#include "dinoprobe/viz.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

namespace dinoprobe::cli {

namespace fs = std::filesystem;

namespace {

struct Invocation {
    std::string config;
    std::vector<std::string> overrides;
    std::size_t jobs = 0; // 0: logical CPUs
    std::string run_dir;
    bool quiet = false;
};

class Context {
public:
    Context(const Invocation& inv, std::string command, std::ostream& out, std::ostream& err)
        : settings(settings_schema()), command(std::move(command)), out(out), err_(err), quiet_(inv.quiet)
    {
        if (!inv.config.empty())
            settings.load_file(inv.config);
        for (const auto& o : inv.overrides) {
            settings.apply_override(o);
            const auto key = std::string(text::trim(o.substr(0, o.find('='))));
            note("setting " + key + " = " + settings.raw(key) + " (override)");
        }
        jobs = inv.jobs == 0 ? default_jobs() : inv.jobs;
        run_dir = inv.run_dir.empty() ? fresh_run_dir() : fs::path(inv.run_dir);
        fs::create_directories(run_dir);
        write_settings();
    }

    void note(const std::string& line) const
    {
        if (!quiet_)
            err_ << line << '\n';
    }

    fs::path output(const std::string& name) const { return run_dir / name; }

    Settings settings;
    std::string command;
    std::size_t jobs = 1;
    fs::path run_dir;
    std::ostream& out;

private:
    fs::path fresh_run_dir() const
    {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm utc{};
        gmtime_r(&now, &utc);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &utc);
        const fs::path parent = settings.raw("output.runs_dir");
        const std::string base = std::string(stamp) + "-" + settings.raw("output.tag");
        fs::path dir = parent / base;
        for (int i = 2; fs::exists(dir); ++i)
            dir = parent / (base + "-" + std::to_string(i));
        return dir;
    }

    /// Every effective value in the settings grammar, so the file can be fed
    /// back with --config to repeat the run.
    void write_settings() const
    {
        std::ostringstream s;
        s << "# dinoprobe " << command << ": effective settings\n";
        for (const auto& [key, value] : settings.effective()) {
            s << key << " = " << value;
            if (value.find('#') == std::string::npos)
                s << "  # " << settings.source(key);
            s << '\n';
        }
        write_file_text(output("settings.txt"), s.str());
    }

    std::ostream& err_;
    bool quiet_;
};

std::vector<std::string> class_order(const Settings& s) { return s.list("dataset.class_order"); }

DatasetManifest load_manifest(const Context& ctx)
{
    const auto& s = ctx.settings;
    const auto pre = preprocess_spec(s);
    DatasetManifest m = !s.raw("dataset.manifest").empty()
                            ? read_manifest_csv(s.raw("dataset.manifest"), pre, class_order(s))
                            : build_manifest(s.required("dataset.root"), pre, class_order(s));
    m.validate();
    ctx.note("manifest: " + std::to_string(m.entries.size()) + " samples, " + std::to_string(m.class_names.size()) +
             " classes");
    return m;
}

EmbeddingSet extract(const Context& ctx, const DatasetManifest& m)
{
    const auto& s = ctx.settings;
    const fs::path weights_path = s.required("model.weights");
    const WeightStore weights = WeightStore::load(weights_path);
    if (weights.config().image_side != m.preprocess.target_side)
        throw ConfigError("preprocess.side is " + std::to_string(m.preprocess.target_side) + " but " +
                          weights_path.string() + " expects " + std::to_string(weights.config().image_side));
    const VisionTransformer model(weights);
    ExtractOptions options;
    options.jobs = ctx.jobs;
    options.max_failure_fraction = s.number("embeddings.max_failure_fraction");
    auto result = extract_embeddings(m, model, s.raw("model.tag"), s.raw("embeddings.cache_dir"), options);
    for (const auto& f : result.failures)
        log::warning("skipped " + f);
    ctx.note("embeddings: " + std::to_string(result.forward_passes) + " computed, " +
             std::to_string(result.cache_hits) + " from cache, " + std::to_string(result.failures.size()) +
             " failed");
    return std::move(result.embeddings);
}

/// Imported CSV when embeddings.import is set, otherwise extraction through
/// the cache.
EmbeddingSet embeddings(const Context& ctx)
{
    const auto m = load_manifest(ctx);
    const auto& imported = ctx.settings.raw("embeddings.import");
    if (!imported.empty()) {
        auto set = import_embeddings(imported, m, ctx.settings.raw("model.tag"));
        ctx.note("embeddings: " + std::to_string(set.size()) + " imported from " + imported);
        return set;
    }
    return extract(ctx, m);
}

MatrixF rows_of(const MatrixF& x, std::span<const std::size_t> rows)
{
    MatrixF out(rows.size(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
    return out;
}

std::vector<int> labels_of(std::span<const int> y, std::span<const std::size_t> rows)
{
    std::vector<int> out;
    for (auto r : rows)
        out.push_back(y[r]);
    return out;
}

/// Features and split exactly as the experiment harness derives them.
struct Prepared {
    EmbeddingSet set;
    SplitIndices split;
    MatrixF features;
};

Prepared prepare(const Context& ctx)
{
    const auto cfg = experiment_config(ctx.settings);
    Prepared p{embeddings(ctx), {}, {}};
    p.set.validate();
    p.split = stratified_split(p.set.labels, p.set.class_names, cfg.split, cfg.master_seed);
    p.features = cfg.standardize ? standardize_columns(p.set.vectors, p.split.train) : p.set.vectors;
    return p;
}

std::string split_accuracy_csv(const TrainedClassifier& model, const Prepared& p)
{
    std::ostringstream s;
    s << "split,samples,accuracy\n";
    const std::pair<const char*, const std::vector<std::size_t>*> parts[] = {
        {"train", &p.split.train}, {"val", &p.split.val}, {"test", &p.split.test}};
    for (auto [name, rows] : parts) {
        s << name << ',' << rows->size() << ',';
        if (!rows->empty())
            s << text::fixed(accuracy(model, rows_of(p.features, *rows), labels_of(p.set.labels, *rows)), 6);
        s << '\n';
    }
    return s.str();
}

int cmd_manifest(Context& ctx)
{
    const auto m = load_manifest(ctx);
    std::map<std::string, std::size_t> counts;
    for (const auto& e : m.entries)
        ++counts[e.label];
    for (const auto& c : m.class_names)
        ctx.out << c << ": " << counts[c] << '\n';
    write_manifest_csv(m, ctx.output("manifest.csv"));
    ctx.out << "wrote " << ctx.output("manifest.csv").string() << '\n';
    return 0;
}

int cmd_extract(Context& ctx)
{
    const auto set = extract(ctx, load_manifest(ctx));
    write_embeddings_csv(set, ctx.output("embeddings.csv"));
    ctx.out << set.size() << " x " << set.dim << " embeddings -> " << ctx.output("embeddings.csv").string() << '\n';
    return 0;
}

int cmd_import(Context& ctx)
{
    const auto m = load_manifest(ctx);
    const auto set = import_embeddings(ctx.settings.required("embeddings.import"), m, ctx.settings.raw("model.tag"));
    save_embeddings(set, ctx.output("embeddings.dpt"));
    write_embeddings_csv(set, ctx.output("embeddings.csv"));
    ctx.out << set.size() << " x " << set.dim << " embeddings -> " << ctx.output("embeddings.dpt").string() << '\n';
    return 0;
}

int cmd_train(Context& ctx)
{
    const auto spec = classifier_spec(ctx.settings, parse_classifier_kind(ctx.settings.raw("classifier.kind")));
    const auto p = prepare(ctx);
    ctx.note("training " + std::string(to_string(spec.kind)) + " on " + std::to_string(p.split.train.size()) + " samples");
    const auto model = train(spec, rows_of(p.features, p.split.train), labels_of(p.set.labels, p.split.train),
                             p.set.class_names.size());
    auto file = model.serialize();
    file.metadata()["model_tag"] = p.set.model_tag;
    file.write(ctx.output("model.dpc"));
    const auto table = split_accuracy_csv(model, p);
    write_file_text(ctx.output("accuracy.csv"), table);
    ctx.out << table << "model -> " << ctx.output("model.dpc").string() << '\n';
    return 0;
}

int cmd_evaluate(Context& ctx)
{
    const fs::path path = ctx.settings.required("classifier.model");
    const auto model = TrainedClassifier::deserialize(TensorFile::read(path));
    const auto p = prepare(ctx);
    if (model.input_dim() != p.set.dim)
        throw DataError(path.string() + " expects " + std::to_string(model.input_dim()) +
                        "-dimensional embeddings, got " + std::to_string(p.set.dim));
    if (model.class_count() != p.set.class_names.size())
        throw DataError(path.string() + " was trained on " + std::to_string(model.class_count()) +
                        " classes, dataset has " + std::to_string(p.set.class_names.size()));
    const auto table = split_accuracy_csv(model, p);
    write_file_text(ctx.output("accuracy.csv"), table);
    ctx.out << table;
    return 0;
}

int report(Context& ctx, bool curve)
{
    auto cfg = experiment_config(ctx.settings);
    cfg.jobs = ctx.jobs;
    if (curve && cfg.sizes.empty())
        throw ConfigError("experiment.sizes is empty; curve needs at least one training-set size");
    const auto set = embeddings(ctx);
    ctx.note(std::string(curve ? "learning curve" : "experiment") + ": " + std::to_string(cfg.classifiers.size()) +
             " classifiers x " + std::to_string(cfg.repetitions) + " repetitions");
    const auto rep = curve ? learning_curve(set, cfg) : run_repeated(set, cfg);
    const auto written = emit_report(rep, ctx.output(curve ? "curve" : "report"));
    const auto markdown = report_markdown(rep);
    ctx.out << markdown.substr(0, markdown.find("\n## "));
    if (curve && cfg.sizes.size() > 1) {
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> trend;
        for (const auto& cell : rep.summary()) {
            trend[cell.classifier].first.push_back(static_cast<double>(cell.train_size));
            trend[cell.classifier].second.push_back(cell.mean);
        }
        ctx.out << '\n';
        for (const auto& [name, xy] : trend) {
            ctx.out << "spearman(size, accuracy) " << name << ": ";
            try {
                ctx.out << text::fixed(spearman(xy.first, xy.second), 3) << '\n';
            } catch (const NumericError&) {
                ctx.out << "undefined (constant accuracy)\n";
            }
        }
    }
    for (const auto& f : written)
        ctx.out << "wrote " << f.string() << '\n';
    return 0;
}

int cmd_pca(Context& ctx)
{
    const auto set = embeddings(ctx);
    set.validate();
    const std::size_t k = ctx.settings.count("pca.components");
    const auto proj = pca_fit(set.vectors, k);
    const auto scores = pca_transform(proj, set.vectors);
    const auto ratio = proj.explained_ratio();

    std::ostringstream summary;
    summary << "component,explained_variance,explained_ratio\n";
    for (std::size_t c = 0; c < k; ++c)
        summary << "pc" << c << ',' << text::shortest(proj.explained_variance[c]) << ','
                << text::fixed(ratio[c], 6) << '\n';
    write_file_text(ctx.output("pca_variance.csv"), summary.str());

    const std::size_t classes = set.class_names.size();
    const auto centroids = class_centroids(scores, set.labels, classes);
    std::ostringstream cs;
    cs << "label";
    for (std::size_t c = 0; c < k; ++c)
        cs << ",pc" << c;
    cs << '\n';
    for (std::size_t i = 0; i < classes; ++i) {
        cs << set.class_names[i];
        for (std::size_t c = 0; c < k; ++c)
            cs << ',' << text::shortest(centroids(i, c));
        cs << '\n';
    }
    write_file_text(ctx.output("pca_centroids.csv"), cs.str());

    const std::string source = set.model_tag.empty() ? std::string("embeddings") : set.model_tag;
    if (k >= 2)
        emit_scatter_2d(scores, set.labels, set.class_names, set.sample_ids, ctx.output("pca_scatter"),
                        source + " PCA");
    std::vector<double> pc0(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i)
        pc0[i] = scores(i, 0);
    const auto density = emit_density_1d(pc0, set.labels, set.class_names, ctx.settings.count("pca.bins"),
                                         ctx.output("pca_pc0"), source + " PC0");

    ctx.out << summary.str();
    if (classes >= 2) {
        std::vector<double> ordinal(classes), along(classes);
        for (std::size_t i = 0; i < classes; ++i) {
            ordinal[i] = static_cast<double>(i);
            along[i] = centroids(i, 0);
        }
        ctx.out << "centroid order along pc0, spearman: ";
        try {
            ctx.out << text::fixed(spearman(ordinal, along), 3) << '\n';
        } catch (const NumericError&) {
            ctx.out << "undefined\n";
        }
    }
    ctx.out << "pc0 histogram overlap: " << text::fixed(density.overlap(), 3) << '\n';
    ctx.out << "wrote " << ctx.run_dir.string() << '\n';
    return 0;
}

std::string settings_footer()
{
    return "Settings (set in a --config file as 'key = value', or with --set key=value):\n" +
           Settings(settings_schema()).help_text();
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Frozen ViT embeddings probed with shallow classifiers.", "dinoprobe"};
    app.footer(settings_footer());
    app.require_subcommand(1, 1);
    Invocation inv;
    app.add_option("-c,--config", inv.config, "settings file");
    app.add_option("-s,--set", inv.overrides, "override one setting, key=value (repeatable)")->allow_extra_args(false);
    app.add_option("-j,--jobs", inv.jobs, "worker threads (default: logical CPUs)");
    app.add_option("--run-dir", inv.run_dir, "output directory (default: <output.runs_dir>/<timestamp>-<output.tag>)");
    app.add_flag("-q,--quiet", inv.quiet, "no progress lines");

    using Command = std::function<int(Context&)>;
    const std::vector<std::tuple<std::string, std::string, Command>> commands = {
        {"manifest", "scan dataset.root and write manifest.csv", cmd_manifest},
        {"extract", "embed every image with the ViT, write embeddings.csv", cmd_extract},
        {"import", "validate embeddings.import against the dataset", cmd_import},
        {"train", "fit classifier.kind on the training split, save model.dpc", cmd_train},
        {"evaluate", "score classifier.model on every split", cmd_evaluate},
        {"experiment", "repeated runs of experiment.classifiers, write report.md/.csv",
         [](Context& c) { return report(c, false); }},
        {"curve", "learning curve over experiment.sizes, write curve.md/.csv",
         [](Context& c) { return report(c, true); }},
        {"pca", "principal components, scatter and PC0 density plots", cmd_pca},
    };
    for (const auto& [name, help, fn] : commands)
        app.add_subcommand(name, help)->fallthrough();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(ErrorCategory::config);
    }

    const std::string chosen = app.get_subcommands().front()->get_name();
    try {
        log::set_level(inv.quiet ? log::Level::quiet : log::Level::warning);
        Context ctx(inv, chosen, out, err);
        for (const auto& [name, help, fn] : commands)
            if (name == chosen)
                return fn(ctx);
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(e.category());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorCategory::io);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace dinoprobe::cli
