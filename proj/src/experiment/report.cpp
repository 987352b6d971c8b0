#include "dinoprobe/error.hpp"
#include "dinoprobe/experiment.hpp"
#include "dinoprobe/tensor_file.hpp"
#include "dinoprobe/text.hpp"

#include <algorithm>

namespace dinoprobe {

namespace {

constexpr const char* csv_banner = "# dinoprobe experiment report";
constexpr const char* csv_header = "classifier,train_size,repetition,seed,val_accuracy,test_accuracy,error";

std::string optional_number(const std::optional<double>& v) { return v ? text::shortest(*v) : ""; }

} // namespace

std::string format_cell(double mean, std::optional<double> std)
{
    std::string out = text::fixed(mean, 3);
    if (std)
        out += " ± " + text::fixed(*std, 3);
    return out;
}

std::string report_markdown(const ExperimentReport& report)
{
    if (report.runs.empty())
        throw ConfigError("cannot emit an empty report");
    const auto cells = report.summary();
    std::vector<std::size_t> sizes;
    std::vector<std::string> classifiers;
    for (const auto& c : cells) {
        if (std::find(sizes.begin(), sizes.end(), c.train_size) == sizes.end())
            sizes.push_back(c.train_size);
        if (std::find(classifiers.begin(), classifiers.end(), c.classifier) == classifiers.end())
            classifiers.push_back(c.classifier);
    }
    const bool curve = report.metadata.count("mode") && report.metadata.at("mode") == "learning-curve";
    std::string out = "| Classifier |";
    for (auto n : sizes)
        out += curve ? " n = " + std::to_string(n) + " |" : " Test accuracy |";
    out += "\n|---|";
    for (std::size_t i = 0; i < sizes.size(); ++i)
        out += "---|";
    out += "\n";
    for (const auto& name : classifiers) {
        out += "| " + name + " |";
        for (auto n : sizes) {
            const auto it = std::find_if(cells.begin(), cells.end(),
                                         [&](const CellSummary& c) { return c.classifier == name && c.train_size == n; });
            std::string cell = "n/a";
            if (it != cells.end() && it->completed > 0) {
                cell = format_cell(it->mean, it->std);
                if (it->excluded > 0)
                    cell += " (" + std::to_string(it->excluded) + " excluded)";
            }
            out += " " + cell + " |";
        }
        out += "\n";
    }
    if (!report.metadata.empty()) {
        out += "\n## Settings\n\n";
        for (const auto& [k, v] : report.metadata)
            out += "- " + k + ": " + v + "\n";
    }
    return out;
}

std::string report_csv(const ExperimentReport& report)
{
    if (report.runs.empty())
        throw ConfigError("cannot emit an empty report");
    std::string out = std::string(csv_banner) + "\n";
    for (const auto& [k, v] : report.metadata)
        out += "# " + k + "=" + v + "\n";
    out += std::string(csv_header) + "\n";
    for (const auto& r : report.runs) {
        out += r.classifier + "," + std::to_string(r.train_size) + "," + std::to_string(r.repetition) + "," +
               std::to_string(r.seed) + "," + optional_number(r.val_accuracy) + "," +
               optional_number(r.test_accuracy) + "," + r.error + "\n";
    }
    return out;
}

ExperimentReport parse_report_csv(const std::string& content)
{
    ExperimentReport report;
    bool header_seen = false;
    std::size_t line_no = 0;
    for (const auto& line : text::lines(content)) {
        ++line_no;
        const auto where = "report line " + std::to_string(line_no) + ": ";
        if (line.empty())
            continue;
        if (line[0] == '#') {
            if (line == csv_banner)
                continue;
            const auto eq = line.find('=');
            if (line.rfind("# ", 0) != 0 || eq == std::string::npos)
                throw DataError(where + "malformed metadata comment");
            report.metadata[line.substr(2, eq - 2)] = line.substr(eq + 1);
            continue;
        }
        if (!header_seen) {
            if (line != csv_header)
                throw DataError(where + "unexpected header");
            header_seen = true;
            continue;
        }
        const auto f = text::split(line);
        if (f.size() != 7)
            throw DataError(where + "expected 7 fields, found " + std::to_string(f.size()));
        RunRecord r;
        try {
            r.classifier = f[0];
            r.train_size = static_cast<std::size_t>(text::parse_int(f[1]));
            r.repetition = static_cast<std::size_t>(text::parse_int(f[2]));
            r.seed = std::stoull(f[3]);
            if (!f[4].empty())
                r.val_accuracy = text::parse_double(f[4]);
            if (!f[5].empty())
                r.test_accuracy = text::parse_double(f[5]);
        } catch (const std::exception&) {
            throw DataError(where + "malformed number");
        }
        r.error = f[6];
        report.runs.push_back(std::move(r));
    }
    if (!header_seen)
        throw DataError("report has no header line");
    return report;
}

std::vector<std::filesystem::path> emit_report(const ExperimentReport& report, const std::filesystem::path& stem)
{
    auto md = stem;
    md += ".md";
    auto csv = stem;
    csv += ".csv";
    write_file_text(md, report_markdown(report));
    write_file_text(csv, report_csv(report));
    return {md, csv};
}

} // namespace dinoprobe
