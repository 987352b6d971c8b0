#pragma once

#include "dinoprobe/matrix.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dinoprobe {

/// Class colours, assigned by label index and repeated after the last.
const std::vector<std::string_view>& class_palette();

/// Writes <stem>.csv ("sample_id,label,pc0,pc1") and <stem>.svg (800x600
/// scatter, one colour per class, legend). Throws DataError when there are
/// no rows or no classes, ConfigError when scores have fewer than 2 columns.
void emit_scatter_2d(const MatrixD& scores, std::span<const int> labels, std::span<const std::string> class_names,
                     std::span<const std::string> sample_ids, const std::filesystem::path& stem,
                     const std::string& title = {});

struct Density1D {
    std::vector<double> edges;               ///< bins + 1, shared by all classes
    std::vector<std::vector<std::size_t>> counts; ///< per class, per bin
    /// Per class, counts divided by the class total (each sums to 1).
    std::vector<std::vector<double>> normalized() const;
    /// Sum over bins of the smallest normalized class frequency: 0 for
    /// disjoint classes, 1 for identical histograms.
    double overlap() const;
};

/// Histograms over one shared equal-width grid spanning all values.
/// Throws ConfigError when bins < 2, DataError without values or classes.
Density1D density_1d(std::span<const double> values, std::span<const int> labels, std::size_t classes,
                     std::size_t bins);

/// Writes <stem>.csv ("bin_lo,bin_hi,<class>...", raw counts) and <stem>.svg
/// (normalized step histograms). Returns the densities.
Density1D emit_density_1d(std::span<const double> values, std::span<const int> labels,
                          std::span<const std::string> class_names, std::size_t bins, const std::filesystem::path& stem,
                          const std::string& title = {});

} // namespace dinoprobe
