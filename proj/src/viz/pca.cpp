#include "dinoprobe/pca.hpp"

#include "dinoprobe/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dinoprobe {

namespace {

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

/// Applies the plane rotation [c -s; s c] to the pair (x, y) elementwise.
void rotate(std::span<double> x, std::span<double> y, double c, double s)
{
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

} // namespace

std::vector<double> PCAProjection::explained_ratio() const
{
    std::vector<double> out(explained_variance);
    for (auto& v : out)
        v /= total_variance;
    return out;
}

QrResult householder_qr(MatrixD a, bool want_q)
{
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m < n)
        throw ConfigError("householder_qr needs rows >= cols");
    // Work on columns stored as rows.
    MatrixD t = a.transposed();
    std::vector<std::vector<double>> reflectors(n); // empty = identity
    for (std::size_t j = 0; j < n; ++j) {
        auto col = t.row(j).subspan(j);
        const double norm = std::sqrt(dot(col, col));
        if (norm == 0.0)
            continue;
        const double alpha = col[0] > 0 ? -norm : norm;
        std::vector<double> v(col.begin(), col.end());
        v[0] -= alpha;
        const double vv = dot(v, v);
        if (vv == 0.0)
            continue;
        for (std::size_t c = j; c < n; ++c) {
            auto target = t.row(c).subspan(j);
            const double f = 2.0 * dot(v, target) / vv;
            for (std::size_t i = 0; i < v.size(); ++i)
                target[i] -= f * v[i];
        }
        for (auto& x : v)
            x /= std::sqrt(vv); // unit reflector: H = I - 2 v v^T
        reflectors[j] = std::move(v);
    }
    QrResult out;
    out.r = MatrixD(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = i; c < n; ++c)
            out.r(i, c) = t(c, i);
    if (want_q) {
        // Q = H_0 ... H_{n-1} applied to the first n unit vectors.
        MatrixD qt(n, m);
        for (std::size_t c = 0; c < n; ++c) {
            auto col = qt.row(c);
            col[c] = 1.0;
            for (std::size_t j = n; j-- > 0;) {
                const auto& v = reflectors[j];
                if (v.empty())
                    continue;
                auto sub = col.subspan(j);
                const double f = 2.0 * dot(v, sub);
                for (std::size_t i = 0; i < v.size(); ++i)
                    sub[i] -= f * v[i];
            }
        }
        out.q = qt.transposed();
    }
    return out;
}

SvdResult jacobi_svd(MatrixD a)
{
    const std::size_t n = a.cols();
    MatrixD t = a.transposed(); // column j of `a` is row j here
    MatrixD vt(n, n);           // row j = column j of V
    for (std::size_t i = 0; i < n; ++i)
        vt(i, i) = 1.0;
    constexpr double tol = 1e-15;
    constexpr int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double alpha = dot(t.row(i), t.row(i));
                const double beta = dot(t.row(j), t.row(j));
                const double gamma = dot(t.row(i), t.row(j));
                if (alpha == 0.0 || beta == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta))
                    continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double tan = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + tan * tan);
                const double s = c * tan;
                rotate(t.row(i), t.row(j), c, s);
                rotate(vt.row(i), vt.row(j), c, s);
            }
        }
        if (!rotated)
            break;
    }
    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j)
        sigma[j] = std::sqrt(dot(t.row(j), t.row(j)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });
    SvdResult out{std::vector<double>(n), MatrixD(n, n)};
    for (std::size_t r = 0; r < n; ++r) {
        out.singular_values[r] = sigma[order[r]];
        for (std::size_t i = 0; i < n; ++i)
            out.v(i, r) = vt(order[r], i);
    }
    return out;
}

PCAProjection pca_fit(const MatrixF& x, std::size_t k)
{
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (n < 2)
        throw ConfigError("PCA needs at least two samples");
    if (k == 0 || k > std::min(n - 1, d))
        throw ConfigError("PCA with " + std::to_string(k) + " components needs 1 <= k <= min(n - 1, d) = " +
                          std::to_string(std::min(n - 1, d)));
    PCAProjection p;
    p.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            p.mean[j] += x(i, j);
    for (auto& m : p.mean)
        m /= static_cast<double>(n);
    MatrixD centred(n, d);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double v = x(i, j) - p.mean[j];
            centred(i, j) = v;
            total += v * v;
        }
    p.total_variance = total / static_cast<double>(n);
    if (!(p.total_variance > 0.0))
        throw NumericError("PCA input has zero variance");

    MatrixD v; // d x min(n, d), right singular vectors of the centred data as columns
    std::vector<double> sigma;
    if (n >= d) {
        auto svd = jacobi_svd(householder_qr(std::move(centred), false).r);
        v = std::move(svd.v);
        sigma = std::move(svd.singular_values);
    } else {
        const auto qr = householder_qr(centred.transposed(), true);
        auto svd = jacobi_svd(qr.r.transposed());
        sigma = std::move(svd.singular_values);
        v = MatrixD(d, n);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t c = 0; c < n; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    s += qr.q(i, j) * svd.v(j, c);
                v(i, c) = s;
            }
    }
    const SvdResult svd{std::move(sigma), std::move(v)};
    p.components = MatrixD(k, d);
    p.explained_variance.resize(k);
    for (std::size_t r = 0; r < k; ++r) {
        const double s = svd.singular_values[r];
        p.explained_variance[r] = s * s / static_cast<double>(n);
        std::size_t peak = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(svd.v(j, r)) > std::abs(svd.v(peak, r)))
                peak = j;
        const double sign = svd.v(peak, r) < 0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < d; ++j)
            p.components(r, j) = sign * svd.v(j, r);
    }
    return p;
}

MatrixD pca_transform(const PCAProjection& p, const MatrixF& x)
{
    if (x.cols() != p.input_dim())
        throw ConfigError("PCA expects " + std::to_string(p.input_dim()) + " columns, got " + std::to_string(x.cols()));
    MatrixD out(x.rows(), p.k());
    std::vector<double> row(p.input_dim());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < row.size(); ++j)
            row[j] = x(i, j) - p.mean[j];
        for (std::size_t r = 0; r < p.k(); ++r)
            out(i, r) = dot(row, p.components.row(r));
    }
    return out;
}

MatrixD pca_reconstruct(const PCAProjection& p, const MatrixD& scores)
{
    if (scores.cols() != p.k())
        throw ConfigError("score matrix has " + std::to_string(scores.cols()) + " columns, projection has " +
                          std::to_string(p.k()));
    MatrixD out(scores.rows(), p.input_dim());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        auto row = out.row(i);
        std::copy(p.mean.begin(), p.mean.end(), row.begin());
        for (std::size_t r = 0; r < p.k(); ++r) {
            const auto comp = p.components.row(r);
            for (std::size_t j = 0; j < row.size(); ++j)
                row[j] += scores(i, r) * comp[j];
        }
    }
    return out;
}

MatrixD class_centroids(const MatrixD& scores, std::span<const int> labels, std::size_t classes)
{
    if (labels.size() != scores.rows())
        throw ConfigError("class_centroids: label count differs from score rows");
    MatrixD sum(classes, scores.cols());
    std::vector<std::size_t> count(classes, 0);
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            continue;
        const auto c = static_cast<std::size_t>(labels[i]);
        ++count[c];
        for (std::size_t j = 0; j < scores.cols(); ++j)
            sum(c, j) += scores(i, j);
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (count[c] == 0)
            throw DataError("class_centroids: class " + std::to_string(c) + " has no samples");
        for (std::size_t j = 0; j < scores.cols(); ++j)
            sum(c, j) /= static_cast<double>(count[c]);
    }
    return sum;
}

} // namespace dinoprobe
