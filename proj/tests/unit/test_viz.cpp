#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../support/temp_dir.hpp"

#include "dinoprobe/error.hpp"
#include "dinoprobe/pca.hpp"
#include "dinoprobe/rng.hpp"
#include "dinoprobe/tensor_file.hpp"
#include "dinoprobe/text.hpp"
#include "dinoprobe/viz.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dinoprobe;
using testing_support::TempDir;

namespace {

MatrixF sample_matrix(Rng& rng, std::size_t n, std::size_t d)
{
    MatrixF x(n, d);
    for (std::size_t j = 0; j < d; ++j) {
        const double scale = 0.5 + 2.0 * rng.uniform(); // distinct spreads per column
        for (std::size_t i = 0; i < n; ++i)
            x(i, j) = static_cast<float>(scale * rng.normal());
    }
    return x;
}

/// Eigen-decomposition of the population covariance, descending.
struct CovarianceOracle {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors; // columns
};

CovarianceOracle covariance_oracle(const MatrixF& x)
{
    Eigen::MatrixXd m(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x(i, j);
    const Eigen::MatrixXd centred = m.rowwise() - m.colwise().mean();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    return {solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
}

void check_against_oracle(const MatrixF& x, std::size_t k, double tol)
{
    const auto p = pca_fit(x, k);
    const auto oracle = covariance_oracle(x);
    for (std::size_t r = 0; r < k; ++r) {
        CAPTURE(r);
        CHECK(p.explained_variance[r] == doctest::Approx(oracle.values(static_cast<Eigen::Index>(r))).epsilon(tol).scale(1.0));
        // Up to sign, so compare |<ours, oracle>| with 1 and then match signs.
        double dot = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j)
            dot += p.components(r, j) * oracle.vectors(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(r));
        const double sign = dot < 0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < x.cols(); ++j)
            CHECK(p.components(r, j) ==
                  doctest::Approx(sign * oracle.vectors(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(r)))
                      .epsilon(tol)
                      .scale(1.0));
    }
}

void check_orthonormal(const PCAProjection& p, double tol)
{
    for (std::size_t a = 0; a < p.k(); ++a)
        for (std::size_t b = 0; b < p.k(); ++b) {
            double dot = 0.0;
            for (std::size_t j = 0; j < p.input_dim(); ++j)
                dot += p.components(a, j) * p.components(b, j);
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < tol);
        }
    CHECK(std::is_sorted(p.explained_variance.rbegin(), p.explained_variance.rend()));
}

std::size_t occurrences(const std::string& haystack, const std::string& needle)
{
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1))
        ++n;
    return n;
}

} // namespace

TEST_CASE("points on a line have one component")
{
    MatrixF x(6, 2);
    for (std::size_t i = 0; i < 6; ++i) {
        x(i, 0) = static_cast<float>(i);
        x(i, 1) = static_cast<float>(2 * i + 1);
    }
    const auto p = pca_fit(x, 1);
    CHECK(p.explained_ratio()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.components(0, 0) == doctest::Approx(1.0 / std::sqrt(5.0)));
    CHECK(p.components(0, 1) == doctest::Approx(2.0 / std::sqrt(5.0)));
    // 1-D scores follow the distance along the line from the first point.
    const auto s = pca_transform(p, x);
    for (std::size_t i = 1; i < 6; ++i) {
        const double dist = std::hypot(x(i, 0) - x(0, 0), x(i, 1) - x(0, 1));
        CHECK(s(i, 0) - s(0, 0) == doctest::Approx(dist));
    }
}

TEST_CASE("four-point example matches the covariance eigenproblem")
{
    const MatrixF x(4, 2, std::vector<float>{0, 0, 1, 1, 2, 2, 3, 1});
    check_against_oracle(x, 2, 1e-12);
    const auto p = pca_fit(x, 2);
    // Population covariance [[1.25, 0.5], [0.5, 0.5]]: eigenvalues 1.5, 0.25.
    CHECK(p.explained_variance[0] == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(p.explained_variance[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p.total_variance == doctest::Approx(1.75).epsilon(1e-12));
}

TEST_CASE("random 5x3 instances match the covariance eigenproblem")
{
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        CAPTURE(trial);
        const auto x = sample_matrix(rng, 5, 3);
        check_against_oracle(x, 3, 1e-6);
        const auto p = pca_fit(x, 3);
        check_orthonormal(p, 1e-10);
        const double explained = std::accumulate(p.explained_variance.begin(), p.explained_variance.end(), 0.0);
        CHECK(explained == doctest::Approx(p.total_variance).epsilon(1e-4));
    }
}

TEST_CASE("wide and tall inputs take both SVD routes")
{
    Rng rng(23);
    SUBCASE("n < d")
    {
        const auto x = sample_matrix(rng, 8, 20);
        check_against_oracle(x, 7, 1e-8);
        const auto p = pca_fit(x, 7);
        check_orthonormal(p, 1e-10);
        // Rank n - 1 captures everything.
        const double explained = std::accumulate(p.explained_variance.begin(), p.explained_variance.end(), 0.0);
        CHECK(explained == doctest::Approx(p.total_variance).epsilon(1e-10));
    }
    SUBCASE("n >= d")
    {
        const auto x = sample_matrix(rng, 60, 12);
        check_against_oracle(x, 12, 1e-8);
        check_orthonormal(pca_fit(x, 12), 1e-10);
    }
}

TEST_CASE("QR and Jacobi building blocks")
{
    Rng rng(5);
    MatrixD a(9, 4);
    for (auto& v : a.values())
        v = rng.normal();
    const auto qr = householder_qr(a, true);
    const auto& r = qr.r;
    // Q has orthonormal columns and Q R = A.
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double qr_ij = 0.0;
            for (std::size_t k = 0; k < 4; ++k)
                qr_ij += qr.q(i, k) * r(k, j);
            CHECK(qr_ij == doctest::Approx(a(i, j)).epsilon(1e-12).scale(1.0));
        }
    for (std::size_t a1 = 0; a1 < 4; ++a1)
        for (std::size_t b1 = 0; b1 < 4; ++b1) {
            double d = 0.0;
            for (std::size_t k = 0; k < 9; ++k)
                d += qr.q(k, a1) * qr.q(k, b1);
            CHECK(std::abs(d - (a1 == b1 ? 1.0 : 0.0)) < 1e-12);
        }
    // R^T R equals A^T A and R is upper triangular.
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double ata = 0.0, rtr = 0.0;
            for (std::size_t k = 0; k < 9; ++k)
                ata += a(k, i) * a(k, j);
            for (std::size_t k = 0; k < 4; ++k)
                rtr += r(k, i) * r(k, j);
            CHECK(rtr == doctest::Approx(ata).epsilon(1e-12));
            if (i > j)
                CHECK(r(i, j) == 0.0);
        }
    const auto svd = jacobi_svd(a);
    Eigen::MatrixXd e(9, 4);
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a(i, j);
    const Eigen::JacobiSVD<Eigen::MatrixXd> reference(e);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(svd.singular_values[i] == doctest::Approx(reference.singularValues()(static_cast<Eigen::Index>(i))).epsilon(1e-12));
    CHECK_THROWS_AS(householder_qr(MatrixD(2, 3), false), ConfigError);
}

TEST_CASE("projection round trips and definitional checks")
{
    Rng rng(31);
    const auto x = sample_matrix(rng, 40, 6);
    const auto p = pca_fit(x, 6);
    const auto scores = pca_transform(p, x);
    const auto back = pca_reconstruct(p, scores);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j)
            CHECK(std::abs(back(i, j) - x(i, j)) < 1e-4);
    for (std::size_t r = 0; r < p.k(); ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t i = 0; i < scores.rows(); ++i)
            m += scores(i, r);
        m /= static_cast<double>(scores.rows());
        for (std::size_t i = 0; i < scores.rows(); ++i)
            v += (scores(i, r) - m) * (scores(i, r) - m);
        v /= static_cast<double>(scores.rows());
        CHECK(std::abs(m) < 1e-6);
        CHECK(v == doctest::Approx(p.explained_variance[r]).epsilon(1e-4));
        // Largest-magnitude entry is positive.
        const auto row = p.components.row(r);
        const auto peak = std::max_element(row.begin(), row.end(),
                                           [](double a, double b) { return std::abs(a) < std::abs(b); });
        CHECK(*peak > 0);
    }
    MatrixF mean_row(1, 6);
    for (std::size_t j = 0; j < 6; ++j)
        mean_row(0, j) = static_cast<float>(p.mean[j]);
    const auto centre = pca_transform(p, mean_row);
    for (double v : centre.values())
        CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("PCA errors")
{
    Rng rng(2);
    const auto x = sample_matrix(rng, 5, 3);
    CHECK_THROWS_AS(pca_fit(x, 4), ConfigError);
    CHECK_THROWS_AS(pca_fit(x, 0), ConfigError);
    CHECK_THROWS_AS(pca_fit(MatrixF(1, 3), 1), ConfigError);
    CHECK_THROWS_AS(pca_fit(MatrixF(4, 3, 2.5f), 1), NumericError);
    CHECK_THROWS_AS(pca_transform(pca_fit(x, 2), MatrixF(2, 4)), ConfigError);
}

TEST_CASE("class centroids")
{
    const MatrixD s(4, 2, std::vector<double>{0, 0, 2, 2, 10, 0, 12, 4});
    const std::vector<int> y{0, 0, 1, 1};
    const auto c = class_centroids(s, y, 2);
    CHECK(c == MatrixD(2, 2, std::vector<double>{1, 1, 11, 2}));
    CHECK_THROWS_AS(class_centroids(s, y, 3), DataError);
}

TEST_CASE("scatter output")
{
    TempDir dir("viz_scatter");
    Rng rng(8);
    const std::vector<std::string> classes{"green", "yellowish-green", "midripen", "overripen"};
    MatrixD scores(20, 2);
    std::vector<int> labels;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < 20; ++i) {
        scores(i, 0) = rng.normal();
        scores(i, 1) = rng.normal();
        labels.push_back(static_cast<int>(i % 4));
        ids.push_back(classes[i % 4] + "/img" + std::to_string(i) + ".jpg");
    }
    emit_scatter_2d(scores, labels, classes, ids, dir.path / "a", "banana");
    emit_scatter_2d(scores, labels, classes, ids, dir.path / "b", "banana");
    const auto svg = text::read_text((dir.path / "a.svg").string());
    CHECK(svg == text::read_text((dir.path / "b.svg").string()));
    CHECK(occurrences(svg, "width=\"14\" height=\"14\"") == 4); // legend swatches
    CHECK(occurrences(svg, "<circle") == 20);
    CHECK(svg.find("viewBox=\"0 0 800 600\"") != std::string::npos);
    for (std::size_t c = 0; c < 4; ++c)
        CHECK(svg.find(std::string(class_palette()[c])) != std::string::npos);
    const auto csv = text::lines(text::read_text((dir.path / "a.csv").string()));
    CHECK(csv[0] == "sample_id,label,pc0,pc1");
    CHECK(csv[1] == ids[0] + ",green," + text::shortest(scores(0, 0)) + "," + text::shortest(scores(0, 1)));
    CHECK_THROWS_AS(emit_scatter_2d(scores, labels, std::vector<std::string>{}, ids, dir.path / "c"), DataError);
    CHECK_THROWS_AS(emit_scatter_2d(MatrixD(20, 1), labels, classes, ids, dir.path / "c"), ConfigError);
}

TEST_CASE("one-dimensional densities")
{
    SUBCASE("separated classes do not overlap")
    {
        const std::vector<double> v{0, 0.1, 0.2, 0.3, 5, 5.1, 5.2, 5.3};
        const std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1};
        CHECK(density_1d(v, y, 2, 10).overlap() == 0.0);
    }
    SUBCASE("identical classes overlap fully")
    {
        const std::vector<double> v{0, 1, 2, 3, 0, 1, 2, 3};
        const std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1};
        CHECK(density_1d(v, y, 2, 4).overlap() == doctest::Approx(1.0));
        Rng rng(4);
        std::vector<double> big;
        std::vector<int> labels;
        for (int i = 0; i < 20000; ++i) {
            big.push_back(rng.normal());
            labels.push_back(i % 2);
        }
        CHECK(density_1d(big, labels, 2, 20).overlap() > 0.97);
    }
    SUBCASE("files and shared grid")
    {
        TempDir dir("viz_density");
        const std::vector<double> v{-1, 0, 1, 2, 3};
        const std::vector<int> y{0, 1, 0, 1, 1};
        const std::vector<std::string> names{"healthy", "damaged"};
        const auto d = emit_density_1d(v, y, names, 4, dir.path / "pc0");
        CHECK(d.edges == std::vector<double>{-1, 0, 1, 2, 3});
        CHECK(d.counts[0] == std::vector<std::size_t>{1, 0, 1, 0});
        CHECK(d.counts[1] == std::vector<std::size_t>{0, 1, 0, 2});
        const auto csv = text::lines(text::read_text((dir.path / "pc0.csv").string()));
        CHECK(csv[0] == "bin_lo,bin_hi,healthy,damaged");
        CHECK(csv[1] == "-1,0,1,0");
        const auto svg = text::read_text((dir.path / "pc0.svg").string());
        CHECK(occurrences(svg, "<path") == 2);
        CHECK(svg.find("overlap 0.000") != std::string::npos);
    }
    SUBCASE("errors")
    {
        const std::vector<double> v{1, 2};
        const std::vector<int> y{0, 1};
        CHECK_THROWS_AS(density_1d(v, y, 2, 1), ConfigError);
        CHECK_THROWS_AS(density_1d(std::vector<double>{}, std::vector<int>{}, 2, 4), DataError);
    }
}
