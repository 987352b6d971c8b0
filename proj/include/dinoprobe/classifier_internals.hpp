#pragma once

// Objective functions of the gradient-trained classifiers, exposed for
// finite-difference checks. Everything is double precision.

#include "dinoprobe/matrix.hpp"

#include <span>
#include <vector>

namespace dinoprobe::detail {

/// Softmax regression parameters: weight is K x d, bias K.
struct LinearParams {
    MatrixD weight;
    std::vector<double> bias;
};

/// Mean cross-entropy + (l2 / 2) ||W||^2 and its gradient.
double logistic_objective(const LinearParams& p, const MatrixD& x, std::span<const int> y, double l2,
                          LinearParams* grad);

/// One-hidden-layer ReLU network: w1 is H x d, w2 is K x H.
struct MlpWeights {
    MatrixD w1;
    std::vector<double> b1;
    MatrixD w2;
    std::vector<double> b2;
};

/// Mean cross-entropy over the given rows + (l2 / 2)(||W1||^2 + ||W2||^2)
/// and its gradient.
double mlp_objective(const MlpWeights& p, const MatrixD& x, std::span<const int> y, double l2, MlpWeights* grad);

/// A single fully grown Gini tree on all rows and all features, predicted on
/// `probe`. The reference a one-tree, no-bootstrap, all-features forest must
/// reproduce.
std::vector<int> cart_predict(const MatrixF& train_x, std::span<const int> train_y, std::size_t classes,
                              std::size_t min_samples_split, const MatrixF& probe);

} // namespace dinoprobe::detail
