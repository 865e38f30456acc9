#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>
#include <vector>

#include "mars/rng.hpp"
#include "mars/transform_model.hpp"

namespace test_util {

inline Eigen::MatrixXd random_matrix(int rows, int cols, mars::CounterRng& rng, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
    return m;
}

inline Eigen::VectorXd random_vector(long n, mars::CounterRng& rng, double scale = 1.0) {
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i) v[i] = scale * rng.gaussian();
    return v;
}

// Haar-ish random unitary: QR of a Gaussian matrix with sign fix.
inline Eigen::MatrixXd random_unitary(int n, mars::CounterRng& rng) {
    Eigen::MatrixXd g = random_matrix(n, n, rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < n; ++i)
        if (r(i, i) < 0.0) q.col(i) = -q.col(i);
    return q;
}

inline mars::TransformStack random_stack(int layers, int p, mars::CounterRng& rng,
                                         double eta = 1.0) {
    mars::TransformStack model;
    for (int l = 0; l < layers; ++l) {
        model.omega.push_back(random_unitary(p, rng));
        model.eta.push_back(eta);
    }
    return model;
}

// Direct evaluation of the layer-l sparse coding objective
//   sum_{i=l}^{L} ||Omega_i R_i - Z_i||_F^2 + tau^2 ||Z_l||_0
// with the residuals recomputed from scratch through the recursion. This is
// the independent oracle path: no backpropagation matrices, no rewriting.
inline double direct_layer_objective(const mars::TransformStack& model,
                                     const Eigen::MatrixXd& data,
                                     const std::vector<Eigen::MatrixXd>& Z, int l, double tau) {
    const int layers = model.layers();
    std::vector<Eigen::MatrixXd> R(layers);
    R[0] = data;
    for (int i = 2; i <= layers; ++i) R[i - 1] = model.omega[i - 2] * R[i - 2] - Z[i - 2];
    double obj = 0.0;
    for (int i = l; i <= layers; ++i) obj += (model.omega[i - 1] * R[i - 1] - Z[i - 1]).squaredNorm();
    obj += tau * tau * static_cast<double>((Z[l - 1].array() != 0.0).count());
    return obj;
}

// Brute-force two-point minimum of the same objective: per entry, fit the
// quadratic dependence from three direct evaluations, then take the better
// of {zero, optimal nonzero}. Relies only on separability, which the match
// with the closed form then confirms.
inline double brute_force_min_objective(const mars::TransformStack& model,
                                        const Eigen::MatrixXd& data,
                                        const std::vector<Eigen::MatrixXd>& Z_fixed, int l,
                                        double tau) {
    std::vector<Eigen::MatrixXd> Z = Z_fixed;
    Z[l - 1].setZero();
    const double f0 = direct_layer_objective(model, data, Z, l, tau);
    const long rows = Z[l - 1].rows(), cols = Z[l - 1].cols();
    double total = f0;
    for (long i = 0; i < rows; ++i) {
        for (long j = 0; j < cols; ++j) {
            Z[l - 1](i, j) = 1.0;
            const double fp = direct_layer_objective(model, data, Z, l, tau);
            Z[l - 1](i, j) = -1.0;
            const double fm = direct_layer_objective(model, data, Z, l, tau);
            Z[l - 1](i, j) = 0.0;
            // f(z) = f0 + c2 z^2 + c1 z + tau^2 [z != 0]
            const double c2 = 0.5 * (fp + fm) - f0 - tau * tau;
            const double c1 = 0.5 * (fp - fm);
            const double zstar = -c1 / (2.0 * c2);
            const double nonzero_gain = c2 * zstar * zstar + c1 * zstar + tau * tau;
            total += std::min(0.0, nonzero_gain);
        }
    }
    return total;
}

} // namespace test_util
