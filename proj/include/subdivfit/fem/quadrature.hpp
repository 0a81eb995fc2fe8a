#pragma once

#include "subdivfit/core.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

namespace subdivfit {

/// Tensor-product Gauss-Legendre rule on the unit square. Weights sum to 1.
struct QuadratureRule {
    std::vector<Vec2> nodes;
    std::vector<double> weights;
    int order = 0;

    std::size_t size() const { return nodes.size(); }
};

/// Gauss-Legendre nodes and weights on [0, 1] (Golub-Welsch).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(int g)
{
    require(g >= 1, "fem-laplace", "quadrature order must be at least 1, got " + std::to_string(g));
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(g, g);
    for (int k = 1; k < g; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        J(k, k - 1) = J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Eigen::VectorXd x = (es.eigenvalues().array() + 1.0) / 2.0;
    Eigen::VectorXd w = es.eigenvectors().row(0).transpose().array().square();
    return {x, w};
}

inline QuadratureRule tensor_gauss_rule(int g)
{
    const auto [x, w] = gauss_legendre(g);
    QuadratureRule rule;
    rule.order = g;
    for (int j = 0; j < g; ++j) {
        for (int i = 0; i < g; ++i) {
            rule.nodes.emplace_back(x[i], x[j]);
            rule.weights.push_back(w[i] * w[j]);
        }
    }
    return rule;
}

} // namespace subdivfit
