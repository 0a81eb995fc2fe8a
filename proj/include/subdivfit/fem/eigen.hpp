#pragma once

#include "subdivfit/fem/laplace.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>
#include <string>

namespace subdivfit {

/// K smallest eigenpairs of D1 v = lambda D0 v, D0-orthonormal.
struct SpectralBasis {
    Eigen::VectorXd values;  // ascending
    Eigen::MatrixXd vectors; // n x K, column k pairs with values[k]
    Eigen::VectorXd residuals;
    int iterations = 0;
    std::string method;

    Eigen::Index size() const { return values.size(); }
};

enum class EigenMethod { automatic, iterative, dense };

struct EigenOptions {
    double tol = 1e-10;
    int max_iter = 300;
    EigenMethod method = EigenMethod::automatic;
    int extra_vectors = -1;                 // guard vectors; -1 picks max(K, 8)
    std::optional<Eigen::MatrixXd> initial; // starting block (n x at least 1 column)
    unsigned seed = 20240611u;              // random start and re-seeded directions
};

inline double sparse_norm_inf(const SparseMatrix& A)
{
    double best = 0.0;
    for (Eigen::Index r = 0; r < A.outerSize(); ++r) {
        double s = 0.0;
        for (SparseMatrix::InnerIterator it(A, r); it; ++it) s += std::abs(it.value());
        best = std::max(best, s);
    }
    return best;
}

/// Normwise backward errors ||D1 v - lambda D0 v|| / ((||D1|| + |lambda| ||D0||) ||v||).
inline Eigen::VectorXd eigen_residuals(
    const OperatorMatrices& m,
    const Eigen::VectorXd& values,
    const Eigen::MatrixXd& vectors)
{
    const double n1 = sparse_norm_inf(m.D1), n0 = sparse_norm_inf(m.D0);
    const Eigen::MatrixXd A = m.D1 * vectors;
    const Eigen::MatrixXd B = m.D0 * vectors;
    Eigen::VectorXd r(values.size());
    for (Eigen::Index k = 0; k < values.size(); ++k) {
        const double denom = (n1 + std::abs(values[k]) * n0) * vectors.col(k).lpNorm<Eigen::Infinity>();
        r[k] = (A.col(k) - values[k] * B.col(k)).lpNorm<Eigen::Infinity>() / denom;
    }
    return r;
}

namespace eigen_detail {

/// Flips each vector so its largest-magnitude entry (first on ties) is positive.
inline void fix_signs(Eigen::MatrixXd& X)
{
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
        Eigen::Index arg = 0;
        X.col(k).cwiseAbs().maxCoeff(&arg);
        // Ties within rounding would make the choice unstable; pick the first
        // entry whose magnitude is within a relative 1e-9 of the maximum.
        const double top = std::abs(X(arg, k));
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            if (std::abs(X(i, k)) >= top * (1.0 - 1e-9)) {
                arg = i;
                break;
            }
        }
        if (X(arg, k) < 0.0) X.col(k) *= -1.0;
    }
}

/// Modified Gram-Schmidt in the D0 inner product, applied twice. Columns
/// that vanish are replaced by fresh random directions.
inline void d0_orthonormalize(Eigen::MatrixXd& X, const SparseMatrix& D0, std::mt19937& rng)
{
    std::normal_distribution<double> normal;
    for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index k = 0; k < X.cols(); ++k) {
            for (int attempt = 0; attempt < 3; ++attempt) {
                const double before = std::sqrt(std::max(0.0, X.col(k).dot(D0 * X.col(k))));
                for (Eigen::Index j = 0; j < k; ++j) {
                    X.col(k) -= X.col(j).dot(D0 * X.col(k)) * X.col(j);
                }
                const double norm = std::sqrt(std::max(0.0, X.col(k).dot(D0 * X.col(k))));
                if (norm > 1e-10 * before && norm > 0.0) {
                    X.col(k) /= norm;
                    break;
                }
                for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, k) = normal(rng);
            }
        }
    }
}

} // namespace eigen_detail

/// Dense generalized eigensolver; the reference solution for small problems.
inline SpectralBasis dense_eigensolve(const OperatorMatrices& m, int K)
{
    const Eigen::Index n = m.D0.rows();
    require(K >= 1 && K <= n, "fem-laplace", "requested " + std::to_string(K) + " eigenpairs of " + std::to_string(n));
    const Eigen::MatrixXd A = Eigen::MatrixXd(m.D1);
    const Eigen::MatrixXd B = Eigen::MatrixXd(m.D0);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, B, Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
    require(es.info() == Eigen::Success, "fem-laplace", "dense eigensolver failed (D0 not positive definite?)");
    SpectralBasis out;
    out.values = es.eigenvalues().head(K);
    out.vectors = es.eigenvectors().leftCols(K);
    eigen_detail::fix_signs(out.vectors);
    out.residuals = eigen_residuals(m, out.values, out.vectors);
    out.method = "dense";
    return out;
}

/// Shift-invert subspace iteration with Rayleigh-Ritz projection around a
/// small negative shift. Converged when every requested pair has a
/// backward error <= tol.
inline SpectralBasis iterative_eigensolve(const OperatorMatrices& m, int K, const EigenOptions& opt = {})
{
    constexpr const char* mod = "fem-laplace";
    const Eigen::Index n = m.D0.rows();
    require(K >= 1 && K < n, mod, "requested " + std::to_string(K) + " eigenpairs, need K < n = " + std::to_string(n));
    const int extra = opt.extra_vectors >= 0 ? opt.extra_vectors : std::max(K, 8);
    const Eigen::Index p = std::min<Eigen::Index>(n, K + extra);

    // D1 - sigma D0 with sigma < 0 is SPD for PSD D1 and SPD D0.
    const double scale = m.D1.diagonal().sum() / m.D0.diagonal().sum();
    const double sigma = -1e-3 * (scale > 0.0 ? scale : 1.0);
    const SparseMatrix S = m.D1 - sigma * m.D0;
    Eigen::SimplicialLDLT<SparseMatrix> solver(S);
    require(solver.info() == Eigen::Success, mod, "factorization of the shifted operator failed");

    std::mt19937 rng(opt.seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = normal(rng);
    }
    if (opt.initial) {
        require(opt.initial->rows() == n, mod, "initial block has the wrong row count");
        const Eigen::Index c = std::min<Eigen::Index>(p, opt.initial->cols());
        X.leftCols(c) = opt.initial->leftCols(c);
    }
    eigen_detail::d0_orthonormalize(X, m.D0, rng);

    SpectralBasis out;
    out.method = "shift-invert subspace";
    for (int it = 1; it <= opt.max_iter; ++it) {
        Eigen::MatrixXd Y = solver.solve(Eigen::MatrixXd(m.D0 * X));
        eigen_detail::d0_orthonormalize(Y, m.D0, rng);
        Eigen::MatrixXd H = Y.transpose() * (m.D1 * Y);
        H = 0.5 * (H + H.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        X = Y * es.eigenvectors();
        const Eigen::VectorXd theta = es.eigenvalues();
        out.iterations = it;
        out.values = theta.head(K);
        out.vectors = X.leftCols(K);
        out.residuals = eigen_residuals(m, out.values, out.vectors);
        if (out.residuals.maxCoeff() <= opt.tol) {
            eigen_detail::fix_signs(out.vectors);
            return out;
        }
    }
    std::ostringstream msg;
    msg << "eigensolver did not converge in " << opt.max_iter << " iterations; max residual "
        << out.residuals.maxCoeff() << " (tol " << opt.tol << ")";
    throw Error(mod, msg.str());
}

/// K smallest eigenpairs. The automatic method iterates and, for n <= 500,
/// falls back to the dense solver when iteration does not converge.
inline SpectralBasis eigensolve(const OperatorMatrices& m, int K, const EigenOptions& opt = {})
{
    const Eigen::Index n = m.D0.rows();
    switch (opt.method) {
    case EigenMethod::dense:
        return dense_eigensolve(m, K);
    case EigenMethod::iterative:
        return iterative_eigensolve(m, K, opt);
    case EigenMethod::automatic:
        break;
    }
    if (K >= n) return dense_eigensolve(m, K);
    try {
        return iterative_eigensolve(m, K, opt);
    } catch (const Error&) {
        if (n > 500) throw;
        return dense_eigensolve(m, K);
    }
}

} // namespace subdivfit
