#pragma once

#include "subdivfit/fem/eigen.hpp"
#include "subdivfit/parallel.hpp"

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

namespace subdivfit {

/// Spectral coefficients V_K^T D0 F of the per-vertex fields F (n x q).
inline Eigen::MatrixXd spectral_coefficients(
    const SpectralBasis& basis,
    const SparseMatrix& D0,
    const Eigen::MatrixXd& fields,
    Eigen::Index K)
{
    require(K >= 1 && K <= basis.size(), "analysis", "K exceeds the available eigenpairs");
    require(fields.rows() == D0.rows(), "analysis", "descriptor rows do not match the vertex count");
    return basis.vectors.leftCols(K).transpose() * (D0 * fields);
}

struct FunctionalMap {
    Eigen::MatrixXd C; // K_B x K_A
    double residual = 0.0; // ||C A - B||_F
};

/// Minimizes ||C A - B||_F^2 + mu sum_ij (lambda^B_i - lambda^A_j)^2 C_ij^2
/// row by row. A and B are descriptor coefficients (K x q) in each basis.
inline FunctionalMap functional_map(
    const Eigen::VectorXd& lambda_a,
    const Eigen::VectorXd& lambda_b,
    const Eigen::MatrixXd& A,
    const Eigen::MatrixXd& B,
    double mu)
{
    constexpr const char* mod = "analysis";
    require(mu >= 0.0, mod, "mu must be non-negative");
    require(A.cols() == B.cols(), mod, "descriptor counts differ between shapes");
    require(A.rows() == lambda_a.size() && B.rows() == lambda_b.size(), mod, "coefficient rows must match eigenvalues");
    const Eigen::Index ka = A.rows(), kb = B.rows();
    const Eigen::MatrixXd AAt = A * A.transpose();
    const double scale = std::max(AAt.diagonal().maxCoeff(), std::numeric_limits<double>::min());

    FunctionalMap out;
    out.C.resize(kb, ka);
    for (Eigen::Index i = 0; i < kb; ++i) {
        Eigen::MatrixXd M = AAt;
        for (Eigen::Index j = 0; j < ka; ++j) {
            const double d = lambda_b[i] - lambda_a[j];
            M(j, j) += mu * d * d;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
        qr.setThreshold(1e-12);
        if (qr.rank() < ka || !(M.diagonal().maxCoeff() > 1e-300 * scale)) {
            throw Error(
                mod,
                "descriptor system is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                    std::to_string(ka) + ")" + (mu == 0.0 ? "; use mu > 0" : "; increase mu or the descriptor count"));
        }
        out.C.row(i) = qr.solve(A * B.row(i).transpose()).transpose();
    }
    out.residual = (out.C * A - B).norm();
    return out;
}

inline FunctionalMap functional_map(
    const SpectralBasis& basis_a,
    const SpectralBasis& basis_b,
    const Eigen::MatrixXd& A,
    const Eigen::MatrixXd& B,
    Eigen::Index K,
    double mu)
{
    require(K >= 1 && K <= basis_a.size() && K <= basis_b.size(), "analysis", "K exceeds the available eigenpairs");
    return functional_map(basis_a.values.head(K), basis_b.values.head(K), A.topRows(K), B.topRows(K), mu);
}

/// Vertex a maps to argmin_b ||C phi_A(a) - phi_B(b)|| over spectral
/// coordinate rows; distances within 1e-9 relative count as ties, resolved
/// by smallest index.
inline std::vector<Index> point_map(
    const Eigen::MatrixXd& C,
    const Eigen::MatrixXd& phi_a,
    const Eigen::MatrixXd& phi_b)
{
    require(C.cols() <= phi_a.cols() && C.rows() <= phi_b.cols(), "analysis", "map larger than the spectral coordinates");
    const Eigen::MatrixXd mapped = phi_a.leftCols(C.cols()) * C.transpose(); // rows: C phi_A(a)
    const Eigen::MatrixXd target = phi_b.leftCols(C.rows());
    std::vector<Index> out(std::size_t(phi_a.rows()));
    parallel_for(0, out.size(), [&](std::size_t a) {
        const auto row = mapped.row(Eigen::Index(a));
        double best = std::numeric_limits<double>::infinity();
        Index arg = 0;
        const double tol = 1e-9 * (row.norm() + 1e-300);
        for (Eigen::Index b = 0; b < target.rows(); ++b) {
            const double d = (target.row(b) - row).norm();
            if (d < best - tol) {
                best = d;
                arg = Index(b);
            }
        }
        out[a] = arg;
    });
    return out;
}

} // namespace subdivfit
