#pragma once

#include "subdivfit/core.hpp"
#include "subdivfit/fit/correspondence.hpp"
#include "subdivfit/fit/model.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace subdivfit {

/// Symmetric n x n matrix of 3x3 blocks with a fixed sparsity pattern,
/// stored as block CSR. Acts on Positions (n x 3, interleaved coordinates).
class BlockSparseMatrix {
public:
    BlockSparseMatrix() = default;

    /// Pattern containing every pair inside each clique and every listed pair
    /// (both orders), plus the diagonal.
    static BlockSparseMatrix with_pattern(
        Index n,
        const std::vector<std::vector<Index>>& cliques,
        const std::vector<std::pair<Index, Index>>& pairs = {})
    {
        std::vector<std::vector<Index>> rows(n);
        for (Index a = 0; a < n; ++a) rows[a].push_back(a);
        for (const auto& c : cliques) {
            for (Index a : c) rows[a].insert(rows[a].end(), c.begin(), c.end());
        }
        for (const auto& [a, b] : pairs) {
            rows[a].push_back(b);
            rows[b].push_back(a);
        }
        BlockSparseMatrix m;
        m.m_row_start.assign(std::size_t(n) + 1, 0);
        for (Index a = 0; a < n; ++a) {
            auto& r = rows[a];
            std::sort(r.begin(), r.end());
            r.erase(std::unique(r.begin(), r.end()), r.end());
            m.m_row_start[a + 1] = m.m_row_start[a] + Index(r.size());
            m.m_cols.insert(m.m_cols.end(), r.begin(), r.end());
        }
        m.m_values.assign(m.m_cols.size(), Mat3::Zero());
        return m;
    }

    Index block_rows() const { return Index(m_row_start.size()) - 1; }
    std::size_t nonzero_blocks() const { return m_cols.size(); }

    /// Storage slot of block (a, b); the block must be in the pattern.
    std::size_t slot(Index a, Index b) const
    {
        const auto first = m_cols.begin() + m_row_start[a];
        const auto last = m_cols.begin() + m_row_start[a + 1];
        const auto it = std::lower_bound(first, last, b);
        require(it != last && *it == b, "fitting", "block outside the sparsity pattern");
        return std::size_t(it - m_cols.begin());
    }

    Mat3& value(std::size_t slot) { return m_values[slot]; }
    const Mat3& value(std::size_t slot) const { return m_values[slot]; }
    Mat3& block(Index a, Index b) { return m_values[slot(a, b)]; }
    const Mat3& block(Index a, Index b) const { return m_values[slot(a, b)]; }

    void set_zero() { std::fill(m_values.begin(), m_values.end(), Mat3::Zero()); }

    Positions multiply(const Positions& X) const
    {
        Positions Y(X.rows(), 3);
        parallel_for(0, std::size_t(block_rows()), [&](std::size_t a) {
            Vec3 acc = Vec3::Zero();
            for (Index k = m_row_start[a]; k < m_row_start[a + 1]; ++k) {
                acc += m_values[k] * X.row(m_cols[k]).transpose();
            }
            Y.row(Eigen::Index(a)) = acc.transpose();
        });
        return Y;
    }

    Eigen::SparseMatrix<double> to_sparse() const
    {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(m_values.size() * 9);
        for (Index a = 0; a < block_rows(); ++a) {
            for (Index k = m_row_start[a]; k < m_row_start[a + 1]; ++k) {
                for (int r = 0; r < 3; ++r) {
                    for (int c = 0; c < 3; ++c) trips.emplace_back(3 * a + r, 3 * m_cols[k] + c, m_values[k](r, c));
                }
            }
        }
        Eigen::SparseMatrix<double> S(3 * block_rows(), 3 * block_rows());
        S.setFromTriplets(trips.begin(), trips.end());
        return S;
    }

private:
    std::vector<Index> m_row_start;
    std::vector<Index> m_cols;
    std::vector<Mat3> m_values;
};

/// Quadratic energy V^T Q V - 2 <b, V> + constant over the control vertices.
struct QuadraticSystem {
    BlockSparseMatrix Q;
    Positions b;
    double constant = 0.0;

    double value(const Positions& V) const
    {
        const Positions QV = Q.multiply(V);
        return (V.array() * QV.array()).sum() - 2.0 * (b.array() * V.array()).sum() + constant;
    }

    Positions gradient(const Positions& V) const { return 2.0 * (Q.multiply(V) - b); }
};

/// Per-point inputs of the quadratic model at the current iterate.
struct QuadraticTerms {
    const Positions* points = nullptr;
    const Positions* normals = nullptr; // null disables the tangent term
    const Correspondences* corr = nullptr;
    const MMWeights* weights = nullptr;
    const std::vector<Mat3>* D = nullptr; // per point, may be null for D = I
    double beta = 0.0;
};

/// Assembles Q and b for a fixed sampler. The sparsity pattern and the slot
/// of every (sample, entry, entry) pair are computed once.
class QuadraticAssembler {
public:
    QuadraticAssembler(const SurfaceSampler& sampler, const HalfedgeTopology& topology)
        : m_sampler(&sampler)
    {
        std::vector<std::vector<Index>> cliques(sampler.size());
        for (std::size_t k = 0; k < sampler.size(); ++k) {
            for (const auto& e : sampler.row(k).entries) cliques[k].push_back(e.vertex);
        }
        std::vector<std::pair<Index, Index>> edges;
        for (Index e = 0; e < topology.num_edges(); ++e) {
            const auto [a, b] = topology.edge_vertices(e);
            edges.emplace_back(a, b);
        }
        m_degree.assign(topology.num_vertices(), 0);
        for (const auto& [a, b] : edges) {
            ++m_degree[a];
            ++m_degree[b];
        }
        m_pattern = BlockSparseMatrix::with_pattern(topology.num_vertices(), cliques, edges);
        m_slots.resize(sampler.size());
        for (std::size_t k = 0; k < sampler.size(); ++k) {
            const auto& c = cliques[k];
            m_slots[k].resize(c.size() * c.size());
            for (std::size_t x = 0; x < c.size(); ++x) {
                for (std::size_t y = 0; y < c.size(); ++y) m_slots[k][x * c.size() + y] = m_pattern.slot(c[x], c[y]);
            }
        }
        for (const auto& [a, b] : edges) m_edge_slots.push_back({m_pattern.slot(a, b), m_pattern.slot(b, a)});
        for (Index a = 0; a < topology.num_vertices(); ++a) m_diag_slots.push_back(m_pattern.slot(a, a));
    }

    QuadraticSystem assemble(const QuadraticTerms& t) const
    {
        const auto& sampler = *m_sampler;
        const auto& P = *t.points;
        const auto& corr = *t.corr;
        const auto& w = *t.weights;
        const bool tangent = t.normals != nullptr && w.tangent.rows() == P.rows() && w.tangent.cols() == 2;

        // Aggregate per-point terms on their samples in ascending point order.
        const std::size_t ns = sampler.size();
        std::vector<Mat3> A(ns, Mat3::Zero()), T1, T2;
        std::vector<Vec3> c(ns, Vec3::Zero());
        if (tangent) {
            T1.assign(ns, Mat3::Zero());
            T2.assign(ns, Mat3::Zero());
        }
        double constant = 0.0;
        for (Eigen::Index j = 0; j < P.rows(); ++j) {
            const Index k = corr.sample[std::size_t(j)];
            const Vec3 p = P.row(j).transpose();
            const Mat3 WD = w.point[j] * (t.D ? (*t.D)[std::size_t(j)] : Mat3::Identity());
            A[k] += WD;
            const Vec3 WDp = WD * p;
            c[k] += WDp;
            constant += p.dot(WDp);
            if (tangent) {
                const Vec3 n = t.normals->row(j).transpose();
                const Mat3 nn = n * n.transpose();
                T1[k] += w.tangent(j, 0) * nn;
                T2[k] += w.tangent(j, 1) * nn;
            }
        }

        QuadraticSystem sys;
        sys.Q = m_pattern;
        sys.Q.set_zero();
        sys.b = Positions::Zero(m_pattern.block_rows(), 3);
        sys.constant = constant;
        for (std::size_t k = 0; k < ns; ++k) {
            const auto& e = sampler.row(k).entries;
            const std::size_t K = e.size();
            for (std::size_t x = 0; x < K; ++x) {
                sys.b.row(e[x].vertex) += e[x].w[kValue] * c[k].transpose();
                for (std::size_t y = 0; y < K; ++y) {
                    Mat3& block = sys.Q.value(m_slots[k][x * K + y]);
                    block += (e[x].w[kValue] * e[y].w[kValue]) * A[k];
                    if (tangent) {
                        block += (e[x].w[kDu] * e[y].w[kDu]) * T1[k];
                        block += (e[x].w[kDv] * e[y].w[kDv]) * T2[k];
                    }
                }
            }
        }
        if (t.beta > 0.0) {
            for (std::size_t a = 0; a < m_diag_slots.size(); ++a) {
                sys.Q.value(m_diag_slots[a]) += t.beta * m_degree[a] * Mat3::Identity();
            }
            for (const auto& [ab, ba] : m_edge_slots) {
                sys.Q.value(ab) -= t.beta * Mat3::Identity();
                sys.Q.value(ba) -= t.beta * Mat3::Identity();
            }
        }
        return sys;
    }

    const std::vector<std::size_t>& diagonal_slots() const { return m_diag_slots; }

private:
    const SurfaceSampler* m_sampler;
    BlockSparseMatrix m_pattern;
    std::vector<std::vector<std::size_t>> m_slots;
    std::vector<std::pair<std::size_t, std::size_t>> m_edge_slots;
    std::vector<std::size_t> m_diag_slots;
    std::vector<Index> m_degree;
};

struct CgReport {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/// Preconditioned conjugate gradients for a symmetric positive semi-definite
/// operator. `x` holds the warm start on entry and the solution on exit.
template <typename ApplyA, typename ApplyPrec>
CgReport conjugate_gradient(
    ApplyA&& apply,
    ApplyPrec&& precondition,
    const Eigen::VectorXd& b,
    Eigen::VectorXd& x,
    double tol,
    int max_iter,
    const char* module = "fitting")
{
    const double bnorm = b.norm() > 0.0 ? b.norm() : 1.0;
    Eigen::VectorXd r = b - apply(x);
    CgReport rep;
    rep.relative_residual = r.norm() / bnorm;
    if (rep.relative_residual <= tol) {
        rep.converged = true;
        return rep;
    }
    Eigen::VectorXd z = precondition(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    for (int it = 1; it <= max_iter; ++it) {
        const Eigen::VectorXd Ap = apply(p);
        const double pAp = p.dot(Ap);
        require(
            pAp >= 0.0,
            module,
            "indefinite system in conjugate gradients (p^T Q p = " + std::to_string(pAp) + " at iteration " +
                std::to_string(it) + ")");
        if (pAp == 0.0) break;
        const double step = rz / pAp;
        x += step * p;
        r -= step * Ap;
        rep.iterations = it;
        rep.relative_residual = r.norm() / bnorm;
        if (rep.relative_residual <= tol) {
            rep.converged = true;
            break;
        }
        z = precondition(r);
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    // Recursive residuals drift; report the true one.
    rep.relative_residual = (b - apply(x)).norm() / bnorm;
    rep.converged = rep.relative_residual <= tol;
    return rep;
}

/// Solves Q V = b with block-Jacobi preconditioned CG, warm-started at V0.
inline Positions cg_solve(
    const QuadraticSystem& sys,
    const Positions& V0,
    double tol,
    int max_iter,
    CgReport* report = nullptr)
{
    const Index n = sys.Q.block_rows();
    require(V0.rows() == Eigen::Index(n), "fitting", "warm start has the wrong number of vertices");
    std::vector<Mat3> inv(n);
    for (Index a = 0; a < n; ++a) {
        const Mat3& B = sys.Q.block(a, a);
        Eigen::SelfAdjointEigenSolver<Mat3> es(B);
        const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
        Vec3 d;
        for (int i = 0; i < 3; ++i) {
            const double l = es.eigenvalues()[i];
            d[i] = l > 1e-14 * top && l > 0.0 ? 1.0 / l : (top > 0.0 ? 1.0 / top : 1.0);
        }
        inv[a] = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
    }
    auto as_positions = [n](const Eigen::VectorXd& v) {
        return Eigen::Map<const Positions>(v.data(), Eigen::Index(n), 3);
    };
    auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        const Positions y = sys.Q.multiply(as_positions(v));
        return Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
    };
    auto precondition = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
        Eigen::VectorXd z(r.size());
        for (Index a = 0; a < n; ++a) z.segment<3>(3 * a) = inv[a] * r.segment<3>(3 * a);
        return z;
    };
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(V0.data(), V0.size());
    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(sys.b.data(), sys.b.size());
    const CgReport rep = conjugate_gradient(apply, precondition, b, x, tol, max_iter);
    if (report) *report = rep;
    return as_positions(x);
}

} // namespace subdivfit
