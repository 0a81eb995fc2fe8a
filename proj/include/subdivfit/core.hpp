#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace subdivfit {

using Index = std::uint32_t;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Vertex positions, one row per vertex. Row-major so that the storage of an
/// n x 3 block is the interleaved vector [x0 y0 z0 x1 y1 z1 ...].
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Error raised by any module. `module()` names the subsystem that failed so
/// the CLI can print module-qualified diagnostics.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(module + ": " + what)
        , m_module(std::move(module))
    {}

    const std::string& module() const noexcept { return m_module; }

private:
    std::string m_module;
};

inline void require(bool cond, const char* module, const std::string& what)
{
    if (!cond) throw Error(module, what);
}

} // namespace subdivfit
