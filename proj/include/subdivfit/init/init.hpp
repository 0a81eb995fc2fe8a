#pragma once

#include "subdivfit/init/qem.hpp"
#include "subdivfit/init/quadrangulate.hpp"

namespace subdivfit {

struct InitResult {
    QuadMesh mesh;
    QemResult collapse;
    QuadConversion conversion;
};

/// Coarse quad control mesh from a dense closed triangle mesh: collapse to
/// `target_vertices`, then pair triangles into quads.
inline InitResult initialize_control_mesh(const TriMesh& mesh, Index target_vertices)
{
    InitResult r;
    r.collapse = qem_collapse(mesh, target_vertices);
    r.conversion = tri_to_quad(r.collapse.mesh);
    r.mesh = r.conversion.mesh;
    return r;
}

} // namespace subdivfit
