#pragma once

#include "subdivfit/core.hpp"
#include "subdivfit/mesh.hpp"

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace subdivfit {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

struct NamedField {
    std::string name;
    Eigen::VectorXd values;
};
using VertexFields = std::vector<NamedField>;

enum class MeshFormat { obj, ply };

struct LoadedMesh {
    std::variant<TriMesh, QuadMesh> mesh;
    VertexFields fields;
    std::vector<std::string> warnings;

    bool is_quad() const { return std::holds_alternative<QuadMesh>(mesh); }
    const TriMesh& tri() const { return std::get<TriMesh>(mesh); }
    const QuadMesh& quad() const { return std::get<QuadMesh>(mesh); }
};

namespace io_detail {

constexpr const char* mod = "mesh-core";

inline MeshFormat format_from_path(const std::filesystem::path& path)
{
    auto ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".obj") return MeshFormat::obj;
    if (ext == ".ply") return MeshFormat::ply;
    throw Error(mod, "cannot infer mesh format from extension '" + ext + "' of " + path.string());
}

/// Raw polygon soup shared by both readers before degree checks.
struct Soup {
    std::vector<Vec3> vertices;
    std::vector<std::vector<Index>> faces;
    std::map<std::string, std::vector<double>> vertex_properties;
};

inline Soup read_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(bool(in), mod, "cannot open " + path.string());
    Soup soup;
    std::vector<Vec3> normals;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v" || tag == "vn") {
            Vec3 p;
            require(
                bool(ls >> p.x() >> p.y() >> p.z()),
                mod,
                "parse error in " + path.string() + " line " + std::to_string(lineno));
            (tag == "v" ? soup.vertices : normals).push_back(p);
        } else if (tag == "f") {
            std::vector<Index> face;
            std::string tok;
            while (ls >> tok) {
                const auto slash = tok.find('/');
                long idx = 0;
                try {
                    idx = std::stol(tok.substr(0, slash));
                } catch (const std::exception&) {
                    throw Error(mod, "parse error in " + path.string() + " line " + std::to_string(lineno));
                }
                require(
                    idx >= 1,
                    mod,
                    "unsupported or invalid face index " + tok + " in " + path.string() + " line " +
                        std::to_string(lineno));
                face.push_back(static_cast<Index>(idx - 1));
            }
            soup.faces.push_back(std::move(face));
        }
    }
    if (!normals.empty() && normals.size() == soup.vertices.size()) {
        for (const char* axis : {"nx", "ny", "nz"}) soup.vertex_properties[axis] = {};
        for (const auto& n : normals) {
            soup.vertex_properties["nx"].push_back(n.x());
            soup.vertex_properties["ny"].push_back(n.y());
            soup.vertex_properties["nz"].push_back(n.z());
        }
    }
    return soup;
}

struct PlyProperty {
    std::string name;
    std::string type;
    bool is_list = false;
    std::string count_type;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

inline std::size_t ply_type_size(const std::string& t)
{
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32")
        return 4;
    if (t == "double" || t == "float64") return 8;
    throw Error(mod, "unknown PLY property type '" + t + "'");
}

inline double ply_read_binary(std::istream& in, const std::string& t)
{
    unsigned char buf[8];
    const std::size_t n = ply_type_size(t);
    in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
    require(bool(in), mod, "unexpected end of binary PLY data");
    auto load = [&](auto v) {
        std::memcpy(&v, buf, sizeof(v));
        return static_cast<double>(v);
    };
    if (t == "char" || t == "int8") return load(std::int8_t{});
    if (t == "uchar" || t == "uint8") return load(std::uint8_t{});
    if (t == "short" || t == "int16") return load(std::int16_t{});
    if (t == "ushort" || t == "uint16") return load(std::uint16_t{});
    if (t == "int" || t == "int32") return load(std::int32_t{});
    if (t == "uint" || t == "uint32") return load(std::uint32_t{});
    if (t == "float" || t == "float32") return load(float{});
    return load(double{});
}

inline Soup read_ply(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(bool(in), mod, "cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    require(line.rfind("ply", 0) == 0, mod, path.string() + " is not a PLY file");
    std::string format;
    std::vector<PlyElement> elements;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            ls >> format;
        } else if (tag == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            require(!elements.empty(), mod, "PLY property before any element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                p.is_list = true;
                ls >> p.count_type >> p.type >> p.name;
            } else {
                p.type = t;
                ls >> p.name;
            }
            elements.back().properties.push_back(p);
        } else if (tag == "end_header") {
            break;
        }
    }
    require(
        format == "binary_little_endian" || format == "ascii",
        mod,
        "unsupported PLY format '" + format + "' in " + path.string());
    const bool binary = format == "binary_little_endian";

    auto read_value = [&](const std::string& t) {
        if (binary) return ply_read_binary(in, t);
        double v;
        require(bool(in >> v), mod, "parse error in ASCII PLY " + path.string());
        return v;
    };

    Soup soup;
    for (const auto& e : elements) {
        if (e.name == "vertex") {
            std::map<std::string, std::vector<double>> props;
            for (std::size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.properties) {
                    if (p.is_list) {
                        const auto c = static_cast<std::size_t>(read_value(p.count_type));
                        for (std::size_t k = 0; k < c; ++k) read_value(p.type);
                    } else {
                        props[p.name].push_back(read_value(p.type));
                    }
                }
            }
            for (const char* axis : {"x", "y", "z"}) {
                require(props.count(axis) > 0, mod, "PLY vertex element lacks property " + std::string(axis));
            }
            soup.vertices.resize(e.count);
            for (std::size_t i = 0; i < e.count; ++i) {
                soup.vertices[i] = Vec3(props["x"][i], props["y"][i], props["z"][i]);
            }
            for (auto& [name, values] : props) {
                if (name != "x" && name != "y" && name != "z") soup.vertex_properties[name] = std::move(values);
            }
        } else if (e.name == "face") {
            for (std::size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.properties) {
                    if (p.is_list) {
                        const auto c = static_cast<std::size_t>(read_value(p.count_type));
                        std::vector<Index> face(c);
                        for (std::size_t k = 0; k < c; ++k) {
                            const double v = read_value(p.type);
                            require(v >= 0, mod, "negative face index in " + path.string());
                            face[k] = static_cast<Index>(v);
                        }
                        if (p.name == "vertex_indices" || p.name == "vertex_index") {
                            soup.faces.push_back(std::move(face));
                        }
                    } else {
                        read_value(p.type);
                    }
                }
            }
        } else {
            for (std::size_t i = 0; i < e.count; ++i) {
                for (const auto& p : e.properties) {
                    if (p.is_list) {
                        const auto c = static_cast<std::size_t>(read_value(p.count_type));
                        for (std::size_t k = 0; k < c; ++k) read_value(p.type);
                    } else {
                        read_value(p.type);
                    }
                }
            }
        }
    }
    return soup;
}

inline Soup read_soup(const std::filesystem::path& path, MeshFormat format)
{
    return format == MeshFormat::obj ? read_obj(path) : read_ply(path);
}

inline Positions to_positions(const std::vector<Vec3>& v)
{
    Positions p(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return p;
}

template <std::size_t K>
PolygonMesh<K> to_mesh(const Soup& soup)
{
    PolygonMesh<K> mesh;
    mesh.vertices = to_positions(soup.vertices);
    mesh.faces.reserve(soup.faces.size());
    for (const auto& f : soup.faces) {
        typename PolygonMesh<K>::Face face;
        std::copy(f.begin(), f.end(), face.begin());
        mesh.faces.push_back(face);
    }
    return mesh;
}

} // namespace io_detail

/// Loads and validates a triangle or quad mesh. Mixed-degree faces, index
/// errors, open boundaries and non-manifold edges are rejected.
inline LoadedMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format = {})
{
    using namespace io_detail;
    const Soup soup = read_soup(path, format.value_or(format_from_path(path)));
    require(!soup.faces.empty(), mod, path.string() + " contains no faces");
    const std::size_t degree = soup.faces.front().size();
    for (std::size_t f = 0; f < soup.faces.size(); ++f) {
        require(
            soup.faces[f].size() == degree,
            mod,
            "mixed face degrees in " + path.string() + " (face " + std::to_string(f) + " has " +
                std::to_string(soup.faces[f].size()) + " vertices, face 0 has " + std::to_string(degree) + ")");
    }
    require(degree == 3 || degree == 4, mod, "only triangle or quad meshes are supported");

    LoadedMesh out{TriMesh{}, {}, {}};
    if (degree == 3) {
        auto mesh = to_mesh<3>(soup);
        out.warnings = validate(mesh).warnings;
        out.mesh = std::move(mesh);
    } else {
        auto mesh = to_mesh<4>(soup);
        out.warnings = validate(mesh).warnings;
        out.mesh = std::move(mesh);
    }
    for (const auto& [name, values] : soup.vertex_properties) {
        out.fields.push_back({name, Eigen::Map<const Eigen::VectorXd>(values.data(), Eigen::Index(values.size()))});
    }
    return out;
}

/// Loads points (and normals when nx/ny/nz or matching `vn` records exist)
/// from a PLY or OBJ file. Faces, if any, are ignored.
inline PointCloud load_point_cloud(const std::filesystem::path& path, std::optional<MeshFormat> format = {})
{
    using namespace io_detail;
    Soup soup = read_soup(path, format.value_or(format_from_path(path)));
    PointCloud cloud;
    cloud.points = to_positions(soup.vertices);
    auto& props = soup.vertex_properties;
    if (props.count("nx") && props.count("ny") && props.count("nz")) {
        Positions n(cloud.points.rows(), 3);
        for (Eigen::Index i = 0; i < n.rows(); ++i) {
            Vec3 v(props["nx"][i], props["ny"][i], props["nz"][i]);
            const double len = v.norm();
            require(len > 0, mod, "zero normal at point " + std::to_string(i));
            n.row(i) = (v / len).transpose();
        }
        cloud.normals = std::move(n);
    }
    validate(cloud);
    return cloud;
}

namespace io_detail {

template <typename T>
void write_le(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void check_fields(Index n, const VertexFields& fields)
{
    for (const auto& f : fields) {
        require(
            f.values.size() == Eigen::Index(n),
            mod,
            "field '" + f.name + "' has " + std::to_string(f.values.size()) + " values for " + std::to_string(n) +
                " vertices");
        require(
            !f.name.empty() && f.name != "x" && f.name != "y" && f.name != "z" && f.name != "nx" && f.name != "ny" &&
                f.name != "nz" && f.name.find_first_of(" \t\n,") == std::string::npos,
            mod,
            "invalid field name '" + f.name + "'");
    }
}

inline std::ofstream open_for_write(const std::filesystem::path& path, bool binary)
{
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    require(bool(out), mod, "cannot write " + path.string());
    return out;
}

} // namespace io_detail

/// Binary little-endian PLY. Positions and fields are stored as doubles so a
/// reload is bit-exact.
template <std::size_t K>
void save_ply(
    const PolygonMesh<K>& mesh,
    const std::filesystem::path& path,
    const VertexFields& fields = {},
    const Positions* normals = nullptr)
{
    using namespace io_detail;
    check_fields(mesh.num_vertices(), fields);
    auto out = open_for_write(path, true);
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << mesh.num_vertices() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
    for (const auto& f : fields) out << "property double " << f.name << "\n";
    out << "element face " << mesh.num_faces() << "\n";
    out << "property list uchar uint vertex_indices\nend_header\n";
    for (Index i = 0; i < mesh.num_vertices(); ++i) {
        for (int c = 0; c < 3; ++c) write_le(out, mesh.vertices(i, c));
        if (normals) {
            for (int c = 0; c < 3; ++c) write_le(out, (*normals)(i, c));
        }
        for (const auto& f : fields) write_le(out, f.values[i]);
    }
    for (const auto& face : mesh.faces) {
        write_le(out, static_cast<std::uint8_t>(K));
        for (Index v : face) write_le(out, static_cast<std::uint32_t>(v));
    }
    require(bool(out), mod, "failed writing " + path.string());
}

template <std::size_t K>
void save_obj(const PolygonMesh<K>& mesh, const std::filesystem::path& path)
{
    auto out = io_detail::open_for_write(path, false);
    out << std::setprecision(17);
    for (Index i = 0; i < mesh.num_vertices(); ++i) {
        out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
    }
    for (const auto& face : mesh.faces) {
        out << 'f';
        for (Index v : face) out << ' ' << v + 1;
        out << '\n';
    }
    require(bool(out), io_detail::mod, "failed writing " + path.string());
}

/// Sidecar CSV with header `vertex_index,<field>`.
inline void save_field_csv(const NamedField& field, const std::filesystem::path& path)
{
    auto out = io_detail::open_for_write(path, false);
    out << "vertex_index," << field.name << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < field.values.size(); ++i) out << i << ',' << field.values[i] << '\n';
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& mesh_path, const std::string& field)
{
    auto p = mesh_path;
    p.replace_extension();
    return p.string() + "." + field + ".csv";
}

/// Adds `cos(varpi * g)` for the field named `source` as `<source>_levelline`.
inline void add_levelline_field(VertexFields& fields, const std::string& source, double varpi)
{
    for (const auto& f : fields) {
        if (f.name == source) {
            fields.push_back({source + "_levelline", (varpi * f.values.array()).cos().matrix()});
            return;
        }
    }
    throw Error(io_detail::mod, "no field named '" + source + "'");
}

/// Writes a mesh with per-vertex scalar fields: PLY stores them as vertex
/// properties, OBJ writes one sidecar CSV per field next to the mesh.
template <std::size_t K>
void save_mesh_with_fields(
    const PolygonMesh<K>& mesh,
    const VertexFields& fields,
    const std::filesystem::path& path,
    std::optional<MeshFormat> format = {})
{
    io_detail::check_fields(mesh.num_vertices(), fields);
    if (format.value_or(io_detail::format_from_path(path)) == MeshFormat::ply) {
        save_ply(mesh, path, fields);
    } else {
        save_obj(mesh, path);
        for (const auto& f : fields) save_field_csv(f, sidecar_path(path, f.name));
    }
}

inline void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path)
{
    TriMesh empty;
    empty.vertices = cloud.points;
    save_ply(empty, path, {}, cloud.normals ? &*cloud.normals : nullptr);
}

/// Matrix Market `coordinate real general`, 1-based.
inline void save_matrix_market(const Eigen::SparseMatrix<double>& m, const std::filesystem::path& path)
{
    auto out = io_detail::open_for_write(path, false);
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n' << std::setprecision(17);
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
            out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
        }
    }
    require(bool(out), io_detail::mod, "failed writing " + path.string());
}

inline void save_matrix_market(const Eigen::MatrixXd& m, const std::filesystem::path& path)
{
    Eigen::SparseMatrix<double> s = m.sparseView(0.0, 0.0);
    save_matrix_market(s, path);
}

inline Eigen::SparseMatrix<double> load_matrix_market(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(bool(in), io_detail::mod, "cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    require(
        line.rfind("%%MatrixMarket matrix coordinate real", 0) == 0,
        io_detail::mod,
        path.string() + " is not a coordinate real Matrix Market file");
    const bool symmetric = line.find("symmetric") != std::string::npos;
    while (std::getline(in, line) && !line.empty() && line[0] == '%') {}
    std::istringstream header(line);
    Eigen::Index rows, cols, nnz;
    require(bool(header >> rows >> cols >> nnz), io_detail::mod, "bad Matrix Market size line");
    std::vector<Eigen::Triplet<double>> trips;
    for (Eigen::Index k = 0; k < nnz; ++k) {
        Eigen::Index i, j;
        double v;
        require(bool(in >> i >> j >> v), io_detail::mod, "truncated Matrix Market file");
        trips.emplace_back(i - 1, j - 1, v);
        if (symmetric && i != j) trips.emplace_back(j - 1, i - 1, v);
    }
    Eigen::SparseMatrix<double> m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

/// Dense column-major float64 array preceded by a one-line JSON header
/// `{"n":..,"K":..,"ordering":"column-major","dtype":"float64-le"}`.
inline void save_dense_array(const Eigen::MatrixXd& m, const std::filesystem::path& path)
{
    auto out = io_detail::open_for_write(path, true);
    nlohmann::json header = {
        {"n", m.rows()}, {"K", m.cols()}, {"ordering", "column-major"}, {"dtype", "float64-le"}};
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(m.data()), std::streamsize(sizeof(double) * m.size()));
    require(bool(out), io_detail::mod, "failed writing " + path.string());
}

inline Eigen::MatrixXd load_dense_array(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(bool(in), io_detail::mod, "cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    const auto header = nlohmann::json::parse(line);
    Eigen::MatrixXd m(header.at("n").get<Eigen::Index>(), header.at("K").get<Eigen::Index>());
    in.read(reinterpret_cast<char*>(m.data()), std::streamsize(sizeof(double) * m.size()));
    require(bool(in), io_detail::mod, "truncated array file " + path.string());
    return m;
}

} // namespace subdivfit
