#include "volfit/ply.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "volfit/errors.hpp"

namespace volfit {

namespace {

// Coordinates are stored as float32; printing with 9 significant digits makes
// read -> write reproduce the file byte for byte.
std::string fmt_float(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(static_cast<float>(v)));
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

struct Header {
    std::size_t vertex_count = 0;
    std::size_t face_count = 0;
    std::vector<std::string> vertex_props;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw IoError(path.string() + ": not a PLY file");
    Header h;
    std::string current;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii") throw IoError(path.string() + ": only ASCII PLY is supported");
        } else if (word == "element") {
            std::size_t count = 0;
            ss >> current >> count;
            if (current == "vertex") h.vertex_count = count;
            if (current == "face") h.face_count = count;
        } else if (word == "property" && current == "vertex") {
            std::string type, name;
            ss >> type >> name;
            h.vertex_props.push_back(name);
        } else if (word == "end_header") {
            return h;
        }
    }
    throw IoError(path.string() + ": truncated PLY header");
}

Points read_vertices(std::istream& in, const Header& h, const std::filesystem::path& path,
                     const std::string& int_prop, std::vector<int>* ints) {
    int ix = -1, iy = -1, iz = -1, ip = -1;
    for (std::size_t i = 0; i < h.vertex_props.size(); ++i) {
        const auto& n = h.vertex_props[i];
        if (n == "x") ix = static_cast<int>(i);
        if (n == "y") iy = static_cast<int>(i);
        if (n == "z") iz = static_cast<int>(i);
        if (n == int_prop) ip = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw IoError(path.string() + ": vertex element lacks x/y/z");
    Points pts(static_cast<Eigen::Index>(h.vertex_count), 3);
    std::vector<double> vals(h.vertex_props.size());
    for (std::size_t r = 0; r < h.vertex_count; ++r) {
        for (auto& v : vals)
            if (!(in >> v)) throw IoError(path.string() + ": truncated vertex data");
        pts.row(static_cast<Eigen::Index>(r)) << static_cast<float>(vals[ix]), static_cast<float>(vals[iy]),
            static_cast<float>(vals[iz]);
        if (ints && ip >= 0) ints->push_back(static_cast<int>(vals[ip]));
    }
    return pts;
}

}  // namespace

void write_mesh_ply(const std::filesystem::path& path, const TriMesh& mesh) {
    auto out = open_out(path);
    out << "ply\nformat ascii 1.0\n"
        << "element vertex " << mesh.num_vertices() << "\n"
        << "property float x\nproperty float y\nproperty float z\n"
        << "element face " << mesh.num_faces() << "\n"
        << "property list uchar int vertex_indices\nend_header\n";
    for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i)
        out << fmt_float(mesh.vertices()(i, 0)) << ' ' << fmt_float(mesh.vertices()(i, 1)) << ' '
            << fmt_float(mesh.vertices()(i, 2)) << '\n';
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f)
        out << "3 " << mesh.faces()(f, 0) << ' ' << mesh.faces()(f, 1) << ' ' << mesh.faces()(f, 2) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

TriMesh read_mesh_ply(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const Header h = read_header(in, path);
    Points v = read_vertices(in, h, path, "", nullptr);
    Faces f(static_cast<Eigen::Index>(h.face_count), 3);
    for (std::size_t r = 0; r < h.face_count; ++r) {
        int count = 0;
        if (!(in >> count) || count != 3) throw IoError(path.string() + ": only triangle faces are supported");
        in >> f(r, 0) >> f(r, 1) >> f(r, 2);
    }
    if (!in) throw IoError(path.string() + ": truncated face data");
    return TriMesh(std::move(v), std::move(f));
}

void write_points_ply(const std::filesystem::path& path, const Points& points, const std::vector<int>* ints,
                      const std::string& name) {
    auto out = open_out(path);
    out << "ply\nformat ascii 1.0\nelement vertex " << points.rows() << "\n"
        << "property float x\nproperty float y\nproperty float z\n";
    if (ints) out << "property int " << name << "\n";
    out << "end_header\n";
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        out << fmt_float(points(i, 0)) << ' ' << fmt_float(points(i, 1)) << ' ' << fmt_float(points(i, 2));
        if (ints) out << ' ' << (*ints)[static_cast<std::size_t>(i)];
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

PointCloudFile read_points_ply(const std::filesystem::path& path, const std::string& name) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const Header h = read_header(in, path);
    PointCloudFile result;
    std::vector<int> ints;
    result.points = read_vertices(in, h, path, name, &ints);
    if (!ints.empty() || (h.vertex_count == 0 && std::find(h.vertex_props.begin(), h.vertex_props.end(), name) !=
                                                     h.vertex_props.end()))
        result.int_property = std::move(ints);
    return result;
}

}  // namespace volfit
