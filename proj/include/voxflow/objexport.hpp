#pragma once

#include <array>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "voxflow/shapes.hpp"

namespace voxflow {

struct ObjMesh {
    std::vector<std::array<int, 3>> vertices;
    std::vector<std::array<int, 4>> faces;  // 0-based vertex indices, CCW from outside
};

// Quad surface of the occupancy grid: one face per occupied-cell side that
// borders an empty cell or the grid boundary, with shared corners welded.
inline ObjMesh grid_surface(const VoxelGrid& g) {
    if (g.count() == 0) throw NumericError("grid_surface: empty grid");
    ObjMesh mesh;
    std::map<std::array<int, 3>, int> weld;
    auto vid = [&](int x, int y, int z) {
        const std::array<int, 3> key{x, y, z};
        auto it = weld.find(key);
        if (it != weld.end()) return it->second;
        const int id = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(key);
        weld.emplace(key, id);
        return id;
    };
    auto occupied = [&](int x, int y, int z) {
        if (x < 0 || x >= g.r || y < 0 || y >= g.r || z < 0 || z >= g.r) return false;
        return g.at(x, y, z) != 0;
    };
    // Corner offsets per face, wound counter-clockwise seen from outside.
    struct Face {
        int dx, dy, dz;
        std::array<std::array<int, 3>, 4> corners;
    };
    static const std::array<Face, 6> kFaces = {{
        {+1, 0, 0, {{{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {1, 0, 1}}}},
        {-1, 0, 0, {{{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {0, 1, 0}}}},
        {0, +1, 0, {{{0, 1, 0}, {0, 1, 1}, {1, 1, 1}, {1, 1, 0}}}},
        {0, -1, 0, {{{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}}}},
        {0, 0, +1, {{{0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}}},
        {0, 0, -1, {{{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}}}},
    }};
    for (int z = 0; z < g.r; ++z)
        for (int y = 0; y < g.r; ++y)
            for (int x = 0; x < g.r; ++x) {
                if (!g.at(x, y, z)) continue;
                for (const Face& f : kFaces) {
                    if (occupied(x + f.dx, y + f.dy, z + f.dz)) continue;
                    std::array<int, 4> q{};
                    for (int c = 0; c < 4; ++c)
                        q[static_cast<std::size_t>(c)] =
                            vid(x + f.corners[std::size_t(c)][0], y + f.corners[std::size_t(c)][1],
                                z + f.corners[std::size_t(c)][2]);
                    mesh.faces.push_back(q);
                }
            }
    return mesh;
}

inline void export_obj(const VoxelGrid& g, const std::string& path) {
    const ObjMesh mesh = grid_surface(g);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& v : mesh.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << ' ' << f[3] + 1 << '\n';
    if (!out) throw IoError("failed while writing '" + path + "'");
}

}  // namespace voxflow
