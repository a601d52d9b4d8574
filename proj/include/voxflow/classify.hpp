#pragma once

#include <algorithm>
#include <vector>

#include "voxflow/shapes.hpp"

namespace voxflow {

// Occupancy statistics feeding the rule classifier.
struct GridStats {
    Bbox box;
    std::int64_t count = 0;
    double fill = 0.0;            // count / bbox volume
    std::vector<int> slice_area;  // per z inside bbox
    double bottom_ratio = 0.0;    // base slice area / max slice area
    double slice_uniform = 0.0;   // min/max slice area, one slice trimmed per end
    int bottom_components = 0;    // xy blobs across the two base slices (max)
    double above_slab_ratio = 0.0;  // cells above the widest slab / count
    double corner_score = 0.0;      // mean per-slice-bbox corner occupancy over the slab
};

namespace classify_detail {

// 4-connected component count over one z-slice, restricted to the bbox.
inline int slice_components(const VoxelGrid& g, const Bbox& b, int z) {
    const int w = b.ex(), h = b.ey();
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(w) * h, 0);
    std::vector<int> stack;
    int comps = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (seen[static_cast<std::size_t>(y) * w + x] || !g.at(b.x0 + x, b.y0 + y, z))
                continue;
            ++comps;
            stack.push_back(y * w + x);
            seen[static_cast<std::size_t>(y) * w + x] = 1;
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cx = cur % w, cy = cur / w;
                const int nx[4] = {cx - 1, cx + 1, cx, cx};
                const int ny[4] = {cy, cy, cy - 1, cy + 1};
                for (int k = 0; k < 4; ++k) {
                    if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
                    std::uint8_t& sv = seen[static_cast<std::size_t>(ny[k]) * w + nx[k]];
                    if (sv || !g.at(b.x0 + nx[k], b.y0 + ny[k], z)) continue;
                    sv = 1;
                    stack.push_back(ny[k] * w + nx[k]);
                }
            }
        }
    return comps;
}

}  // namespace classify_detail

inline GridStats grid_stats(const VoxelGrid& g) {
    GridStats s;
    s.box = bounding_box(g);  // throws on empty input
    s.count = g.count();
    const Bbox& b = s.box;
    s.fill = static_cast<double>(s.count) / (double(b.ex()) * b.ey() * b.ez());
    const int nz = b.ez();
    s.slice_area.assign(static_cast<std::size_t>(nz), 0);
    for (int z = b.z0; z <= b.z1; ++z)
        for (int y = b.y0; y <= b.y1; ++y)
            for (int x = b.x0; x <= b.x1; ++x)
                if (g.at(x, y, z)) ++s.slice_area[static_cast<std::size_t>(z - b.z0)];
    int max_area = 0;
    for (int i = 0; i < nz; ++i) max_area = std::max(max_area, s.slice_area[std::size_t(i)]);

    // Trim one slice per end before the uniformity ratio so a stray cell above
    // or below the body does not zero it out.
    const int lo = nz >= 5 ? 1 : 0, hi = nz >= 5 ? nz - 1 : nz;
    int min_core = max_area;
    for (int i = lo; i < hi; ++i) min_core = std::min(min_core, s.slice_area[std::size_t(i)]);
    s.slice_uniform = max_area > 0 ? double(min_core) / max_area : 0.0;

    const int base_area = std::max(s.slice_area.front(),
                                   nz > 1 ? s.slice_area[1] : s.slice_area.front());
    s.bottom_ratio = max_area > 0 ? double(base_area) / max_area : 0.0;
    s.bottom_components = classify_detail::slice_components(g, b, b.z0);
    if (nz > 1)
        s.bottom_components =
            std::max(s.bottom_components, classify_detail::slice_components(g, b, b.z0 + 1));

    // The slab ends at the last slice still holding ~the maximal area; back
    // rests and similar thin extensions live above it.
    int slab_end = 0;
    for (int i = 0; i < nz; ++i)
        if (s.slice_area[std::size_t(i)] >= 0.9 * max_area) slab_end = i;
    std::int64_t above = 0;
    for (int i = slab_end + 1; i < nz; ++i) above += s.slice_area[std::size_t(i)];
    s.above_slab_ratio = s.count > 0 ? double(above) / double(s.count) : 0.0;

    // Corner occupancy per slab slice, each against its own xy bounds.
    int slab_slices = 0, corner_hits = 0;
    for (int i = 0; i < nz; ++i) {
        if (s.slice_area[std::size_t(i)] < 0.7 * max_area) continue;
        const int z = b.z0 + i;
        int x0 = g.r, x1 = -1, y0 = g.r, y1 = -1;
        for (int y = b.y0; y <= b.y1; ++y)
            for (int x = b.x0; x <= b.x1; ++x)
                if (g.at(x, y, z)) {
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                }
        if (x1 < x0) continue;
        ++slab_slices;
        corner_hits += (g.at(x0, y0, z) ? 1 : 0) + (g.at(x1, y0, z) ? 1 : 0) +
                       (g.at(x0, y1, z) ? 1 : 0) + (g.at(x1, y1, z) ? 1 : 0);
    }
    s.corner_score = slab_slices > 0 ? corner_hits / (4.0 * slab_slices) : 0.0;
    return s;
}

// Documented decision tree over occupancy statistics. Deterministic for any
// non-empty grid; never throws past the emptiness check.
//
//  1. several disconnected blobs across the base slices + a sparse base
//     -> legs; occupancy above the widest slab says chair, otherwise table.
//  2. square slab cross-sections (high corner score) -> box.
//  3. uniform z profile with cut corners -> cylinder; middle-heavy -> sphere.
inline Category rule_classifier(const VoxelGrid& g) {
    const GridStats s = grid_stats(g);

    const bool legged = s.bottom_components >= 3 && s.bottom_ratio <= 0.6 && s.box.ez() >= 4;
    if (legged) return s.above_slab_ratio >= 0.05 ? Category::kChair : Category::kTable;

    const bool square_slab = s.corner_score >= 0.55;
    if (s.slice_uniform >= 0.82) return square_slab ? Category::kBox : Category::kCylinder;
    if (square_slab && s.fill >= 0.6) return Category::kBox;
    return Category::kSphere;
}

}  // namespace voxflow
