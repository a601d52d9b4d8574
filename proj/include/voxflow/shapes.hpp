#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "voxflow/common.hpp"
#include "voxflow/rng.hpp"

namespace voxflow {

constexpr int kGridR = 16;

enum class Category { kBox, kSphere, kCylinder, kTable, kChair };
constexpr int kNumCategories = 5;

inline const char* category_name(Category c) {
    switch (c) {
        case Category::kBox: return "box";
        case Category::kSphere: return "sphere";
        case Category::kCylinder: return "cylinder";
        case Category::kTable: return "table";
        case Category::kChair: return "chair";
    }
    return "?";
}

inline Category category_from_name(const std::string& s) {
    for (int i = 0; i < kNumCategories; ++i)
        if (s == category_name(static_cast<Category>(i))) return static_cast<Category>(i);
    throw UsageError("unknown category '" + s + "'");
}

// Cubic boolean occupancy grid, index order z-major: (z*r + y)*r + x.
struct VoxelGrid {
    int r = kGridR;
    std::vector<std::uint8_t> cells;

    VoxelGrid() : cells(static_cast<std::size_t>(kGridR) * kGridR * kGridR, 0) {}
    explicit VoxelGrid(int res) : r(res), cells(static_cast<std::size_t>(res) * res * res, 0) {}

    std::uint8_t& at(int x, int y, int z) {
        return cells[(static_cast<std::size_t>(z) * r + y) * r + x];
    }
    std::uint8_t at(int x, int y, int z) const {
        return cells[(static_cast<std::size_t>(z) * r + y) * r + x];
    }

    std::int64_t count() const {
        std::int64_t n = 0;
        for (auto c : cells) n += c ? 1 : 0;
        return n;
    }

    bool operator==(const VoxelGrid& o) const { return r == o.r && cells == o.cells; }
};

struct Bbox {
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1, z0 = 0, z1 = -1;  // inclusive
    int ex() const { return x1 - x0 + 1; }
    int ey() const { return y1 - y0 + 1; }
    int ez() const { return z1 - z0 + 1; }
};

inline Bbox bounding_box(const VoxelGrid& g) {
    Bbox b{g.r, -1, g.r, -1, g.r, -1};
    for (int z = 0; z < g.r; ++z)
        for (int y = 0; y < g.r; ++y)
            for (int x = 0; x < g.r; ++x)
                if (g.at(x, y, z)) {
                    b.x0 = std::min(b.x0, x);
                    b.x1 = std::max(b.x1, x);
                    b.y0 = std::min(b.y0, y);
                    b.y1 = std::max(b.y1, y);
                    b.z0 = std::min(b.z0, z);
                    b.z1 = std::max(b.z1, z);
                }
    if (b.x1 < b.x0) throw NumericError("bounding_box: empty grid");
    return b;
}

// |a AND b| / |a OR b|; two empty grids count as identical.
inline double shape_iou(const VoxelGrid& a, const VoxelGrid& b) {
    if (a.r != b.r)
        throw NumericError("shape_iou: resolution mismatch " + std::to_string(a.r) + " vs " +
                           std::to_string(b.r));
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        const bool av = a.cells[i] != 0, bv = b.cells[i] != 0;
        inter += (av && bv) ? 1 : 0;
        uni += (av || bv) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

using ParamMap = std::map<std::string, double>;

// Parameters and derived grids live on a 1/256 lattice so edit deltas invert
// exactly in floating point.
inline double snap256(double v) { return std::round(v * 256.0) / 256.0; }

struct VoxelShape {
    Category category = Category::kBox;
    ParamMap params;
    std::uint64_t seed = 0;
    VoxelGrid grid;
};

namespace detail {

inline int cells_of(double extent, int r) {
    const int n = static_cast<int>(std::lround(extent * r));
    return std::max(1, std::min(r, n));
}

inline void fill_box(VoxelGrid& g, int x0, int nx, int y0, int ny, int z0, int nz) {
    for (int z = z0; z < z0 + nz; ++z)
        for (int y = y0; y < y0 + ny; ++y)
            for (int x = x0; x < x0 + nx; ++x)
                if (x >= 0 && x < g.r && y >= 0 && y < g.r && z >= 0 && z < g.r) g.at(x, y, z) = 1;
}

inline void fill_legs(VoxelGrid& g, int ox, int nx, int oy, int ny, int inset, int leg_w,
                      int leg_h) {
    const int ni = std::max(0, std::min(inset, (std::min(nx, ny) - 2 * leg_w) / 2));
    const int xa = ox + ni, xb = ox + nx - ni - leg_w;
    const int ya = oy + ni, yb = oy + ny - ni - leg_w;
    fill_box(g, xa, leg_w, ya, leg_w, 0, leg_h);
    fill_box(g, xb, leg_w, ya, leg_w, 0, leg_h);
    fill_box(g, xa, leg_w, yb, leg_w, 0, leg_h);
    fill_box(g, xb, leg_w, yb, leg_w, 0, leg_h);
}

}  // namespace detail

// Pure function from (category, params) to occupancy. Box extents resolve to
// whole cells, so the occupied count is exactly the product of the rounded
// per-axis extents.
inline VoxelGrid voxelize(Category cat, const ParamMap& p, int r = kGridR) {
    using detail::cells_of;
    using detail::fill_box;
    VoxelGrid g(r);
    auto get = [&](const char* k) {
        auto it = p.find(k);
        if (it == p.end()) throw NumericError(std::string("voxelize: missing param '") + k + "'");
        return it->second;
    };
    switch (cat) {
        case Category::kBox: {
            const int nx = cells_of(get("wx"), r), ny = cells_of(get("wy"), r),
                      nz = cells_of(get("wz"), r);
            fill_box(g, (r - nx) / 2, nx, (r - ny) / 2, ny, (r - nz) / 2, nz);
            break;
        }
        case Category::kSphere: {
            const double rad = get("r") * r;
            const double c = r / 2.0;
            for (int z = 0; z < r; ++z)
                for (int y = 0; y < r; ++y)
                    for (int x = 0; x < r; ++x) {
                        const double dx = x + 0.5 - c, dy = y + 0.5 - c, dz = z + 0.5 - c;
                        if (dx * dx + dy * dy + dz * dz <= rad * rad) g.at(x, y, z) = 1;
                    }
            if (g.count() == 0) g.at(r / 2, r / 2, r / 2) = 1;
            break;
        }
        case Category::kCylinder: {
            const double rad = get("r") * r;
            const double c = r / 2.0;
            const int nz = cells_of(get("h"), r);
            const int z0 = (r - nz) / 2;
            for (int z = z0; z < z0 + nz; ++z)
                for (int y = 0; y < r; ++y)
                    for (int x = 0; x < r; ++x) {
                        const double dx = x + 0.5 - c, dy = y + 0.5 - c;
                        if (dx * dx + dy * dy <= rad * rad) g.at(x, y, z) = 1;
                    }
            if (g.count() == 0) fill_box(g, r / 2, 1, r / 2, 1, z0, nz);
            break;
        }
        case Category::kTable: {
            const int nx = cells_of(get("top_wx"), r), ny = cells_of(get("top_wy"), r);
            const int nt = cells_of(get("top_t"), r);
            const int nl = cells_of(get("leg_h"), r);
            const int nw = cells_of(get("leg_w"), r);
            const int ni = static_cast<int>(std::lround(get("leg_inset") * r));
            const int ox = (r - nx) / 2, oy = (r - ny) / 2;
            detail::fill_legs(g, ox, nx, oy, ny, ni, nw, nl);
            fill_box(g, ox, nx, oy, ny, nl, std::min(nt, r - nl));
            break;
        }
        case Category::kChair: {
            const int nx = cells_of(get("seat_wx"), r), ny = cells_of(get("seat_wy"), r);
            const int nt = cells_of(get("seat_t"), r);
            const int nl = cells_of(get("leg_h"), r);
            const int nw = cells_of(get("leg_w"), r);
            const int ni = static_cast<int>(std::lround(get("leg_inset") * r));
            const int ox = (r - nx) / 2, oy = (r - ny) / 2;
            detail::fill_legs(g, ox, nx, oy, ny, ni, nw, nl);
            const int seat_top = std::min(nl + nt, r);
            fill_box(g, ox, nx, oy, ny, nl, seat_top - nl);
            if (get("back_present") > 0.5) {
                const int nbt = cells_of(get("back_t"), r);
                const int nbh = cells_of(get("back_h"), r);
                fill_box(g, ox, nx, oy + ny - nbt, nbt, seat_top,
                         std::min(nbh, r - seat_top));
            }
            break;
        }
    }
    return g;
}

// Continuous per-axis extents used by caption rules.
inline std::array<double, 3> shape_extents(Category cat, const ParamMap& p) {
    auto get = [&](const char* k) { return p.at(k); };
    switch (cat) {
        case Category::kBox: return {get("wx"), get("wy"), get("wz")};
        case Category::kSphere: {
            const double d = 2.0 * get("r");
            return {d, d, d};
        }
        case Category::kCylinder: {
            const double d = 2.0 * get("r");
            return {d, d, get("h")};
        }
        case Category::kTable:
            return {get("top_wx"), get("top_wy"), get("leg_h") + get("top_t")};
        case Category::kChair:
            return {get("seat_wx"), get("seat_wy"),
                    get("leg_h") + get("seat_t") +
                        (get("back_present") > 0.5 ? get("back_h") : 0.0)};
    }
    return {0, 0, 0};
}

// Deterministic per (seed, category): parameters are drawn in a documented
// fixed order from the ranges below, snapped to the 1/256 lattice.
inline VoxelShape gen_shape(std::uint64_t seed, Category cat) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(cat) + 101));
    auto draw = [&](double lo, double hi) { return snap256(rng.uniform(lo, hi)); };
    VoxelShape s;
    s.category = cat;
    s.seed = seed;
    ParamMap& p = s.params;
    switch (cat) {
        case Category::kBox:
            p["wx"] = draw(0.30, 0.90);
            p["wy"] = draw(0.30, 0.90);
            p["wz"] = draw(0.30, 0.90);
            break;
        case Category::kSphere:
            p["r"] = draw(0.25, 0.44);
            break;
        case Category::kCylinder:
            p["r"] = draw(0.18, 0.38);
            p["h"] = draw(0.40, 0.90);
            break;
        case Category::kTable:
            p["top_wx"] = draw(0.55, 0.90);
            p["top_wy"] = draw(0.55, 0.90);
            p["top_t"] = draw(0.10, 0.18);
            p["leg_h"] = draw(0.30, 0.55);
            p["leg_w"] = draw(0.10, 0.15);
            p["leg_inset"] = draw(0.00, 0.08);
            break;
        case Category::kChair:
            p["seat_wx"] = draw(0.45, 0.65);
            p["seat_wy"] = draw(0.45, 0.65);
            p["seat_t"] = draw(0.10, 0.16);
            p["leg_h"] = draw(0.25, 0.45);
            p["leg_w"] = draw(0.10, 0.14);
            p["leg_inset"] = draw(0.00, 0.08);
            p["back_h"] = draw(0.30, 0.50);
            p["back_t"] = draw(0.10, 0.16);
            p["back_present"] = 1.0;
            break;
    }
    s.grid = voxelize(cat, p);
    return s;
}

}  // namespace voxflow
