#pragma once

#include <string>
#include <utility>
#include <vector>

#include "voxflow/captions.hpp"
#include "voxflow/shapes.hpp"

namespace voxflow {

enum class EditKind { kElongate, kShrink, kWiden, kMovePart, kRemovePart };

inline const char* edit_kind_name(EditKind k) {
    switch (k) {
        case EditKind::kElongate: return "elongate";
        case EditKind::kShrink: return "shrink";
        case EditKind::kWiden: return "widen";
        case EditKind::kMovePart: return "move_part";
        case EditKind::kRemovePart: return "remove_part";
    }
    return "?";
}

inline EditKind edit_kind_from_name(const std::string& s) {
    for (int i = 0; i < 5; ++i)
        if (s == edit_kind_name(static_cast<EditKind>(i))) return static_cast<EditKind>(i);
    throw UsageError("unknown edit kind '" + s + "'");
}

// A parameter-space delta; values are 1/256-lattice so apply/revert round-trip
// exactly.
struct EditDelta {
    std::vector<std::pair<std::string, double>> deltas;

    EditDelta inverse() const {
        EditDelta inv;
        for (const auto& [k, v] : deltas) inv.deltas.emplace_back(k, -v);
        return inv;
    }
};

inline ParamMap apply_edit(const ParamMap& params, const EditDelta& delta) {
    ParamMap out = params;
    for (const auto& [k, v] : delta.deltas) {
        auto it = out.find(k);
        if (it == out.end()) throw NumericError("apply_edit: missing param '" + k + "'");
        it->second += v;
    }
    return out;
}

struct EditPair {
    VoxelShape before;
    VoxelShape after;
    EditKind kind = EditKind::kElongate;
    EditDelta delta;
    std::string instruction_fwd;
    std::string instruction_rev;
};

namespace edit_detail {

// Which parameters a kind drives, per category. elongate grows the vertical
// extent, widen the x footprint, shrink every primary extent at once.
inline std::vector<std::string> edited_params(Category cat, EditKind kind) {
    switch (kind) {
        case EditKind::kElongate:
            switch (cat) {
                case Category::kBox: return {"wz"};
                case Category::kCylinder: return {"h"};
                case Category::kTable:
                case Category::kChair: return {"leg_h"};
                default: return {};
            }
        case EditKind::kShrink:
            switch (cat) {
                case Category::kBox: return {"wx", "wy", "wz"};
                case Category::kSphere: return {"r"};
                case Category::kCylinder: return {"r", "h"};
                case Category::kTable: return {"top_wx", "top_wy"};
                case Category::kChair: return {"seat_wx", "seat_wy"};
            }
            return {};
        case EditKind::kWiden:
            switch (cat) {
                case Category::kBox: return {"wx"};
                case Category::kSphere: return {"r"};
                case Category::kCylinder: return {"r"};
                case Category::kTable: return {"top_wx"};
                case Category::kChair: return {"seat_wx"};
            }
            return {};
        case EditKind::kMovePart:
            return (cat == Category::kTable || cat == Category::kChair)
                       ? std::vector<std::string>{"leg_inset"}
                       : std::vector<std::string>{};
        case EditKind::kRemovePart:
            return cat == Category::kChair ? std::vector<std::string>{"back_present"}
                                           : std::vector<std::string>{};
    }
    return {};
}

// Legal post-edit ranges, mirroring the gen_shape draw ranges with head room.
inline std::pair<double, double> param_range(Category cat, const std::string& name) {
    if (name == "r") return cat == Category::kSphere ? std::pair{0.19, 0.46} : std::pair{0.12, 0.42};
    if (name == "h") return {0.30, 0.95};
    if (name == "wx" || name == "wy" || name == "wz") return {0.22, 0.95};
    if (name == "top_wx" || name == "top_wy") return {0.40, 0.95};
    if (name == "seat_wx" || name == "seat_wy") return {0.35, 0.80};
    if (name == "leg_h") return {0.18, 0.70};
    if (name == "leg_inset") return {0.0, 0.125};
    if (name == "back_present") return {0.0, 1.0};
    throw NumericError("param_range: unknown '" + name + "'");
}

inline std::string adverb(double magnitude) {
    if (magnitude < 0.15625) return "slightly";
    if (magnitude < 0.234375) return "moderately";
    return "strongly";
}

// Forward/reverse instruction templates. No digits, every word in the closed
// vocabulary, well under the 30-word cap.
inline std::pair<std::string, std::string> instructions(Category cat, EditKind kind,
                                                        double signed_delta) {
    const std::string cname = category_name(cat);
    const std::string adv = adverb(std::abs(signed_delta));
    const bool furniture = cat == Category::kTable || cat == Category::kChair;
    switch (kind) {
        case EditKind::kElongate: {
            std::string fwd = furniture ? "stretch the legs " + adv + " upward"
                                        : "stretch the " + cname + " " + adv + " upward";
            std::string rev = furniture ? "shorten the legs " + adv
                                        : "make the " + cname + " " + adv + " shorter";
            return {fwd, rev};
        }
        case EditKind::kShrink:
            return {"shrink the whole " + cname + " " + adv,
                    "enlarge the whole " + cname + " " + adv};
        case EditKind::kWiden:
            return {"widen the " + cname + " " + adv,
                    "make the " + cname + " " + adv + " narrower"};
        case EditKind::kMovePart: {
            std::string fwd = signed_delta > 0 ? "move the legs slightly inward"
                                               : "move the legs slightly outward";
            std::string rev = signed_delta > 0 ? "move the legs slightly outward"
                                               : "move the legs slightly inward";
            return {fwd, rev};
        }
        case EditKind::kRemovePart:
            return {"remove the backrest from the chair", "add a backrest to the chair"};
    }
    return {"keep the object unchanged", "keep the object unchanged"};
}

}  // namespace edit_detail

inline const std::string& identity_instruction() {
    static const std::string s = "keep the object unchanged";
    return s;
}

// Draws a base shape and a compatible parameter edit, emitting forward and
// reverse instructions. Deltas below one voxel of effect are resampled; after
// bounded retries the seed is reported as degenerate.
inline EditPair gen_edit_pair(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 7001));
    constexpr int kMaxTries = 24;
    for (int attempt = 0; attempt < kMaxTries; ++attempt) {
        const Category cat = static_cast<Category>(rng.below(kNumCategories));
        VoxelShape before = gen_shape(rng.next_u64(), cat);
        const EditKind kind = static_cast<EditKind>(rng.below(5));
        const auto names = edit_detail::edited_params(cat, kind);
        if (names.empty()) continue;

        EditDelta delta;
        double signed_mag = 0.0;
        if (kind == EditKind::kRemovePart) {
            if (before.params.at("back_present") < 0.5) continue;
            delta.deltas.emplace_back("back_present", -1.0);
            signed_mag = -1.0;
        } else if (kind == EditKind::kMovePart) {
            const double cur = before.params.at(names[0]);
            const double step = 0.0625;  // one voxel of inset
            const auto [lo, hi] = edit_detail::param_range(cat, names[0]);
            const bool can_in = cur + step <= hi, can_out = cur - step >= lo;
            if (!can_in && !can_out) continue;
            const bool inward = can_in && (!can_out || rng.uniform() < 0.5);
            signed_mag = inward ? step : -step;
            delta.deltas.emplace_back(names[0], signed_mag);
        } else {
            // Joint feasible range for a shared signed magnitude.
            const double kMin = 0.125, kMax = 0.28125;
            double room_up = 1e9, room_dn = 1e9;
            for (const auto& n : names) {
                const auto [lo, hi] = edit_detail::param_range(cat, n);
                room_up = std::min(room_up, hi - before.params.at(n));
                room_dn = std::min(room_dn, before.params.at(n) - lo);
            }
            // Keep the grown solid inside the unit cell so the change stays
            // visible after voxelization.
            if (kind == EditKind::kElongate)
                room_up = std::min(room_up, 0.9375 - shape_extents(cat, before.params)[2]);
            const double dir = kind == EditKind::kShrink ? -1.0 : 1.0;
            const double room = dir > 0 ? room_up : room_dn;
            if (room < kMin) continue;
            const double mag = snap256(rng.uniform(kMin, std::min(kMax, room)));
            if (mag < kMin || mag * kGridR < 1.5) continue;
            signed_mag = dir * mag;
            for (const auto& n : names) delta.deltas.emplace_back(n, signed_mag);
        }

        EditPair pair;
        pair.before = before;
        pair.kind = kind;
        pair.delta = delta;
        pair.after.category = cat;
        pair.after.seed = before.seed;
        pair.after.params = apply_edit(before.params, delta);
        pair.after.grid = voxelize(cat, pair.after.params);
        auto [fwd, rev] = edit_detail::instructions(cat, kind, signed_mag);
        pair.instruction_fwd = std::move(fwd);
        pair.instruction_rev = std::move(rev);
        return pair;
    }
    throw NumericError("gen_edit_pair: no feasible edit for seed " + std::to_string(seed));
}

}  // namespace voxflow
