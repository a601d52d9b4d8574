#pragma once

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "voxflow/captions.hpp"
#include "voxflow/edits.hpp"
#include "voxflow/shapes.hpp"

namespace voxflow {

constexpr int kDatasetSchemaVersion = 1;

// One shape with its ten caption levels. Grids are regenerated from
// (category, params) on demand, which keeps records small and round-trips
// exact: parameters live on a dyadic lattice and serialize losslessly.
struct ShapeRecord {
    int id = 0;
    std::uint64_t seed = 0;
    Category category = Category::kBox;
    ParamMap params;
    std::vector<std::string> captions;  // levels 1..10

    VoxelGrid grid() const { return voxelize(category, params); }

    bool operator==(const ShapeRecord& o) const {
        return id == o.id && seed == o.seed && category == o.category && params == o.params &&
               captions == o.captions;
    }
};

struct EditRecord {
    int id = 0;
    std::uint64_t seed = 0;
    Category category = Category::kBox;
    EditKind kind = EditKind::kElongate;
    ParamMap before_params;
    ParamMap after_params;
    std::string instruction_fwd;
    std::string instruction_rev;

    VoxelGrid before_grid() const { return voxelize(category, before_params); }
    VoxelGrid after_grid() const { return voxelize(category, after_params); }

    bool operator==(const EditRecord& o) const {
        return id == o.id && seed == o.seed && category == o.category && kind == o.kind &&
               before_params == o.before_params && after_params == o.after_params &&
               instruction_fwd == o.instruction_fwd && instruction_rev == o.instruction_rev;
    }
};

namespace dataset_detail {

inline nlohmann::json params_json(const ParamMap& p) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : p) j[k] = v;
    return j;
}

inline ParamMap params_from_json(const nlohmann::json& j) {
    ParamMap p;
    for (auto it = j.begin(); it != j.end(); ++it) p[it.key()] = it.value().get<double>();
    return p;
}

}  // namespace dataset_detail

inline void to_json(nlohmann::json& j, const ShapeRecord& r) {
    j = nlohmann::json{{"schema", kDatasetSchemaVersion},
                       {"kind", "shape"},
                       {"id", r.id},
                       {"seed", r.seed},
                       {"category", category_name(r.category)},
                       {"params", dataset_detail::params_json(r.params)},
                       {"captions", r.captions}};
}

inline void from_json(const nlohmann::json& j, ShapeRecord& r) {
    if (j.at("schema").get<int>() != kDatasetSchemaVersion)
        throw IoError("unsupported dataset schema version " +
                      std::to_string(j.at("schema").get<int>()));
    if (j.at("kind").get<std::string>() != "shape") throw IoError("record kind is not 'shape'");
    r.id = j.at("id").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.category = category_from_name(j.at("category").get<std::string>());
    r.params = dataset_detail::params_from_json(j.at("params"));
    r.captions = j.at("captions").get<std::vector<std::string>>();
    if (r.captions.size() != kNumCaptionLevels)
        throw IoError("shape record must carry exactly 10 captions");
}

inline void to_json(nlohmann::json& j, const EditRecord& r) {
    j = nlohmann::json{{"schema", kDatasetSchemaVersion},
                       {"kind", "edit"},
                       {"id", r.id},
                       {"seed", r.seed},
                       {"category", category_name(r.category)},
                       {"edit_kind", edit_kind_name(r.kind)},
                       {"before", dataset_detail::params_json(r.before_params)},
                       {"after", dataset_detail::params_json(r.after_params)},
                       {"instruction_fwd", r.instruction_fwd},
                       {"instruction_rev", r.instruction_rev}};
}

inline void from_json(const nlohmann::json& j, EditRecord& r) {
    if (j.at("schema").get<int>() != kDatasetSchemaVersion)
        throw IoError("unsupported dataset schema version " +
                      std::to_string(j.at("schema").get<int>()));
    if (j.at("kind").get<std::string>() != "edit") throw IoError("record kind is not 'edit'");
    r.id = j.at("id").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.category = category_from_name(j.at("category").get<std::string>());
    r.kind = edit_kind_from_name(j.at("edit_kind").get<std::string>());
    r.before_params = dataset_detail::params_from_json(j.at("before"));
    r.after_params = dataset_detail::params_from_json(j.at("after"));
    r.instruction_fwd = j.at("instruction_fwd").get<std::string>();
    r.instruction_rev = j.at("instruction_rev").get<std::string>();
}

// JSONL: one record per line, no indentation, keys in sorted order. Byte
// identical across runs for the same inputs.
template <typename Record>
void write_dataset(const std::vector<Record>& items, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const Record& r : items) {
        nlohmann::json j = r;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed while writing '" + path + "'");
}

template <typename Record>
std::vector<Record> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<Record> items;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            items.push_back(j.get<Record>());
        } catch (const IoError& e) {
            throw IoError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception& e) {
            throw IoError(path + ": line " + std::to_string(line_no) +
                          ": malformed record: " + e.what());
        }
    }
    return items;
}

// Balanced over categories, child-seeded per index: regenerating with the
// same master seed reproduces the files byte for byte.
inline std::vector<ShapeRecord> build_shape_dataset(std::uint64_t master_seed, int count,
                                                    int id_offset = 0) {
    std::vector<ShapeRecord> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        ShapeRecord r;
        r.id = id_offset + i;
        r.seed = derive_seed(master_seed, static_cast<std::uint64_t>(id_offset + i));
        r.category = static_cast<Category>((id_offset + i) % kNumCategories);
        VoxelShape s = gen_shape(r.seed, r.category);
        r.params = s.params;
        for (int level = 1; level <= kNumCaptionLevels; ++level)
            r.captions.push_back(caption_for(s, level));
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<EditRecord> build_edit_dataset(std::uint64_t master_seed, int count,
                                                  int id_offset = 0) {
    std::vector<EditRecord> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        EditRecord r;
        r.id = id_offset + i;
        r.seed = derive_seed(master_seed ^ 0xed17ull, static_cast<std::uint64_t>(id_offset + i));
        EditPair p = gen_edit_pair(r.seed);
        r.category = p.before.category;
        r.kind = p.kind;
        r.before_params = p.before.params;
        r.after_params = p.after.params;
        r.instruction_fwd = p.instruction_fwd;
        r.instruction_rev = p.instruction_rev;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace voxflow
