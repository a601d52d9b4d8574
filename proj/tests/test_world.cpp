#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "voxflow/classify.hpp"
#include "voxflow/dataset.hpp"
#include "voxflow/metrics.hpp"
#include "voxflow/objexport.hpp"
#include "voxflow/text.hpp"

using namespace voxflow;

namespace {

std::string temp_path(const std::string& name) {
    return std::string("vf_test_") + name;
}

}  // namespace

TEST_CASE("box occupancy equals the product of rounded extents") {
    for (int s = 0; s < 50; ++s) {
        VoxelShape b = gen_shape(static_cast<std::uint64_t>(s), Category::kBox);
        auto cells = [](double w) {
            return std::max<std::int64_t>(1, std::min<std::int64_t>(kGridR, std::llround(w * kGridR)));
        };
        const std::int64_t want =
            cells(b.params.at("wx")) * cells(b.params.at("wy")) * cells(b.params.at("wz"));
        CHECK(b.grid.count() == want);
    }
}

TEST_CASE("sphere occupancy tracks the analytic volume within 15%") {
    for (int s = 0; s < 200; ++s) {
        VoxelShape sp = gen_shape(static_cast<std::uint64_t>(s), Category::kSphere);
        const double rad = sp.params.at("r") * kGridR;
        const double vol = 4.0 / 3.0 * M_PI * rad * rad * rad;
        CHECK(std::abs(static_cast<double>(sp.grid.count()) - vol) / vol <= 0.15);
    }
}

TEST_CASE("shape generation is deterministic per (seed, category)") {
    for (int c = 0; c < kNumCategories; ++c) {
        const auto cat = static_cast<Category>(c);
        VoxelShape a = gen_shape(99, cat);
        VoxelShape b = gen_shape(99, cat);
        CHECK(a.params == b.params);
        CHECK(a.grid == b.grid);
        CHECK(a.grid.count() >= 1);
    }
}

TEST_CASE("caption rules") {
    // Level 1 is exactly "a <category>".
    for (int s = 0; s < 20; ++s) {
        VoxelShape sp = gen_shape(static_cast<std::uint64_t>(s), Category::kSphere);
        CHECK(caption_for(sp, 1) == "a sphere");
    }

    // A strongly anisotropic box mentions an elongation adjective from level 3.
    ParamMap p{{"wx", 0.875}, {"wy", 0.3125}, {"wz", 0.5}};
    for (int level = 3; level <= 10; ++level) {
        const std::string text = caption_for(Category::kBox, p, level);
        bool found = false;
        for (const auto& adj : elongation_adjectives())
            found = found || text.find(adj) != std::string::npos;
        CHECK(found);
    }

    // Pure function of (params, level).
    VoxelShape t = gen_shape(7, Category::kTable);
    CHECK(caption_for(t, 6) == caption_for(t.category, t.params, 6));

    // Token counts never decrease with the level, per shape.
    for (int s = 0; s < 25; ++s) {
        for (int c = 0; c < kNumCategories; ++c) {
            VoxelShape sh = gen_shape(static_cast<std::uint64_t>(s), static_cast<Category>(c));
            std::size_t prev = 0;
            for (int level = 1; level <= 10; ++level) {
                const auto words = split_words(caption_for(sh, level));
                CHECK(words.size() >= prev);
                prev = words.size();
            }
        }
    }
}

TEST_CASE("every caption and instruction stays inside the closed vocabulary") {
    Vocab v = Vocab::standard();
    CHECK(v.size() <= 256);
    for (int s = 0; s < 40; ++s) {
        for (int c = 0; c < kNumCategories; ++c) {
            VoxelShape sh = gen_shape(static_cast<std::uint64_t>(s), static_cast<Category>(c));
            for (int level = 1; level <= 10; ++level) {
                CHECK_NOTHROW(v.tokenize(level_hint(level)));
                CHECK_NOTHROW(v.tokenize(caption_for(sh, level)));
            }
        }
        EditPair p = gen_edit_pair(static_cast<std::uint64_t>(s));
        CHECK_NOTHROW(v.tokenize(p.instruction_fwd));
        CHECK_NOTHROW(v.tokenize(p.instruction_rev));
        CHECK(split_words(p.instruction_fwd).size() <= 30);
        CHECK(split_words(p.instruction_rev).size() <= 30);
        for (char ch : p.instruction_fwd + p.instruction_rev) CHECK(!std::isdigit(ch));
    }
    CHECK_NOTHROW(v.tokenize(identity_instruction()));
}

TEST_CASE("edit pairs: construction, inversion, antonyms") {
    int elongates = 0;
    for (int s = 0; s < 120; ++s) {
        EditPair p = gen_edit_pair(static_cast<std::uint64_t>(s));
        // Forward then reverse delta restores the original parameters exactly.
        CHECK(apply_edit(apply_edit(p.before.params, p.delta), p.delta.inverse()) ==
              p.before.params);
        CHECK(p.after.params == apply_edit(p.before.params, p.delta));
        CHECK(p.before.category == p.after.category);
        CHECK(p.before.seed == p.after.seed);
        if (p.kind == EditKind::kElongate) {
            ++elongates;
            const Bbox b0 = bounding_box(p.before.grid);
            const Bbox b1 = bounding_box(p.after.grid);
            CHECK(b1.ez() > b0.ez());
            CHECK(p.instruction_fwd.find("stretch") != std::string::npos);
            const bool rev_ok = p.instruction_rev.find("shorten") != std::string::npos ||
                                p.instruction_rev.find("shorter") != std::string::npos;
            CHECK(rev_ok);
        }
        if (p.kind == EditKind::kShrink) {
            CHECK(p.instruction_fwd.find("shrink") != std::string::npos);
            CHECK(p.instruction_rev.find("enlarge") != std::string::npos);
        }
    }
    CHECK(elongates > 10);
}

TEST_CASE("dataset JSONL round trip and error reporting") {
    auto shapes = build_shape_dataset(42, 100);
    const std::string path = temp_path("shapes.jsonl");
    write_dataset(shapes, path);
    auto back = read_dataset<ShapeRecord>(path);
    CHECK(back == shapes);

    // Regeneration is byte identical.
    const std::string path2 = temp_path("shapes2.jsonl");
    write_dataset(build_shape_dataset(42, 100), path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);

    auto edits = build_edit_dataset(42, 50);
    const std::string epath = temp_path("edits.jsonl");
    write_dataset(edits, epath);
    CHECK(read_dataset<EditRecord>(epath) == edits);

    // Schema version mismatch is rejected.
    {
        std::ofstream bad(temp_path("bad_schema.jsonl"), std::ios::binary);
        nlohmann::json j = shapes[0];
        j["schema"] = 999;
        bad << j.dump() << '\n';
    }
    CHECK_THROWS_AS(read_dataset<ShapeRecord>(temp_path("bad_schema.jsonl")), IoError);

    // A truncated line is reported with its line number.
    {
        std::ofstream trunc(temp_path("trunc.jsonl"), std::ios::binary);
        nlohmann::json j0 = shapes[0];
        nlohmann::json j1 = shapes[1];
        trunc << j0.dump() << '\n';
        const std::string full = j1.dump();
        trunc << full.substr(0, full.size() / 2) << '\n';
    }
    CHECK_THROWS_WITH_AS(read_dataset<ShapeRecord>(temp_path("trunc.jsonl")),
                         doctest::Contains("line 2"), IoError);

    for (const char* p2 :
         {"shapes.jsonl", "shapes2.jsonl", "edits.jsonl", "bad_schema.jsonl", "trunc.jsonl"})
        std::remove(temp_path(p2).c_str());
}

TEST_CASE("rule classifier") {
    // Self-consistency: >= 98% on generated spheres (and the other classes).
    for (int c = 0; c < kNumCategories; ++c) {
        const auto cat = static_cast<Category>(c);
        int ok = 0;
        const int n = 1000;
        for (int s = 0; s < n; ++s)
            if (rule_classifier(gen_shape(static_cast<std::uint64_t>(s), cat).grid) == cat) ++ok;
        CHECK(static_cast<double>(ok) / n >= 0.98);
    }

    // Thin-walled shell: some deterministic label, never a crash.
    VoxelGrid shell;
    for (int z = 4; z < 12; ++z)
        for (int y = 4; y < 12; ++y)
            for (int x = 4; x < 12; ++x)
                if (x == 4 || x == 11 || y == 4 || y == 11 || z == 4 || z == 11)
                    shell.at(x, y, z) = 1;
    const Category c1 = rule_classifier(shell);
    CHECK(rule_classifier(shell) == c1);

    CHECK_THROWS_AS(rule_classifier(VoxelGrid{}), NumericError);
}

TEST_CASE("shape iou") {
    VoxelShape a = gen_shape(5, Category::kBox);
    CHECK(shape_iou(a.grid, a.grid) == 1.0);

    VoxelGrid left, right;
    left.at(0, 0, 0) = 1;
    right.at(15, 15, 15) = 1;
    CHECK(shape_iou(left, right) == 0.0);

    // Half-overlapping bars against a counting oracle.
    VoxelGrid bar1, bar2;
    for (int x = 0; x < 4; ++x) bar1.at(x, 0, 0) = 1;
    for (int x = 2; x < 6; ++x) bar2.at(x, 0, 0) = 1;
    CHECK(shape_iou(bar1, bar2) == doctest::Approx(2.0 / 6.0));

    CHECK(shape_iou(VoxelGrid{}, VoxelGrid{}) == 1.0);
    CHECK_THROWS_AS(shape_iou(VoxelGrid{}, VoxelGrid(8)), NumericError);
}

TEST_CASE("vocab file round trip and frozen id oracle") {
    Vocab v = Vocab::standard();
    const std::string path = temp_path("vocab.txt");
    v.save(path);
    Vocab loaded = Vocab::load(path);
    CHECK(loaded == v);

    // Independent read of the frozen file: line number (0-based) = id.
    std::ifstream f(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    auto line_of = [&](const std::string& w) {
        for (std::size_t i = 0; i < lines.size(); ++i)
            if (lines[i] == w) return static_cast<int>(i);
        return -1;
    };
    const auto ids = v.tokenize("a sphere");
    REQUIRE(ids.size() == 2);
    CHECK(ids[0] == line_of("a"));
    CHECK(ids[1] == line_of("sphere"));
    CHECK(lines[0] == "<vocab-v1>");

    // Round trip through tokenize/detokenize on template captions.
    for (int s = 0; s < 10; ++s)
        for (int c = 0; c < kNumCategories; ++c)
            for (int level : {1, 4, 10}) {
                const std::string text =
                    caption_for(gen_shape(static_cast<std::uint64_t>(s), static_cast<Category>(c)),
                                level);
                CHECK(v.detokenize(v.tokenize(text)) == text);
            }

    CHECK_THROWS_WITH_AS(v.tokenize("a zeppelin"), doctest::Contains("zeppelin"), UsageError);
    std::remove(path.c_str());
}

TEST_CASE("bleu1 anchors") {
    CHECK(bleu1("a small sphere", {"a small sphere"}) == 1.0);
    CHECK(bleu1("cube cone", {"a sphere"}) == 0.0);
    CHECK(bleu1("a a sphere", {"a sphere"}) == doctest::Approx(2.0 / 3.0));
    CHECK(bleu1("", {"a sphere"}) == 0.0);
    // Brevity penalty: one word against a two-word reference.
    CHECK(bleu1("sphere", {"a sphere"}) == doctest::Approx(std::exp(1.0 - 2.0)));
}

TEST_CASE("obj export") {
    VoxelGrid one;
    one.at(3, 3, 3) = 1;
    ObjMesh m = grid_surface(one);
    CHECK(m.vertices.size() == 8);
    CHECK(m.faces.size() == 6);

    VoxelGrid bar;
    bar.at(3, 3, 3) = 1;
    bar.at(4, 3, 3) = 1;
    ObjMesh mb = grid_surface(bar);
    CHECK(mb.faces.size() == 10);  // 12 minus the two culled interior faces
    CHECK(mb.vertices.size() == 12);

    const std::string path = temp_path("mesh.obj");
    export_obj(gen_shape(3, Category::kTable).grid, path);
    // Minimal OBJ reader: v/f records only, 1-based indices in range.
    std::ifstream f(path);
    REQUIRE(f.good());
    int nv = 0, nf = 0;
    std::string tag;
    while (f >> tag) {
        if (tag == "v") {
            double x, y, z;
            REQUIRE((f >> x >> y >> z));
            ++nv;
        } else if (tag == "f") {
            int a, b, c, d;
            REQUIRE((f >> a >> b >> c >> d));
            for (int idx : {a, b, c, d}) {
                CHECK(idx >= 1);
                CHECK(idx <= nv);
            }
            ++nf;
        } else {
            REQUIRE(false);
        }
    }
    CHECK(nv > 0);
    CHECK(nf > 0);
    CHECK_THROWS_AS(grid_surface(VoxelGrid{}), NumericError);
    std::remove(path.c_str());
}
