#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "voxflow/nn.hpp"
#include "voxflow/shapes.hpp"

namespace voxflow {

struct VaeConfig {
    int k_latents = 16;
    int d_lat = 32;
    int d_model = 64;
    int n_heads = 4;
    int enc_cross_blocks = 2;
    int dec_cross_blocks = 2;
    int ff_mult = 4;
    int fourier_freqs = 4;
    int max_cells = 256;  // encoder input cap; cells beyond it are strided away

    int feat_dim() const { return 3 * (1 + 2 * fourier_freqs); }
};

// Coordinate featurization shared by encoder cells and decoder query points.
inline NdArray coord_features(const std::vector<std::array<double, 3>>& pts,
                              const VaeConfig& cfg) {
    const int fd = cfg.feat_dim();
    NdArray out({static_cast<int>(pts.size()), fd});
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double* row = out.data() + static_cast<std::int64_t>(i) * fd;
        int at = 0;
        for (int a = 0; a < 3; ++a) row[at++] = pts[i][static_cast<std::size_t>(a)];
        for (int f = 0; f < cfg.fourier_freqs; ++f) {
            const double freq = 2.0 * M_PI * static_cast<double>(1 << f);
            for (int a = 0; a < 3; ++a) {
                row[at++] = std::sin(freq * pts[i][static_cast<std::size_t>(a)]);
                row[at++] = std::cos(freq * pts[i][static_cast<std::size_t>(a)]);
            }
        }
    }
    return out;
}

// Occupied cell centers in canonical scan order (z, then y, then x), strided
// down to at most max_cells entries. A pure function of the grid, so encode
// stays deterministic however the caller enumerated cells.
inline std::vector<std::array<double, 3>> occupied_cell_centers(const VoxelGrid& g,
                                                                int max_cells) {
    std::vector<std::array<double, 3>> cells;
    for (int z = 0; z < g.r; ++z)
        for (int y = 0; y < g.r; ++y)
            for (int x = 0; x < g.r; ++x)
                if (g.at(x, y, z))
                    cells.push_back({(x + 0.5) / g.r, (y + 0.5) / g.r, (z + 0.5) / g.r});
    if (max_cells > 0 && static_cast<int>(cells.size()) > max_cells) {
        std::vector<std::array<double, 3>> kept;
        kept.reserve(static_cast<std::size_t>(max_cells));
        const std::size_t n = cells.size();
        for (int i = 0; i < max_cells; ++i)
            kept.push_back(cells[static_cast<std::size_t>(i) * n / max_cells]);
        cells = std::move(kept);
    }
    return cells;
}

inline std::vector<std::array<double, 3>> all_cell_centers(int r) {
    std::vector<std::array<double, 3>> pts;
    pts.reserve(static_cast<std::size_t>(r) * r * r);
    for (int z = 0; z < r; ++z)
        for (int y = 0; y < r; ++y)
            for (int x = 0; x < r; ++x)
                pts.push_back({(x + 0.5) / r, (y + 0.5) / r, (z + 0.5) / r});
    return pts;
}

// Balanced query-point sample for reconstruction training: half occupied,
// a quarter empty near the surface, a quarter empty anywhere. Surface points
// carry most of the IoU signal.
inline void sample_training_points(const VoxelGrid& g, int n, Rng& rng,
                                   std::vector<std::array<double, 3>>& points, NdArray& targets) {
    std::vector<int> occ, emp, near;
    occ.reserve(2048);
    emp.reserve(4096);
    for (int z = 0; z < g.r; ++z)
        for (int y = 0; y < g.r; ++y)
            for (int x = 0; x < g.r; ++x) {
                const int idx = (z * g.r + y) * g.r + x;
                if (g.at(x, y, z)) {
                    occ.push_back(idx);
                    continue;
                }
                emp.push_back(idx);
                const bool adj = (x > 0 && g.at(x - 1, y, z)) || (x + 1 < g.r && g.at(x + 1, y, z)) ||
                                 (y > 0 && g.at(x, y - 1, z)) || (y + 1 < g.r && g.at(x, y + 1, z)) ||
                                 (z > 0 && g.at(x, y, z - 1)) || (z + 1 < g.r && g.at(x, y, z + 1));
                if (adj) near.push_back(idx);
            }
    if (occ.empty()) throw NumericError("sample_training_points: empty grid");
    if (near.empty()) near = emp;
    points.clear();
    points.reserve(static_cast<std::size_t>(n));
    targets = NdArray({n, 1});
    for (int i = 0; i < n; ++i) {
        const std::vector<int>* pool;
        if (i < n / 2)
            pool = &occ;
        else if (i < 3 * n / 4)
            pool = &near;
        else
            pool = &emp;
        const int idx = (*pool)[rng.below(pool->size())];
        const int x = idx % g.r, y = (idx / g.r) % g.r, z = idx / (g.r * g.r);
        points.push_back({(x + 0.5) / g.r, (y + 0.5) / g.r, (z + 0.5) / g.r});
        targets.at(i, 0) = g.at(x, y, z) ? 1.0 : 0.0;
    }
}

// Set autoencoder over occupancy grids: K learned slots cross-attend to cell
// embeddings and self-attend, then project to K x d_lat latents; the decoder
// cross-attends query points to the latent set and emits one logit per point.
// Latents carry no positional meaning: decoding consumes any token count K.
struct VaeModel {
    VaeConfig cfg;
    LinearParams cell_proj;
    NdArray slot_tokens;
    std::vector<TransformerBlockParams> enc_cross;
    TransformerBlockParams enc_self;
    LayerNormParams enc_out_ln;
    LinearParams to_latent;
    LinearParams lat_in;
    LinearParams point_proj;
    std::vector<TransformerBlockParams> dec_cross;
    LayerNormParams dec_out_ln;
    LinearParams occ_head;
    // Per-channel statistics over the training corpus, fixed after
    // pretraining; the generator operates in this normalized space.
    NdArray latent_mean;
    NdArray latent_std;
    bool trainable = true;

    void init(Rng& rng) {
        cell_proj.init(rng, cfg.feat_dim(), cfg.d_model);
        slot_tokens = rng.gaussian({cfg.k_latents, cfg.d_model});
        for (std::int64_t i = 0; i < slot_tokens.numel(); ++i) slot_tokens[i] *= 0.5;
        enc_cross.resize(static_cast<std::size_t>(cfg.enc_cross_blocks));
        for (auto& b : enc_cross) b.init(rng, cfg.d_model, cfg.ff_mult * cfg.d_model);
        enc_self.init(rng, cfg.d_model, cfg.ff_mult * cfg.d_model);
        enc_out_ln.init(cfg.d_model);
        to_latent.init(rng, cfg.d_model, cfg.d_lat);
        lat_in.init(rng, cfg.d_lat, cfg.d_model);
        point_proj.init(rng, cfg.feat_dim(), cfg.d_model);
        dec_cross.resize(static_cast<std::size_t>(cfg.dec_cross_blocks));
        for (auto& b : dec_cross) b.init(rng, cfg.d_model, cfg.ff_mult * cfg.d_model);
        dec_out_ln.init(cfg.d_model);
        occ_head.init(rng, cfg.d_model, 1);
        latent_mean = NdArray({cfg.d_lat});
        latent_std = NdArray({cfg.d_lat}, 1.0);
    }

    void collect(ParamList& out) {
        cell_proj.collect("vae.cell_proj", out);
        out.push_back({"vae.slots", &slot_tokens});
        for (std::size_t i = 0; i < enc_cross.size(); ++i)
            enc_cross[i].collect("vae.enc_cross" + std::to_string(i), out);
        enc_self.collect("vae.enc_self", out);
        enc_out_ln.collect("vae.enc_out_ln", out);
        to_latent.collect("vae.to_latent", out);
        lat_in.collect("vae.lat_in", out);
        point_proj.collect("vae.point_proj", out);
        for (std::size_t i = 0; i < dec_cross.size(); ++i)
            dec_cross[i].collect("vae.dec_cross" + std::to_string(i), out);
        dec_out_ln.collect("vae.dec_out_ln", out);
        occ_head.collect("vae.occ_head", out);
        out.push_back({"vae.latent_mean", &latent_mean});
        out.push_back({"vae.latent_std", &latent_std});
    }

    Var encode_cells(Tape& t, std::vector<std::array<double, 3>> cells) {
        if (cells.empty()) throw NumericError("encode: empty grid");
        std::sort(cells.begin(), cells.end());
        Var feats = t.constant(coord_features(cells, cfg));
        Var cellemb = linear(t, feats, cell_proj, trainable);
        AttentionConfig attn{cfg.d_model, cfg.n_heads, false, true};
        Var slots = t.param(&slot_tokens, trainable);
        for (auto& b : enc_cross) slots = cross_block(t, slots, cellemb, b, attn, trainable);
        AttentionConfig self_attn{cfg.d_model, cfg.n_heads, false, false};
        slots = transformer_block(t, slots, enc_self, self_attn, trainable);
        return linear(t, layer_norm(t, slots, enc_out_ln, trainable), to_latent, trainable);
    }

    Var encode(Tape& t, const VoxelGrid& g) {
        return encode_cells(t, occupied_cell_centers(g, cfg.max_cells));
    }

    NdArray encode_value(const VoxelGrid& g) {
        Tape t;
        const bool keep = trainable;
        trainable = false;
        NdArray out = t.val(encode(t, g));
        trainable = keep;
        return out;
    }

    // One logit per query point via cross-attention into the latent set.
    Var decode_occupancy(Tape& t, Var latents, const std::vector<std::array<double, 3>>& points) {
        for (const auto& p : points)
            for (double c : p)
                if (c < 0.0 || c > 1.0)
                    throw NumericError("decode_occupancy: query point outside the unit cube");
        Var feats = t.constant(coord_features(points, cfg));
        Var x = linear(t, feats, point_proj, trainable);
        Var lv = linear(t, latents, lat_in, trainable);
        AttentionConfig attn{cfg.d_model, cfg.n_heads, false, true};
        for (auto& b : dec_cross) x = cross_block(t, x, lv, b, attn, trainable);
        return linear(t, layer_norm(t, x, dec_out_ln, trainable), occ_head, trainable);
    }

    // Full-grid decode with 0.5-probability threshold (logit sign).
    VoxelGrid decode_grid(const NdArray& latents, int r = kGridR) {
        Tape t;
        const bool keep = trainable;
        trainable = false;
        Var logits = decode_occupancy(t, t.constant(latents), all_cell_centers(r));
        trainable = keep;
        const NdArray& lv = t.val(logits);
        VoxelGrid g(r);
        for (std::size_t i = 0; i < g.cells.size(); ++i)
            g.cells[i] = lv[static_cast<std::int64_t>(i)] > 0.0 ? 1 : 0;
        return g;
    }

    NdArray normalize(const NdArray& latents) const {
        NdArray out = latents;
        const int dl = cfg.d_lat;
        for (int i = 0; i < out.rows(); ++i)
            for (int j = 0; j < dl; ++j)
                out.at(i, j) = (out.at(i, j) - latent_mean[j]) / latent_std[j];
        return out;
    }

    NdArray denormalize(const NdArray& latents) const {
        NdArray out = latents;
        const int dl = cfg.d_lat;
        for (int i = 0; i < out.rows(); ++i)
            for (int j = 0; j < dl; ++j) out.at(i, j) = out.at(i, j) * latent_std[j] + latent_mean[j];
        return out;
    }
};

}  // namespace voxflow
