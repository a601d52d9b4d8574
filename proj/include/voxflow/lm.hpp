#pragma once

#include <string>
#include <vector>

#include "voxflow/nn.hpp"
#include "voxflow/text.hpp"

namespace voxflow {

struct LmConfig {
    int d_model = 64;
    int n_blocks = 4;
    int n_heads = 4;
    int max_len = 160;
    int ff_mult = 4;
};

// Decoder-only causal transformer over the closed vocabulary. Input and
// output embeddings are tied; callers hand in embedding sequences, which is
// how projected shape latents and learnable query rows enter the stream.
struct LmModel {
    LmConfig cfg;
    int vocab_size = 0;
    NdArray tok_emb;  // [V, d]
    NdArray pos_emb;  // [max_len, d]
    std::vector<TransformerBlockParams> blocks;
    LayerNormParams final_ln;
    bool trainable = true;

    void init(Rng& rng, int vocab) {
        vocab_size = vocab;
        tok_emb = rng.gaussian({vocab, cfg.d_model});
        for (std::int64_t i = 0; i < tok_emb.numel(); ++i) tok_emb[i] *= 0.1;
        pos_emb = rng.gaussian({cfg.max_len, cfg.d_model});
        for (std::int64_t i = 0; i < pos_emb.numel(); ++i) pos_emb[i] *= 0.1;
        blocks.resize(static_cast<std::size_t>(cfg.n_blocks));
        for (auto& b : blocks) b.init(rng, cfg.d_model, cfg.ff_mult * cfg.d_model);
        final_ln.init(cfg.d_model);
    }

    void collect(ParamList& out) {
        out.push_back({"lm.tok_emb", &tok_emb});
        out.push_back({"lm.pos_emb", &pos_emb});
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].collect("lm.block" + std::to_string(i), out);
        final_ln.collect("lm.final_ln", out);
    }

    Var embed_tokens(Tape& t, const std::vector<int>& ids) {
        return t.gather_rows(t.param(&tok_emb, trainable), ids);
    }

    // Adds learned-absolute positions, runs the causal stack, applies the
    // final norm. Returns the hidden states the conditioning paths consume.
    Var forward_hidden(Tape& t, Var emb_seq) {
        const int len = t.val(emb_seq).rows();
        if (len > cfg.max_len)
            throw NumericError("lm_forward: sequence length " + std::to_string(len) +
                               " exceeds max length " + std::to_string(cfg.max_len));
        Var x = t.add(emb_seq,
                      positional_embedding(t, PosScheme::kLearnedAbsolute, &pos_emb, len,
                                           cfg.d_model, trainable));
        AttentionConfig attn{cfg.d_model, cfg.n_heads, true, false};
        for (auto& b : blocks) x = transformer_block(t, x, b, attn, trainable);
        return layer_norm(t, x, final_ln, trainable);
    }

    // Tied readout: hidden x tok_emb^T.
    Var logits_from_hidden(Tape& t, Var hidden) {
        return t.matmul(hidden, t.transpose(t.param(&tok_emb, trainable)));
    }

    std::pair<Var, Var> lm_forward(Tape& t, Var emb_seq) {
        Var h = forward_hidden(t, emb_seq);
        return {h, logits_from_hidden(t, h)};
    }
};

// Greedy continuation after a prefix of embeddings. Ties break toward the
// lowest token id; stops at EOS or after max_new tokens. With temperature > 0
// tokens are sampled from the tempered softmax instead.
inline std::vector<int> decode_greedy(LmModel& lm, const Vocab& vocab, NdArray prefix_embeds,
                                      int max_new, double temperature = 0.0,
                                      Rng* sampler = nullptr) {
    std::vector<int> out;
    const bool keep = lm.trainable;
    lm.trainable = false;
    std::vector<int> generated;
    while (static_cast<int>(generated.size()) < max_new) {
        Tape t;
        Var seq = t.constant(prefix_embeds);
        if (!generated.empty())
            seq = t.concat_rows({seq, lm.embed_tokens(t, generated)});
        Var hidden = lm.forward_hidden(t, seq);
        const int last = t.val(hidden).rows() - 1;
        Var logits = lm.logits_from_hidden(t, t.slice_rows(hidden, last, 1));
        const NdArray& row = t.val(logits);
        int pick = 0;
        if (temperature > 0.0 && sampler != nullptr) {
            Tape ts;
            NdArray scaled({1, lm.vocab_size});
            for (int j = 0; j < lm.vocab_size; ++j) scaled.at(0, j) = row.at(0, j) / temperature;
            const NdArray probs = ts.val(ts.softmax(ts.constant(scaled)));
            std::vector<double> pv(probs.data(), probs.data() + lm.vocab_size);
            pick = sampler->categorical(pv);
        } else {
            for (int j = 1; j < lm.vocab_size; ++j)
                if (row.at(0, j) > row.at(0, pick)) pick = j;
        }
        if (pick == vocab.eos_id()) break;
        generated.push_back(pick);
    }
    lm.trainable = keep;
    out = generated;
    return out;
}

}  // namespace voxflow
