#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dcnmt/corpus.hpp"
#include "dcnmt/params.hpp"
#include "dcnmt/tensor.hpp"

namespace dcnmt {

struct ModelConfig {
    std::size_t src_vocab = 0;
    std::size_t tgt_vocab = 0;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ff = 128;
    std::size_t n_enc_layers = 2;
    std::size_t n_dec_layers = 2;
    std::size_t max_len = 64;
    double dropout_keep = 1.0;

    std::size_t d_head() const { return d_model / n_heads; }
};

// ---------------------------------------------------------------------------
// Parameter bundles
// ---------------------------------------------------------------------------

struct AttnParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;

    static AttnParams create(ParamStore& s, const std::string& p, std::size_t d, Rng& rng) {
        double sc = 1.0 / std::sqrt(double(d));
        AttnParams a;
        a.wq = s.create(p + ".wq", {d, d}, rng, sc);
        a.bq = s.create_zeros(p + ".bq", {d});
        a.wk = s.create(p + ".wk", {d, d}, rng, sc);
        a.bk = s.create_zeros(p + ".bk", {d});
        a.wv = s.create(p + ".wv", {d, d}, rng, sc);
        a.bv = s.create_zeros(p + ".bv", {d});
        a.wo = s.create(p + ".wo", {d, d}, rng, sc);
        a.bo = s.create_zeros(p + ".bo", {d});
        return a;
    }
};

struct FfParams {
    Tensor w1, b1, w2, b2;

    static FfParams create(ParamStore& s, const std::string& p, std::size_t d,
                           std::size_t d_ff, Rng& rng) {
        FfParams f;
        f.w1 = s.create(p + ".w1", {d, d_ff}, rng, 1.0 / std::sqrt(double(d)));
        f.b1 = s.create_zeros(p + ".b1", {d_ff});
        f.w2 = s.create(p + ".w2", {d_ff, d}, rng, 1.0 / std::sqrt(double(d_ff)));
        f.b2 = s.create_zeros(p + ".b2", {d});
        return f;
    }
};

struct LnParams {
    Tensor g, b;

    static LnParams create(ParamStore& s, const std::string& p, std::size_t d) {
        LnParams l;
        l.g = s.create_const(p + ".g", {d}, 1.0);
        l.b = s.create_zeros(p + ".b", {d});
        return l;
    }
};

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

// Additive masks: 0 where attention is allowed, large negative otherwise.
inline std::vector<double> causal_mask(std::size_t t) {
    std::vector<double> m(t * t, 0.0);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = i + 1; j < t; ++j) m[i * t + j] = -1e9;
    return m;
}

// Scaled dot-product multi-head attention, scale 1/sqrt(d_head).
inline Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in,
                                   const AttnParams& p, std::size_t n_heads,
                                   const std::vector<double>& mask = {}) {
    std::size_t d = q_in.cols();
    if (d % n_heads != 0) throw DimensionError("attention: d_model % n_heads != 0");
    std::size_t dh = d / n_heads;
    Tensor q = add_rowwise(matmul(q_in, p.wq), p.bq);
    Tensor k = add_rowwise(matmul(kv_in, p.wk), p.bk);
    Tensor v = add_rowwise(matmul(kv_in, p.wv), p.bv);
    if (!mask.empty() && mask.size() != q.rows() * k.rows())
        throw DimensionError("attention: mask size mismatch");
    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(double(dh)));
        if (!mask.empty()) scores = add_const(scores, mask);
        heads.push_back(matmul(softmax(scores), vh));
    }
    return add_rowwise(matmul(concat_cols(heads), p.wo), p.bo);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

// Per-token context representations for every sentence in a talk.
struct EncoderOutput {
    std::vector<Tensor> sentences;  // each [T_i x d]
};

// First-pass translations of a whole talk, embedded for the second pass's
// draft-attention block. Sentence boundaries are retained for evaluation.
struct FirstPassDraft {
    std::vector<TokenIds> sentences;
    Tensor embedded;                       // [total_tokens x d]
    std::vector<std::size_t> boundaries;   // running offsets, size = n_sentences + 1
};

struct EncoderLayer {
    AttnParams self;
    FfParams ff;
    LnParams ln1, ln2;
};

struct DecoderLayer {
    AttnParams self;
    AttnParams draft;  // second pass only
    AttnParams cross;
    FfParams ff;
    LnParams ln1, ln_draft, ln2, ln3;
    bool has_draft = false;
};

// Shared encoder + two decoder stacks. The second-pass decoder carries one
// extra attention block per layer, applied between target self-attention and
// encoder attention, that reads the embedded first-pass draft of the whole
// talk with no causal restriction.
class NmtModel {
public:
    NmtModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        Rng rng(seed);
        std::size_t d = cfg_.d_model;
        src_embed_ = store_.create("embed.src", {cfg_.src_vocab, d}, rng, 0.1);
        tgt_embed_ = store_.create("embed.tgt", {cfg_.tgt_vocab, d}, rng, 0.1);
        for (std::size_t i = 0; i < cfg_.n_enc_layers; ++i) {
            std::string p = "enc.L" + std::to_string(i);
            EncoderLayer l;
            l.self = AttnParams::create(store_, p + ".self", d, rng);
            l.ff = FfParams::create(store_, p + ".ff", d, cfg_.d_ff, rng);
            l.ln1 = LnParams::create(store_, p + ".ln1", d);
            l.ln2 = LnParams::create(store_, p + ".ln2", d);
            enc_.push_back(std::move(l));
        }
        dec1_ = make_decoder("dec1", false, rng);
        dec2_ = make_decoder("dec2", true, rng);
        // small output-head init keeps the untrained model near-uniform
        out1_w_ = store_.create("dec1.out.w", {d, cfg_.tgt_vocab}, rng,
                                0.1 / std::sqrt(double(d)));
        out1_b_ = store_.create_zeros("dec1.out.b", {cfg_.tgt_vocab});
        out2_w_ = store_.create("dec2.out.w", {d, cfg_.tgt_vocab}, rng,
                                0.1 / std::sqrt(double(d)));
        out2_b_ = store_.create_zeros("dec2.out.b", {cfg_.tgt_vocab});
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    // --- encoding -----------------------------------------------------------

    EncoderOutput encode(const std::vector<TokenIds>& src_sentences, bool train = false,
                         Rng* drop_rng = nullptr) {
        EncoderOutput out;
        for (const auto& sent : src_sentences) {
            TokenIds toks = strip_pad(sent);
            if (toks.size() > cfg_.max_len)
                throw std::runtime_error("encode: sentence exceeds max length");
            if (toks.empty()) toks.push_back(kUnk);
            Tensor x = embed_with_pos(src_embed_, toks, 0);
            x = maybe_dropout(x, train, drop_rng);
            for (auto& l : enc_) {
                Tensor a = multi_head_attention(x, x, l.self, cfg_.n_heads);
                x = layer_norm(add(x, maybe_dropout(a, train, drop_rng)), l.ln1.g, l.ln1.b);
                Tensor f = ff_forward(x, l.ff);
                x = layer_norm(add(x, maybe_dropout(f, train, drop_rng)), l.ln2.g, l.ln2.b);
            }
            out.sentences.push_back(x);
        }
        return out;
    }

    // Embeds a talk's draft translations as one token stream; draft positions
    // are per token within the talk, so the second pass sees the whole
    // document without any causal restriction.
    FirstPassDraft make_draft(const std::vector<TokenIds>& draft_sentences,
                              bool train = false, Rng* drop_rng = nullptr) {
        FirstPassDraft d;
        d.sentences = draft_sentences;
        d.boundaries.push_back(0);
        TokenIds flat;
        for (const auto& s : draft_sentences) {
            TokenIds toks = strip_pad(s);
            if (toks.empty()) toks.push_back(kUnk);  // empty draft sentence
            flat.insert(flat.end(), toks.begin(), toks.end());
            d.boundaries.push_back(flat.size());
        }
        d.embedded = maybe_dropout(embed_with_pos(tgt_embed_, flat, 0), train, drop_rng);
        return d;
    }

    // --- decoder stacks -------------------------------------------------------

    // Full-sequence logits for the first pass: prefix must begin with BOS.
    Tensor first_pass_logits(const Tensor& enc_sentence, const TokenIds& prefix,
                             bool train = false, Rng* drop_rng = nullptr) {
        Tensor h = decoder_hidden(dec1_, enc_sentence, nullptr, prefix, train, drop_rng);
        return add_rowwise(matmul(h, out1_w_), out1_b_);
    }

    Tensor second_pass_logits(const Tensor& enc_sentence, const FirstPassDraft& draft,
                              const TokenIds& prefix, bool train = false,
                              Rng* drop_rng = nullptr) {
        if (!draft.embedded.defined())
            throw std::runtime_error("second_pass_logits: missing draft");
        Tensor h = decoder_hidden(dec2_, enc_sentence, &draft, prefix, train, drop_rng);
        return add_rowwise(matmul(h, out2_w_), out2_b_);
    }

    std::size_t max_len() const { return cfg_.max_len; }

    // --- checkpointing --------------------------------------------------------

    void save(const std::string& path) const {
        std::map<std::string, std::string> meta;
        meta["kind"] = "nmt-model";
        meta["src_vocab"] = std::to_string(cfg_.src_vocab);
        meta["tgt_vocab"] = std::to_string(cfg_.tgt_vocab);
        meta["d_model"] = std::to_string(cfg_.d_model);
        meta["n_heads"] = std::to_string(cfg_.n_heads);
        meta["d_ff"] = std::to_string(cfg_.d_ff);
        meta["n_enc_layers"] = std::to_string(cfg_.n_enc_layers);
        meta["n_dec_layers"] = std::to_string(cfg_.n_dec_layers);
        meta["max_len"] = std::to_string(cfg_.max_len);
        save_checkpoint(path, store_, meta);
    }

    static NmtModel load(const std::string& path) {
        ParamStore probe;
        auto meta = load_checkpoint(path, probe);
        ModelConfig cfg;
        cfg.src_vocab = std::stoul(meta.at("src_vocab"));
        cfg.tgt_vocab = std::stoul(meta.at("tgt_vocab"));
        cfg.d_model = std::stoul(meta.at("d_model"));
        cfg.n_heads = std::stoul(meta.at("n_heads"));
        cfg.d_ff = std::stoul(meta.at("d_ff"));
        cfg.n_enc_layers = std::stoul(meta.at("n_enc_layers"));
        cfg.n_dec_layers = std::stoul(meta.at("n_dec_layers"));
        cfg.max_len = std::stoul(meta.at("max_len"));
        NmtModel model(cfg, 0);
        for (auto& [name, t] : model.store_.all()) t.val() = probe.at(name).val();
        return model;
    }

private:
    std::vector<DecoderLayer> make_decoder(const std::string& name, bool with_draft,
                                           Rng& rng) {
        std::vector<DecoderLayer> layers;
        std::size_t d = cfg_.d_model;
        for (std::size_t i = 0; i < cfg_.n_dec_layers; ++i) {
            std::string p = name + ".L" + std::to_string(i);
            DecoderLayer l;
            l.has_draft = with_draft;
            l.self = AttnParams::create(store_, p + ".self", d, rng);
            if (with_draft) {
                l.draft = AttnParams::create(store_, p + ".draft", d, rng);
                l.ln_draft = LnParams::create(store_, p + ".lnd", d);
            }
            l.cross = AttnParams::create(store_, p + ".cross", d, rng);
            l.ff = FfParams::create(store_, p + ".ff", d, cfg_.d_ff, rng);
            l.ln1 = LnParams::create(store_, p + ".ln1", d);
            l.ln2 = LnParams::create(store_, p + ".ln2", d);
            l.ln3 = LnParams::create(store_, p + ".ln3", d);
            layers.push_back(std::move(l));
        }
        return layers;
    }

    Tensor decoder_hidden(std::vector<DecoderLayer>& layers, const Tensor& enc_sentence,
                          const FirstPassDraft* draft, const TokenIds& prefix, bool train,
                          Rng* drop_rng) {
        if (prefix.empty() || prefix[0] != kBos)
            throw std::runtime_error("decoder: prefix must begin with BOS");
        if (prefix.size() > cfg_.max_len + 1)
            throw std::runtime_error("decoder: prefix exceeds max length");
        Tensor x = embed_with_pos(tgt_embed_, prefix, 0);
        x = maybe_dropout(x, train, drop_rng);
        auto cmask = causal_mask(prefix.size());
        for (auto& l : layers) {
            Tensor a = multi_head_attention(x, x, l.self, cfg_.n_heads, cmask);
            x = layer_norm(add(x, maybe_dropout(a, train, drop_rng)), l.ln1.g, l.ln1.b);
            if (l.has_draft) {
                Tensor da = multi_head_attention(x, draft->embedded, l.draft, cfg_.n_heads);
                x = layer_norm(add(x, maybe_dropout(da, train, drop_rng)), l.ln_draft.g,
                               l.ln_draft.b);
            }
            Tensor c = multi_head_attention(x, enc_sentence, l.cross, cfg_.n_heads);
            x = layer_norm(add(x, maybe_dropout(c, train, drop_rng)), l.ln2.g, l.ln2.b);
            Tensor f = ff_forward(x, l.ff);
            x = layer_norm(add(x, maybe_dropout(f, train, drop_rng)), l.ln3.g, l.ln3.b);
        }
        return x;
    }

    Tensor ff_forward(const Tensor& x, const FfParams& f) {
        return add_rowwise(matmul(relu(add_rowwise(matmul(x, f.w1), f.b1)), f.w2), f.b2);
    }

    Tensor embed_with_pos(const Tensor& table, const TokenIds& toks, std::size_t offset) {
        Tensor e = scale(embedding_lookup(table, toks), std::sqrt(double(cfg_.d_model)));
        return add_const(e, positional(toks.size(), offset));
    }

    std::vector<double> positional(std::size_t t, std::size_t offset) const {
        std::size_t d = cfg_.d_model;
        std::vector<double> pe(t * d);
        for (std::size_t pos = 0; pos < t; ++pos)
            for (std::size_t i = 0; i < d; i += 2) {
                double angle = double(pos + offset) /
                               std::pow(10000.0, double(i) / double(d));
                pe[pos * d + i] = std::sin(angle);
                if (i + 1 < d) pe[pos * d + i + 1] = std::cos(angle);
            }
        return pe;
    }

    Tensor maybe_dropout(const Tensor& x, bool train, Rng* rng) {
        if (!train || cfg_.dropout_keep >= 1.0 || rng == nullptr) return x;
        return dropout(x, cfg_.dropout_keep, *rng, true);
    }

    static TokenIds strip_pad(const TokenIds& toks) {
        TokenIds out;
        for (int t : toks)
            if (t != kPad) out.push_back(t);
        return out;
    }

    ModelConfig cfg_;
    ParamStore store_;
    Tensor src_embed_, tgt_embed_;
    std::vector<EncoderLayer> enc_;
    std::vector<DecoderLayer> dec1_, dec2_;
    Tensor out1_w_, out1_b_, out2_w_, out2_b_;
};

}  // namespace dcnmt
