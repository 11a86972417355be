#pragma once

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "dcnmt/corpus.hpp"
#include "dcnmt/gru.hpp"
#include "dcnmt/params.hpp"
#include "dcnmt/tensor.hpp"

namespace dcnmt {

enum class Direction { kForward, kReverse };

struct TeacherConfig {
    std::size_t vocab = 0;
    std::size_t embed_dim = 100;
    std::size_t hidden_dim = 100;
    double dropout_keep = 0.3;  // between embedding and recurrent layer
};

// Absolute-order reward teacher: sum-of-embeddings sentence vectors fed
// through a GRU over sentences; the final state represents the document.
// Trained offline to minimize cos(forward doc, reverse doc), then frozen.
class RewardTeacher {
public:
    RewardTeacher(const TeacherConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        Rng rng(seed);
        embed_ = store_.create("teacher.embed", {cfg_.vocab, cfg_.embed_dim}, rng, 0.1);
        gru_ = GruCellParams::create(store_, "teacher.gru", cfg_.embed_dim, cfg_.hidden_dim,
                                     rng, 1.0 / std::sqrt(double(cfg_.hidden_dim)));
    }

    const TeacherConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }

    // Elementwise sum of the word embeddings of a sentence (order-free).
    Tensor sentence_embed(const TokenIds& sentence) const {
        if (sentence.empty())
            throw std::invalid_argument("sentence_embed: empty sentence");
        Tensor rows = embedding_lookup(embed_, sentence);
        Tensor ones({1, sentence.size()}, 1.0);
        return matmul(ones, rows);  // [1 x embed_dim]
    }

    // Runs the GRU over sentence embeddings from a zero initial state and
    // returns the final state. Reverse direction reverses sentence order
    // only; within-sentence order is already irrelevant to the sum.
    Tensor document_embed(const std::vector<TokenIds>& sentences, Direction dir,
                          bool train = false, Rng* drop_rng = nullptr) const {
        if (sentences.empty())
            throw std::invalid_argument("document_embed: empty document");
        Tensor h({1, cfg_.hidden_dim}, 0.0);
        auto feed = [&](const TokenIds& s) {
            Tensor x = sentence_embed(s);
            if (train && drop_rng && cfg_.dropout_keep < 1.0)
                x = dropout(x, cfg_.dropout_keep, *drop_rng, true);
            h = gru_step(gru_, h, x);
        };
        if (dir == Direction::kForward) {
            for (const auto& s : sentences) feed(s);
        } else {
            for (auto it = sentences.rbegin(); it != sentences.rend(); ++it) feed(*it);
        }
        return h;
    }

    // L_abs = cos(f(forward), f(reverse)); in [-1, 1], exactly 1 for a
    // single-sentence document.
    Tensor teacher_loss(const std::vector<TokenIds>& document, bool train = false,
                        Rng* drop_rng = nullptr) const {
        Tensor fwd = document_embed(document, Direction::kForward, train, drop_rng);
        Tensor rev = document_embed(document, Direction::kReverse, train, drop_rng);
        return cosine_similarity(fwd, rev);
    }

    // r = cos(f(gen), f(forward gold)) - cos(f(gen), f(reverse gold)), in
    // [-2, 2]. Empty generated sentences are scored as a single <unk>.
    double order_reward(const std::vector<TokenIds>& generated,
                        const std::vector<TokenIds>& gold) const {
        if (generated.empty() || gold.empty())
            throw std::invalid_argument("order_reward: empty document");
        NoGradGuard ng;
        auto gen = sanitize(generated);
        Tensor fgen = document_embed(gen, Direction::kForward);
        Tensor fgold = document_embed(gold, Direction::kForward);
        Tensor rgold = document_embed(gold, Direction::kReverse);
        double a = cosine_similarity(fgen, fgold).item();
        double b = cosine_similarity(fgen, rgold).item();
        return a - b;
    }

    void save(const std::string& path, std::uint64_t vocab_hash) const {
        std::map<std::string, std::string> meta;
        meta["kind"] = "reward-teacher";
        meta["vocab"] = std::to_string(cfg_.vocab);
        meta["vocab_hash"] = std::to_string(vocab_hash);
        meta["embed_dim"] = std::to_string(cfg_.embed_dim);
        meta["hidden_dim"] = std::to_string(cfg_.hidden_dim);
        save_checkpoint(path, store_, meta);
    }

    static RewardTeacher load(const std::string& path, std::uint64_t expect_vocab_hash = 0) {
        ParamStore probe;
        auto meta = load_checkpoint(path, probe);
        TeacherConfig cfg;
        cfg.vocab = std::stoul(meta.at("vocab"));
        cfg.embed_dim = std::stoul(meta.at("embed_dim"));
        cfg.hidden_dim = std::stoul(meta.at("hidden_dim"));
        if (expect_vocab_hash != 0 && meta.count("vocab_hash") &&
            std::stoull(meta.at("vocab_hash")) != expect_vocab_hash)
            throw std::runtime_error("teacher checkpoint was trained on a different vocabulary");
        RewardTeacher t(cfg, 0);
        for (auto& [name, p] : t.store_.all()) p.val() = probe.at(name).val();
        t.freeze();
        return t;
    }

private:
    static std::vector<TokenIds> sanitize(const std::vector<TokenIds>& doc) {
        std::vector<TokenIds> out = doc;
        for (auto& s : out)
            if (s.empty()) s = {kUnk};
        return out;
    }

    TeacherConfig cfg_;
    ParamStore store_;
    Tensor embed_;
    GruCellParams gru_;
    bool frozen_ = false;
};

// Offline teacher training on target-side documents: per-document Adam steps
// on L_abs, dropout active between embedding and GRU. Returns the teacher
// frozen.
inline RewardTeacher train_teacher(const std::vector<std::vector<TokenIds>>& documents,
                                   const TeacherConfig& cfg, std::size_t epochs, double lr,
                                   std::uint64_t seed) {
    RewardTeacher teacher(cfg, seed);
    bool any_multi = false;
    for (const auto& d : documents)
        if (d.size() >= 2) any_multi = true;
    if (!any_multi) {
        std::cerr << "train_teacher: corpus has only single-sentence documents; "
                     "loss is constant 1, training is a no-op\n";
        teacher.freeze();
        return teacher;
    }
    Adam opt(lr);
    Rng rng(seed + 1);
    std::vector<std::size_t> order(documents.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t e = 0; e < epochs; ++e) {
        rng.shuffle(order.begin(), order.end());
        for (auto i : order) {
            const auto& doc = documents[i];
            if (doc.size() < 2) continue;
            teacher.params().zero_grad();
            Tensor loss = teacher.teacher_loss(doc, /*train=*/true, &rng);
            loss.backward();
            opt.step(teacher.params());
        }
    }
    teacher.freeze();
    return teacher;
}

}  // namespace dcnmt
