#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcnmt/corpus.hpp"
#include "dcnmt/decode.hpp"
#include "dcnmt/eval.hpp"
#include "dcnmt/teacher.hpp"
#include "dcnmt/transformer.hpp"

namespace dcnmt {

enum class Mode {
    kFirstPass,
    kFirstPassRl,
    kTwoPass,
    kTwoPassRl,
    kTwoPassBleu,
    kTwoPassBleuRl,
};

inline Mode parse_mode(const std::string& s) {
    if (s == "first-pass") return Mode::kFirstPass;
    if (s == "first-pass-rl") return Mode::kFirstPassRl;
    if (s == "two-pass") return Mode::kTwoPass;
    if (s == "two-pass-rl") return Mode::kTwoPassRl;
    if (s == "two-pass-bleu") return Mode::kTwoPassBleu;
    if (s == "two-pass-bleu-rl") return Mode::kTwoPassBleuRl;
    throw std::invalid_argument("unknown mode: " + s);
}

inline std::string mode_name(Mode m) {
    switch (m) {
        case Mode::kFirstPass: return "first-pass";
        case Mode::kFirstPassRl: return "first-pass-rl";
        case Mode::kTwoPass: return "two-pass";
        case Mode::kTwoPassRl: return "two-pass-rl";
        case Mode::kTwoPassBleu: return "two-pass-bleu";
        case Mode::kTwoPassBleuRl: return "two-pass-bleu-rl";
    }
    return "?";
}

inline bool mode_uses_second_pass(Mode m) {
    return m != Mode::kFirstPass && m != Mode::kFirstPassRl;
}

inline bool mode_uses_rl(Mode m) {
    return m == Mode::kFirstPassRl || m == Mode::kTwoPassRl || m == Mode::kTwoPassBleu ||
           m == Mode::kTwoPassBleuRl;
}

inline bool mode_uses_teacher_reward(Mode m) {
    return m == Mode::kFirstPassRl || m == Mode::kTwoPassRl || m == Mode::kTwoPassBleuRl;
}

inline bool mode_uses_bleu_reward(Mode m) {
    return m == Mode::kTwoPassBleu || m == Mode::kTwoPassBleuRl;
}

struct TrainConfig {
    Mode mode = Mode::kTwoPass;
    double lambda1 = 0.85;  // paper's selected optimum
    double lambda2 = 0.80;
    double beta = 1.0;  // document-BLEU reward mixing weight
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::size_t epochs = 1;
    std::size_t max_steps = 0;   // 0 = no cap
    std::size_t warm_steps = 0;  // MLE-only steps before RL terms activate
    ShuffleStrategy shuffle = ShuffleStrategy::kTalkShuffle;
    std::size_t beam_size = 1;

    void validate() const {
        if (lambda1 < 0.0 || lambda1 > 1.0 || lambda2 < 0.0 || lambda2 > 1.0)
            throw std::invalid_argument("lambda values must be in [0, 1]");
        if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
    }
};

struct StepReport {
    double l_mle1 = 0.0, l_mle2 = 0.0;
    double l_rl1 = 0.0, l_rl2 = 0.0;
    double combined = 0.0;
    double r_sampled1 = 0.0, r_greedy1 = 0.0, advantage1 = 0.0;
    double r_sampled2 = 0.0, r_greedy2 = 0.0, advantage2 = 0.0;
    std::vector<double> per_token_reward1;  // one entry per sampled token, all equal
    std::vector<double> per_token_reward2;
    std::size_t talk_sentences = 0;
    std::size_t step = 0;
    std::size_t epoch = 0;
};

// R_total = R_teacher + beta * (BLEU_doc(sampled) - BLEU_doc(greedy))
inline double mixed_reward(double teacher_r, double bleu_doc_delta, double beta) {
    if (beta < 0.0) throw std::invalid_argument("mixed_reward: beta must be >= 0");
    return teacher_r + beta * bleu_doc_delta;
}

namespace detail {

inline std::vector<TokenIds> strip_pads(const std::vector<std::vector<int>>& rows) {
    std::vector<TokenIds> out;
    for (const auto& r : rows) {
        TokenIds s;
        for (int t : r)
            if (t != kPad) s.push_back(t);
        out.push_back(std::move(s));
    }
    return out;
}

// Smoothed single-talk document BLEU over raw token ids, used only as an RL
// reward signal.
inline double bleu_doc_ids(const std::vector<TokenIds>& gen,
                           const std::vector<TokenIds>& gold) {
    TalkText g, r;
    for (const auto& s : gen) {
        Sentence ss;
        for (int t : s) ss.push_back(std::to_string(t));
        g.push_back(std::move(ss));
    }
    for (const auto& s : gold) {
        Sentence ss;
        for (int t : s) ss.push_back(std::to_string(t));
        r.push_back(std::move(ss));
    }
    return bleu_doc({g}, {r}, 4, /*smooth=*/true);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Losses. All loss builders share the encode/draft produced by the caller so
// algebraic identities between them hold bit-for-bit.
// ---------------------------------------------------------------------------

// Teacher-forced negative log-likelihood of the gold targets for one talk,
// summed over sentences and timesteps. PAD positions never contribute.
inline Tensor mle_loss_pass(NmtModel& model, const EncoderOutput& enc,
                            const FirstPassDraft* draft,
                            const std::vector<std::vector<int>>& targets_padded, bool train,
                            Rng* rng) {
    auto targets = detail::strip_pads(targets_padded);
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        TokenIds prefix{kBos};
        prefix.insert(prefix.end(), targets[i].begin(), targets[i].end());
        TokenIds want = targets[i];
        want.push_back(kEos);
        Tensor logits = draft
                            ? model.second_pass_logits(enc.sentences[i], *draft, prefix, train, rng)
                            : model.first_pass_logits(enc.sentences[i], prefix, train, rng);
        total = add(total, cross_entropy(logits, want));
    }
    return total;
}

inline Tensor mle_loss_first(NmtModel& model, const Batch& batch, bool train = false,
                             Rng* rng = nullptr) {
    if (batch.target.empty()) throw std::runtime_error("mle_loss_first: batch has no targets");
    EncoderOutput enc = model.encode(batch.source_padded, train, rng);
    return mle_loss_pass(model, enc, nullptr, batch.target_padded, train, rng);
}

inline Tensor mle_loss_second(NmtModel& model, const Batch& batch, const FirstPassDraft& draft,
                              bool train = false, Rng* rng = nullptr) {
    if (batch.target.empty())
        throw std::runtime_error("mle_loss_second: batch has no targets");
    if (!draft.embedded.defined()) throw std::runtime_error("mle_loss_second: missing draft");
    EncoderOutput enc = model.encode(batch.source_padded, train, rng);
    return mle_loss_pass(model, enc, &draft, batch.target_padded, train, rng);
}

// L_mle = L_mle1 + L_mle2, draft generated by greedy first-pass decoding.
inline Tensor joint_mle_loss(NmtModel& model, const Batch& batch, bool train = false,
                             Rng* rng = nullptr) {
    if (batch.target.empty()) throw std::runtime_error("joint_mle_loss: batch has no targets");
    EncoderOutput enc = model.encode(batch.source_padded, train, rng);
    auto draft_sents = decode_talk_first(model, enc);
    FirstPassDraft draft = model.make_draft(draft_sents, train, rng);
    Tensor l1 = mle_loss_pass(model, enc, nullptr, batch.target_padded, train, rng);
    Tensor l2 = mle_loss_pass(model, enc, &draft, batch.target_padded, train, rng);
    return add(l1, l2);
}

// -R * sum log P(sampled tokens): gradients flow through the sampled
// sequence's log-probabilities only, never through R. The surrogate is
// normalized per sampled token (including EOS) so the policy term stays
// commensurate with the likelihood terms regardless of talk length.
inline Tensor rl_loss_given(NmtModel& model, const EncoderOutput& enc,
                            const FirstPassDraft* draft,
                            const std::vector<TokenIds>& sampled, double reward_advantage,
                            bool train = false, Rng* rng = nullptr) {
    std::vector<std::vector<int>> rows(sampled.begin(), sampled.end());
    std::size_t tokens = 0;
    for (const auto& s : sampled) tokens += s.size() + 1;
    Tensor nll = mle_loss_pass(model, enc, draft, rows, train, rng);
    return scale(nll, reward_advantage / double(std::max<std::size_t>(tokens, 1)));
}

enum class Pass { kFirst, kSecond };

// Self-critical policy loss for one pass: sample vs greedy decode, reward
// advantage from the frozen teacher (and/or a document-BLEU delta), then the
// REINFORCE surrogate with R broadcast to every token of the talk.
inline Tensor self_critical_loss(NmtModel& model, const Batch& batch,
                                 const RewardTeacher* teacher, Pass pass, Rng& rng,
                                 StepReport& report, const EncoderOutput& enc,
                                 const FirstPassDraft* draft, bool use_teacher_reward,
                                 bool use_bleu_reward, double beta, bool train = false,
                                 Rng* drop_rng = nullptr) {
    if (use_teacher_reward) {
        if (!teacher) throw std::runtime_error("self_critical_loss: teacher required");
        if (!teacher->frozen())
            throw std::runtime_error("self_critical_loss: teacher must be frozen");
    }
    auto gold = detail::strip_pads(batch.target_padded);

    DecodeOptions sample_opt;
    sample_opt.mode = DecodeMode::kSample;
    sample_opt.rng = &rng;
    std::vector<TokenIds> sampled, greedy;
    if (pass == Pass::kFirst) {
        sampled = decode_talk_first(model, enc, sample_opt);
        greedy = decode_talk_first(model, enc);
    } else {
        sampled = decode_talk_second(model, enc, *draft, sample_opt);
        greedy = decode_talk_second(model, enc, *draft);
    }

    double r_hat = 0.0, r_star = 0.0;
    if (use_teacher_reward) {
        r_hat = teacher->order_reward(sampled, gold);
        r_star = teacher->order_reward(greedy, gold);
    }
    double advantage = r_hat - r_star;
    if (use_bleu_reward) {
        double delta = detail::bleu_doc_ids(sampled, gold) - detail::bleu_doc_ids(greedy, gold);
        advantage = mixed_reward(advantage, delta, beta);
    }

    std::size_t sampled_tokens = 0;
    for (const auto& s : sampled) sampled_tokens += s.size() + 1;  // + EOS
    auto& rep_r = pass == Pass::kFirst ? report.per_token_reward1 : report.per_token_reward2;
    rep_r.assign(sampled_tokens, advantage);
    if (pass == Pass::kFirst) {
        report.r_sampled1 = r_hat;
        report.r_greedy1 = r_star;
        report.advantage1 = advantage;
    } else {
        report.r_sampled2 = r_hat;
        report.r_greedy2 = r_star;
        report.advantage2 = advantage;
    }
    return rl_loss_given(model, enc, pass == Pass::kSecond ? draft : nullptr, sampled,
                         advantage, train, drop_rng);
}

// ---------------------------------------------------------------------------
// Combined objective:
//   L = L_mle1 * l1 + L_rl1 * (1 - l1) + L_mle2 * l2 + L_rl2 * (1 - l2)
// Modes without RL fix the relevant lambda at 1; first-pass modes drop the
// second-pass terms. With l1 = l2 = 1 this reduces exactly to joint MLE.
// ---------------------------------------------------------------------------

inline std::pair<Tensor, StepReport> combined_loss(NmtModel& model, const Batch& batch,
                                                   const RewardTeacher* teacher,
                                                   const TrainConfig& cfg, Rng& rng,
                                                   bool train = false,
                                                   Rng* drop_rng = nullptr) {
    cfg.validate();
    if (batch.target.empty()) throw std::runtime_error("combined_loss: batch has no targets");
    StepReport rep;
    rep.talk_sentences = batch.size();

    bool second = mode_uses_second_pass(cfg.mode);
    bool rl = mode_uses_rl(cfg.mode);
    double l1 = rl ? cfg.lambda1 : 1.0;
    double l2 = rl ? cfg.lambda2 : 1.0;
    // two-pass-bleu applies RL to the second pass only (first pass stays
    // MLE); two-pass-bleu-rl extends two-pass-rl with the mixed reward.
    bool rl1 = rl && (cfg.mode == Mode::kFirstPassRl || cfg.mode == Mode::kTwoPassRl ||
                      cfg.mode == Mode::kTwoPassBleuRl);
    bool rl2 = rl && second && cfg.mode != Mode::kTwoPass;
    if (!rl1) l1 = 1.0;
    if (!rl2) l2 = 1.0;

    EncoderOutput enc = model.encode(batch.source_padded, train, drop_rng);
    FirstPassDraft draft;
    if (second) {
        auto draft_sents = decode_talk_first(model, enc);
        draft = model.make_draft(draft_sents, train, drop_rng);
    }

    Tensor mle1 = mle_loss_pass(model, enc, nullptr, batch.target_padded, train, drop_rng);
    rep.l_mle1 = mle1.item();
    Tensor total = l1 == 1.0 ? mle1 : scale(mle1, l1);

    if (rl1 && l1 < 1.0) {
        Tensor lr1 = self_critical_loss(model, batch, teacher, Pass::kFirst, rng, rep, enc,
                                        nullptr, mode_uses_teacher_reward(cfg.mode),
                                        mode_uses_bleu_reward(cfg.mode), cfg.beta, train,
                                        drop_rng);
        rep.l_rl1 = lr1.item();
        total = add(total, scale(lr1, 1.0 - l1));
    }

    if (second) {
        Tensor mle2 = mle_loss_pass(model, enc, &draft, batch.target_padded, train, drop_rng);
        rep.l_mle2 = mle2.item();
        total = add(total, l2 == 1.0 ? mle2 : scale(mle2, l2));
        if (rl2 && l2 < 1.0) {
            Tensor lr2 = self_critical_loss(model, batch, teacher, Pass::kSecond, rng, rep,
                                            enc, &draft, mode_uses_teacher_reward(cfg.mode),
                                            mode_uses_bleu_reward(cfg.mode), cfg.beta, train,
                                            drop_rng);
            rep.l_rl2 = lr2.item();
            total = add(total, scale(lr2, 1.0 - l2));
        }
    }
    rep.combined = total.item();
    return {total, rep};
}

// ---------------------------------------------------------------------------
// Training loop: one talk per batch, shuffle per config, deterministic under
// seed on one thread.
// ---------------------------------------------------------------------------

struct TrainResult {
    std::vector<StepReport> history;
    std::vector<double> dev_losses;  // one per epoch, when a dev corpus is given
};

inline double dataset_mle_loss(NmtModel& model, const Corpus& corpus, bool second_pass) {
    NoGradGuard ng;
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& talk : corpus) {
        Batch b = Batch::from_talk(talk);
        EncoderOutput enc = model.encode(b.source_padded);
        Tensor l = mle_loss_pass(model, enc, nullptr, b.target_padded, false, nullptr);
        double v = l.item();
        if (second_pass) {
            auto draft_sents = decode_talk_first(model, enc);
            FirstPassDraft draft = model.make_draft(draft_sents);
            v += mle_loss_pass(model, enc, &draft, b.target_padded, false, nullptr).item();
        }
        total += v;
        for (const auto& t : talk.target_sentences) tokens += t.size() + 1;
    }
    return total / double(tokens);
}

inline TrainResult train(NmtModel& model, const Corpus& corpus, const TrainConfig& cfg,
                         const RewardTeacher* teacher = nullptr, const Corpus* dev = nullptr,
                         const std::function<void(std::size_t)>& on_epoch = {}) {
    cfg.validate();
    if (mode_uses_teacher_reward(cfg.mode) && !teacher)
        throw std::runtime_error("train: mode requires a reward teacher");
    TrainResult result;
    Rng rng(cfg.seed);
    Rng drop_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    Adam opt(cfg.lr);
    std::size_t step = 0;
    bool done = false;
    for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        auto batches = shuffle_epoch(corpus, cfg.shuffle, rng);
        for (const auto& batch : batches) {
            TrainConfig step_cfg = cfg;
            if (step < cfg.warm_steps) {
                // MLE warm start before RL terms activate
                step_cfg.lambda1 = 1.0;
                step_cfg.lambda2 = 1.0;
            }
            model.params().zero_grad();
            auto [loss, rep] = combined_loss(model, batch, teacher, step_cfg, rng,
                                             /*train=*/true, &drop_rng);
            loss.backward();
            opt.step(model.params());
            rep.step = step;
            rep.epoch = epoch;
            result.history.push_back(std::move(rep));
            ++step;
            if (cfg.max_steps && step >= cfg.max_steps) {
                done = true;
                break;
            }
        }
        if (dev)
            result.dev_losses.push_back(
                dataset_mle_loss(model, *dev, mode_uses_second_pass(cfg.mode)));
        if (on_epoch) on_epoch(epoch);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Dev-set translation metrics (BLEU over raw token ids; detokenization is a
// bijection so scores match text-level BLEU).
// ---------------------------------------------------------------------------

struct DevMetrics {
    double bleu = 0.0;
    double bleu_doc = 0.0;
};

inline std::vector<std::vector<TokenIds>> translate_corpus(NmtModel& model,
                                                           const Corpus& corpus,
                                                           bool second_pass,
                                                           std::size_t beam_size = 1) {
    NoGradGuard ng;
    std::vector<std::vector<TokenIds>> out;
    DecodeOptions opt;
    if (beam_size > 1) {
        opt.mode = DecodeMode::kBeam;
        opt.beam_size = beam_size;
    }
    for (const auto& talk : corpus) {
        EncoderOutput enc = model.encode(talk.source_sentences);
        auto first = decode_talk_first(model, enc, opt);
        if (!second_pass) {
            out.push_back(std::move(first));
            continue;
        }
        // the draft itself always comes from greedy first-pass decoding
        auto draft_sents = beam_size > 1 ? decode_talk_first(model, enc) : first;
        FirstPassDraft draft = model.make_draft(draft_sents);
        out.push_back(decode_talk_second(model, enc, draft, opt));
    }
    return out;
}

inline DevMetrics evaluate_dev(NmtModel& model, const Corpus& dev, bool second_pass,
                               std::size_t beam_size = 1) {
    auto hyp = translate_corpus(model, dev, second_pass, beam_size);
    std::vector<TalkText> h, r;
    for (std::size_t i = 0; i < dev.size(); ++i) {
        TalkText ht, rt;
        for (const auto& s : hyp[i]) {
            Sentence ss;
            for (int t : s) ss.push_back(std::to_string(t));
            ht.push_back(std::move(ss));
        }
        for (const auto& s : dev[i].target_sentences) {
            Sentence ss;
            for (int t : s) ss.push_back(std::to_string(t));
            rt.push_back(std::move(ss));
        }
        h.push_back(std::move(ht));
        r.push_back(std::move(rt));
    }
    DevMetrics m;
    std::vector<Sentence> fh, fr;
    for (std::size_t i = 0; i < h.size(); ++i) {
        for (const auto& s : h[i]) fh.push_back(s);
        for (const auto& s : r[i]) fr.push_back(s);
    }
    m.bleu = bleu(fh, fr);
    m.bleu_doc = bleu_doc(h, r);
    return m;
}

// ---------------------------------------------------------------------------
// Balance-factor sweep: lambda1 first with first-pass RL, then lambda2 with
// lambda1 fixed at its best value.
// ---------------------------------------------------------------------------

struct SweepRow {
    std::string system;
    double lambda1 = 0.0, lambda2 = 0.0;
    double bleu = 0.0, bleu_doc = 0.0;
};

inline std::vector<double> lambda_grid(double lo = 0.70, double hi = 1.00,
                                       double step = 0.05) {
    std::vector<double> g;
    for (int i = 0;; ++i) {
        double v = lo + step * double(i);
        if (v > hi + 1e-9) break;
        g.push_back(std::min(v, hi));  // guard against accumulated fp error
    }
    return g;
}

inline std::vector<SweepRow> lambda_sweep(const ModelConfig& mcfg, const Corpus& corpus,
                                          const Corpus& dev, const TrainConfig& base,
                                          const RewardTeacher& teacher,
                                          const std::vector<double>& grid = lambda_grid()) {
    std::vector<SweepRow> rows;
    double best_l1 = grid.front(), best_score = -1.0;
    for (double l1 : grid) {
        TrainConfig cfg = base;
        cfg.mode = Mode::kFirstPassRl;
        cfg.lambda1 = l1;
        NmtModel model(mcfg, cfg.seed);
        train(model, corpus, cfg, &teacher);
        DevMetrics m = evaluate_dev(model, dev, /*second_pass=*/false);
        rows.push_back({mode_name(cfg.mode), l1, 1.0, m.bleu, m.bleu_doc});
        if (m.bleu_doc > best_score) {
            best_score = m.bleu_doc;
            best_l1 = l1;
        }
    }
    for (double l2 : grid) {
        TrainConfig cfg = base;
        cfg.mode = Mode::kTwoPassRl;
        cfg.lambda1 = best_l1;
        cfg.lambda2 = l2;
        NmtModel model(mcfg, cfg.seed);
        train(model, corpus, cfg, &teacher);
        DevMetrics m = evaluate_dev(model, dev, /*second_pass=*/true);
        rows.push_back({mode_name(cfg.mode), best_l1, l2, m.bleu, m.bleu_doc});
    }
    return rows;
}

}  // namespace dcnmt
