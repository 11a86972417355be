#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "dcnmt/corpus.hpp"
#include "dcnmt/transformer.hpp"

namespace dcnmt {

// A step function maps a BOS-led prefix to the logits row for the next
// token. All decode modes are built on it so first- and second-pass
// decoders share one implementation.
using StepFn = std::function<std::vector<double>(const TokenIds& prefix)>;

namespace detail {

inline std::vector<double> log_softmax_row(std::vector<double> row) {
    // PAD and BOS are never legal outputs.
    row[kPad] = -std::numeric_limits<double>::infinity();
    row[kBos] = -std::numeric_limits<double>::infinity();
    double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    double lz = mx + std::log(z);
    for (double& x : row) x -= lz;
    return row;
}

}  // namespace detail

// Argmax decoding until EOS or max_len. Returns content tokens only (no
// BOS/EOS). Deterministic.
inline TokenIds greedy_decode(const StepFn& step, std::size_t max_len) {
    TokenIds prefix{kBos};
    TokenIds out;
    for (std::size_t t = 0; t < max_len; ++t) {
        auto lp = detail::log_softmax_row(step(prefix));
        int best = int(std::max_element(lp.begin(), lp.end()) - lp.begin());
        if (best == kEos) break;
        out.push_back(best);
        prefix.push_back(best);
    }
    return out;
}

// Multinomial sampling per step; reproducible under the given generator.
inline TokenIds sample_decode(const StepFn& step, std::size_t max_len, Rng& rng) {
    TokenIds prefix{kBos};
    TokenIds out;
    for (std::size_t t = 0; t < max_len; ++t) {
        auto lp = detail::log_softmax_row(step(prefix));
        std::vector<double> probs(lp.size());
        for (std::size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);
        int tok = int(rng.categorical(probs));
        if (tok == kEos) break;
        out.push_back(tok);
        prefix.push_back(tok);
    }
    return out;
}

// Sum of per-step log-probabilities of the sequence followed by EOS.
inline double sequence_logprob(const StepFn& step, const TokenIds& tokens) {
    TokenIds prefix{kBos};
    double lp = 0.0;
    for (int tok : tokens) {
        auto row = detail::log_softmax_row(step(prefix));
        lp += row[std::size_t(tok)];
        prefix.push_back(tok);
    }
    lp += detail::log_softmax_row(step(prefix))[kEos];
    return lp;
}

// Log-probability normalized by length^alpha; a zero-length hypothesis is
// one EOS emission.
inline double length_normalized(double logprob, std::size_t len, double alpha) {
    return logprob / std::pow(double(std::max<std::size_t>(len + 1, 1)), alpha);
}

// Beam search with length-normalized scoring. beam_size = 1 is
// token-identical to greedy_decode.
inline TokenIds beam_decode(const StepFn& step, std::size_t max_len, std::size_t beam_size,
                            double length_penalty = 1.0) {
    if (beam_size < 1) throw std::invalid_argument("beam_decode: beam_size >= 1");
    struct Hyp {
        TokenIds tokens;
        double logprob = 0.0;
    };
    std::vector<Hyp> beam{Hyp{}};
    std::vector<Hyp> finished;
    for (std::size_t t = 0; !beam.empty(); ++t) {
        if (t == max_len) {
            // out of budget: force-finish what is left
            for (auto& h : beam) finished.push_back(h);
            break;
        }
        std::vector<Hyp> candidates;
        for (const auto& h : beam) {
            TokenIds prefix{kBos};
            prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
            auto lp = detail::log_softmax_row(step(prefix));
            std::vector<int> idx(lp.size());
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
            std::size_t keep = std::min<std::size_t>(beam_size, lp.size());
            std::partial_sort(idx.begin(), idx.begin() + long(keep), idx.end(),
                              [&](int a, int b) { return lp[std::size_t(a)] > lp[std::size_t(b)]; });
            for (std::size_t k = 0; k < keep; ++k) {
                Hyp c = h;
                c.logprob += lp[std::size_t(idx[k])];
                if (idx[k] == kEos) {
                    finished.push_back(std::move(c));
                } else {
                    c.tokens.push_back(idx[k]);
                    candidates.push_back(std::move(c));
                }
            }
        }
        std::sort(candidates.begin(), candidates.end(),
                  [](const Hyp& a, const Hyp& b) { return a.logprob > b.logprob; });
        if (candidates.size() > beam_size) candidates.resize(beam_size);
        beam = std::move(candidates);
    }
    if (finished.empty()) return {};
    auto best = std::max_element(finished.begin(), finished.end(),
                                 [length_penalty](const Hyp& a, const Hyp& b) {
                                     return length_normalized(a.logprob, a.tokens.size(),
                                                              length_penalty) <
                                            length_normalized(b.logprob, b.tokens.size(),
                                                              length_penalty);
                                 });
    return best->tokens;
}

// ---------------------------------------------------------------------------
// Model-level helpers
// ---------------------------------------------------------------------------

inline StepFn make_first_pass_step(NmtModel& model, const Tensor& enc_sentence) {
    return [&model, enc_sentence](const TokenIds& prefix) {
        NoGradGuard ng;
        Tensor logits = model.first_pass_logits(enc_sentence, prefix);
        std::size_t v = logits.cols(), last = logits.rows() - 1;
        return std::vector<double>(logits.val().begin() + long(last * v),
                                   logits.val().begin() + long((last + 1) * v));
    };
}

inline StepFn make_second_pass_step(NmtModel& model, const Tensor& enc_sentence,
                                    const FirstPassDraft& draft) {
    return [&model, enc_sentence, &draft](const TokenIds& prefix) {
        NoGradGuard ng;
        Tensor logits = model.second_pass_logits(enc_sentence, draft, prefix);
        std::size_t v = logits.cols(), last = logits.rows() - 1;
        return std::vector<double>(logits.val().begin() + long(last * v),
                                   logits.val().begin() + long((last + 1) * v));
    };
}

enum class DecodeMode { kGreedy, kSample, kBeam };

struct DecodeOptions {
    DecodeMode mode = DecodeMode::kGreedy;
    std::size_t beam_size = 4;
    double length_penalty = 1.0;
    Rng* rng = nullptr;  // required for sampling
};

inline TokenIds run_decode(const StepFn& step, std::size_t max_len,
                           const DecodeOptions& opt) {
    switch (opt.mode) {
        case DecodeMode::kGreedy:
            return greedy_decode(step, max_len);
        case DecodeMode::kSample:
            if (!opt.rng) throw std::invalid_argument("sample decode needs an rng");
            return sample_decode(step, max_len, *opt.rng);
        case DecodeMode::kBeam:
            return beam_decode(step, max_len, opt.beam_size, opt.length_penalty);
    }
    return {};
}

// Translates a talk with the first-pass decoder.
inline std::vector<TokenIds> decode_talk_first(NmtModel& model, const EncoderOutput& enc,
                                               const DecodeOptions& opt = {}) {
    NoGradGuard ng;
    std::vector<TokenIds> out;
    for (const auto& e : enc.sentences)
        out.push_back(run_decode(make_first_pass_step(model, e), model.max_len(), opt));
    return out;
}

// Translates a talk with the second-pass decoder conditioned on a draft of
// the whole talk.
inline std::vector<TokenIds> decode_talk_second(NmtModel& model, const EncoderOutput& enc,
                                                const FirstPassDraft& draft,
                                                const DecodeOptions& opt = {}) {
    NoGradGuard ng;
    std::vector<TokenIds> out;
    for (const auto& e : enc.sentences)
        out.push_back(run_decode(make_second_pass_step(model, e, draft), model.max_len(), opt));
    return out;
}

}  // namespace dcnmt
