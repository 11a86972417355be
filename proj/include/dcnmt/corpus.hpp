#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcnmt/rng.hpp"

namespace dcnmt {

using TokenIds = std::vector<int>;

// Reserved token ids, fixed across every vocabulary.
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kUnk = 3;
constexpr int kNumReserved = 4;

// One document: ordered sentences, optionally paired with targets.
struct Talk {
    std::string id;
    std::vector<TokenIds> source_sentences;
    std::vector<TokenIds> target_sentences;  // empty at inference

    std::size_t size() const { return source_sentences.size(); }
};

class Vocabulary {
public:
    Vocabulary() {
        add_reserved();
    }

    int add(const std::string& token) {
        auto it = token_to_id_.find(token);
        if (it != token_to_id_.end()) return it->second;
        int id = int(id_to_token_.size());
        token_to_id_[token] = id;
        id_to_token_.push_back(token);
        return id;
    }

    int lookup(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    const std::string& token(int id) const { return id_to_token_.at(std::size_t(id)); }
    std::size_t size() const { return id_to_token_.size(); }

    TokenIds encode(const std::string& line) const {
        TokenIds ids;
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) ids.push_back(lookup(tok));
        return ids;
    }

    std::string decode(const TokenIds& ids) const {
        std::string out;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) out += ' ';
            out += token(ids[i]);
        }
        return out;
    }

    // One token per line, line number = id - 4.
    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
        for (std::size_t i = kNumReserved; i < id_to_token_.size(); ++i)
            out << id_to_token_[i] << "\n";
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read vocabulary: " + path);
        Vocabulary v;
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) v.add(line);
        return v;
    }

    // Stable content hash, recorded in teacher checkpoints so a teacher is
    // never scored against a different vocabulary.
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ull;
        for (const auto& t : id_to_token_) {
            for (char c : t) {
                h ^= std::uint64_t(static_cast<unsigned char>(c));
                h *= 1099511628211ull;
            }
            h ^= 0xff;
            h *= 1099511628211ull;
        }
        return h;
    }

private:
    void add_reserved() {
        add("<pad>");
        add("<bos>");
        add("<eos>");
        add("<unk>");
    }

    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// One talk per batch: padded matrices plus length masks. Losses skip padded
// positions entirely, so appending PAD columns never changes a loss.
struct Batch {
    std::string talk_id;
    std::vector<TokenIds> source;  // unpadded, per sentence
    std::vector<TokenIds> target;
    std::vector<std::vector<int>> source_padded;
    std::vector<std::vector<int>> target_padded;
    std::vector<std::size_t> source_lengths;
    std::vector<std::size_t> target_lengths;

    static Batch from_talk(const Talk& talk) {
        Batch b;
        b.talk_id = talk.id;
        b.source = talk.source_sentences;
        b.target = talk.target_sentences;
        std::size_t smax = 0, tmax = 0;
        for (const auto& s : b.source) smax = std::max(smax, s.size());
        for (const auto& t : b.target) tmax = std::max(tmax, t.size());
        for (const auto& s : b.source) {
            b.source_lengths.push_back(s.size());
            auto row = s;
            row.resize(smax, kPad);
            b.source_padded.push_back(std::move(row));
        }
        for (const auto& t : b.target) {
            b.target_lengths.push_back(t.size());
            auto row = t;
            row.resize(tmax, kPad);
            b.target_padded.push_back(std::move(row));
        }
        return b;
    }

    Talk to_talk() const {
        Talk t;
        t.id = talk_id;
        t.source_sentences = source;
        t.target_sentences = target;
        return t;
    }

    std::size_t size() const { return source.size(); }
};

using Corpus = std::vector<Talk>;

// ---------------------------------------------------------------------------
// Talk splitting and batching
// ---------------------------------------------------------------------------

// Greedy chunking: every chunk except possibly the last has exactly
// max_sentences, and concatenating the chunks reproduces the input.
inline std::vector<Talk> split_talk(const Talk& talk, std::size_t max_sentences = 16) {
    if (max_sentences < 1) throw std::invalid_argument("split_talk: max_sentences >= 1");
    std::vector<Talk> out;
    bool has_targets = !talk.target_sentences.empty();
    if (has_targets && talk.target_sentences.size() != talk.source_sentences.size())
        throw std::runtime_error("split_talk: source/target sentence counts differ");
    for (std::size_t off = 0; off < talk.size(); off += max_sentences) {
        std::size_t end = std::min(off + max_sentences, talk.size());
        Talk chunk;
        chunk.id = out.empty() && end == talk.size()
                       ? talk.id
                       : talk.id + "#" + std::to_string(out.size());
        chunk.source_sentences.assign(talk.source_sentences.begin() + long(off),
                                      talk.source_sentences.begin() + long(end));
        if (has_targets)
            chunk.target_sentences.assign(talk.target_sentences.begin() + long(off),
                                          talk.target_sentences.begin() + long(end));
        out.push_back(std::move(chunk));
    }
    return out;
}

inline Corpus split_corpus(const Corpus& corpus, std::size_t max_sentences = 16) {
    Corpus out;
    for (const auto& t : corpus) {
        auto chunks = split_talk(t, max_sentences);
        out.insert(out.end(), chunks.begin(), chunks.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary construction: most-frequent tokens up to size_limit, ties broken
// by first occurrence. Everything else maps to <unk>.
// ---------------------------------------------------------------------------

inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences,
                              std::size_t size_limit) {
    if (sentences.empty()) throw std::runtime_error("build_vocab: empty corpus");
    std::unordered_map<std::string, std::size_t> freq;
    std::unordered_map<std::string, std::size_t> first_seen;
    std::size_t pos = 0;
    for (const auto& sent : sentences)
        for (const auto& tok : sent) {
            if (!freq.count(tok)) first_seen[tok] = pos;
            ++freq[tok];
            ++pos;
        }
    std::vector<std::string> tokens;
    tokens.reserve(freq.size());
    for (const auto& [tok, f] : freq) tokens.push_back(tok);
    std::sort(tokens.begin(), tokens.end(), [&](const std::string& a, const std::string& b) {
        if (freq[a] != freq[b]) return freq[a] > freq[b];
        return first_seen[a] < first_seen[b];
    });
    Vocabulary v;
    std::size_t keep = size_limit > kNumReserved ? size_limit - kNumReserved : 0;
    for (std::size_t i = 0; i < tokens.size() && i < keep; ++i) v.add(tokens[i]);
    return v;
}

// ---------------------------------------------------------------------------
// Corpus file I/O. Format: UTF-8 text, one sentence per line, talks separated
// by exactly one blank line. Text is expected to be pre-tokenized; sentences
// are split on whitespace.
// ---------------------------------------------------------------------------

inline std::vector<std::vector<std::vector<std::string>>> read_raw_talks(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read corpus: " + path);
    std::vector<std::vector<std::vector<std::string>>> talks;
    std::vector<std::vector<std::string>> current;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (!current.empty()) talks.push_back(std::move(current));
            current.clear();
            continue;
        }
        std::vector<std::string> toks;
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) toks.push_back(std::move(tok));
        current.push_back(std::move(toks));
    }
    if (!current.empty()) talks.push_back(std::move(current));
    return talks;
}

inline Corpus load_parallel_corpus(const std::string& src_path, const std::string& tgt_path,
                                   const Vocabulary& src_vocab, const Vocabulary& tgt_vocab) {
    auto src = read_raw_talks(src_path);
    auto tgt = read_raw_talks(tgt_path);
    if (src.size() != tgt.size())
        throw std::runtime_error("parallel corpus: talk counts differ");
    Corpus corpus;
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i].size() != tgt[i].size())
            throw std::runtime_error("parallel corpus: sentence counts differ in talk " +
                                     std::to_string(i));
        Talk t;
        t.id = "talk" + std::to_string(i);
        for (const auto& sent : src[i]) {
            TokenIds ids;
            for (const auto& tok : sent) ids.push_back(src_vocab.lookup(tok));
            t.source_sentences.push_back(std::move(ids));
        }
        for (const auto& sent : tgt[i]) {
            TokenIds ids;
            for (const auto& tok : sent) ids.push_back(tgt_vocab.lookup(tok));
            t.target_sentences.push_back(std::move(ids));
        }
        corpus.push_back(std::move(t));
    }
    return corpus;
}

inline Corpus load_source_corpus(const std::string& src_path, const Vocabulary& src_vocab) {
    auto src = read_raw_talks(src_path);
    Corpus corpus;
    for (std::size_t i = 0; i < src.size(); ++i) {
        Talk t;
        t.id = "talk" + std::to_string(i);
        for (const auto& sent : src[i]) {
            TokenIds ids;
            for (const auto& tok : sent) ids.push_back(src_vocab.lookup(tok));
            t.source_sentences.push_back(std::move(ids));
        }
        corpus.push_back(std::move(t));
    }
    return corpus;
}

// Writes talks in the corpus format (one sentence per line, blank line
// between talks) so translations feed straight back into evaluation.
inline void write_talks(const std::string& path,
                        const std::vector<std::vector<TokenIds>>& talks,
                        const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    for (std::size_t i = 0; i < talks.size(); ++i) {
        if (i) out << "\n";
        for (const auto& sent : talks[i]) out << vocab.decode(sent) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Epoch shuffling strategies
// ---------------------------------------------------------------------------

enum class ShuffleStrategy { kSentenceShuffle, kTalkShuffle };

inline ShuffleStrategy parse_shuffle(const std::string& s) {
    if (s == "sentence-shuffle" || s == "sentence") return ShuffleStrategy::kSentenceShuffle;
    if (s == "talk-shuffle" || s == "talk") return ShuffleStrategy::kTalkShuffle;
    throw std::invalid_argument("unknown shuffle strategy: " + s);
}

// talk-shuffle: permute talks, keep within-talk sentence order, one talk per
// batch. sentence-shuffle: every sentence becomes its own batch and the
// global sentence order is randomized, destroying document structure.
inline std::vector<Batch> shuffle_epoch(const Corpus& talks, ShuffleStrategy strategy,
                                        Rng& rng) {
    if (talks.empty()) throw std::runtime_error("shuffle_epoch: empty corpus");
    std::vector<Batch> batches;
    if (strategy == ShuffleStrategy::kTalkShuffle) {
        std::vector<std::size_t> order(talks.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order.begin(), order.end());
        for (auto i : order) batches.push_back(Batch::from_talk(talks[i]));
    } else {
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < talks.size(); ++i)
            for (std::size_t j = 0; j < talks[i].size(); ++j) pairs.emplace_back(i, j);
        rng.shuffle(pairs.begin(), pairs.end());
        for (auto [i, j] : pairs) {
            Talk single;
            single.id = talks[i].id + "@" + std::to_string(j);
            single.source_sentences.push_back(talks[i].source_sentences[j]);
            if (!talks[i].target_sentences.empty())
                single.target_sentences.push_back(talks[i].target_sentences[j]);
            batches.push_back(Batch::from_talk(single));
        }
    }
    return batches;
}

// ---------------------------------------------------------------------------
// Synthetic discourse corpus
//
// Toy grammar with a deterministic source->target transduction plus a
// cross-sentence dependency: each target sentence after the first opens with
// a connective chosen by the final content token of the previous sentence.
// Translating sentence i correctly therefore needs context from sentence
// i-1, and sentence order is statistically detectable from the connective
// chain.
// ---------------------------------------------------------------------------

struct SyntheticCorpus {
    Corpus talks;
    Vocabulary src_vocab;
    Vocabulary tgt_vocab;
    std::vector<std::string> connectives;
};

inline SyntheticCorpus make_synthetic_discourse_corpus(std::size_t n_talks,
                                                       std::size_t sentences_per_talk,
                                                       std::size_t vocab_size,
                                                       std::uint64_t seed,
                                                       std::size_t min_sentences_per_talk = 0,
                                                       std::size_t min_sentence_len = 3,
                                                       std::size_t max_sentence_len = 6) {
    if (n_talks == 0 || sentences_per_talk == 0 || vocab_size == 0)
        throw std::invalid_argument("make_synthetic_discourse_corpus: positive sizes required");
    SyntheticCorpus out;
    static const std::vector<std::string> kConnectives = {"and", "but", "so", "then"};
    out.connectives = kConnectives;
    // Content words: source "s<k>" maps deterministically to target "t<k>".
    std::vector<int> src_ids, tgt_ids;
    for (std::size_t k = 0; k < vocab_size; ++k) {
        src_ids.push_back(out.src_vocab.add("s" + std::to_string(k)));
        tgt_ids.push_back(out.tgt_vocab.add("t" + std::to_string(k)));
    }
    std::vector<int> conn_ids;
    for (const auto& c : kConnectives) conn_ids.push_back(out.tgt_vocab.add(c));

    Rng rng(seed);
    for (std::size_t ti = 0; ti < n_talks; ++ti) {
        Talk talk;
        talk.id = "synth" + std::to_string(ti);
        std::size_t n_sent = sentences_per_talk;
        if (min_sentences_per_talk > 0 && min_sentences_per_talk < sentences_per_talk)
            n_sent = min_sentences_per_talk +
                     rng.index(sentences_per_talk - min_sentences_per_talk + 1);
        // The talk's connective is indexed by the opening sentence's first
        // content word, so sentences after the first can only be translated
        // correctly with cross-sentence (document) context.
        std::size_t talk_key = 0;
        for (std::size_t si = 0; si < n_sent; ++si) {
            std::size_t len = min_sentence_len + rng.index(max_sentence_len - min_sentence_len + 1);
            TokenIds src, tgt;
            for (std::size_t w = 0; w < len; ++w) {
                std::size_t k = rng.index(vocab_size);
                src.push_back(src_ids[k]);
                if (si == 0 && w == 0) talk_key = k;
            }
            if (si > 0) tgt.push_back(conn_ids[talk_key % conn_ids.size()]);
            for (int sid : src) {
                // invert "s<k>" -> "t<k>" via position in the id table
                std::size_t k = std::size_t(sid - src_ids[0]);
                tgt.push_back(tgt_ids[k]);
            }
            talk.source_sentences.push_back(std::move(src));
            talk.target_sentences.push_back(std::move(tgt));
        }
        out.talks.push_back(std::move(talk));
    }
    return out;
}

}  // namespace dcnmt
