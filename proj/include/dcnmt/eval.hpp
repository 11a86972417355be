#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcnmt/rng.hpp"

namespace dcnmt {

using Sentence = std::vector<std::string>;
using TalkText = std::vector<Sentence>;

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

namespace detail {

inline std::string join_ngram(const Sentence& s, std::size_t start, std::size_t n) {
    std::string key;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) key += '\x1f';
        key += s[start + i];
    }
    return key;
}

inline std::unordered_map<std::string, std::size_t> ngram_counts(const Sentence& s,
                                                                 std::size_t n) {
    std::unordered_map<std::string, std::size_t> c;
    if (s.size() >= n)
        for (std::size_t i = 0; i + n <= s.size(); ++i) ++c[join_ngram(s, i, n)];
    return c;
}

}  // namespace detail

// Corpus-level BLEU with a single reference per hypothesis: geometric mean
// of clipped n-gram precisions (1..max_n) times the brevity penalty
// exp(min(0, 1 - ref_len/hyp_len)). Zero precision at any order gives 0
// unless add-one smoothing is enabled.
inline double bleu(const std::vector<Sentence>& hypotheses,
                   const std::vector<Sentence>& references, std::size_t max_n = 4,
                   bool smooth = false) {
    if (references.empty()) throw std::invalid_argument("bleu: empty reference set");
    if (hypotheses.size() != references.size())
        throw std::invalid_argument("bleu: hypothesis/reference counts differ");
    std::vector<std::size_t> match(max_n, 0), total(max_n, 0);
    std::size_t hyp_len = 0, ref_len = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        hyp_len += hypotheses[i].size();
        ref_len += references[i].size();
        for (std::size_t n = 1; n <= max_n; ++n) {
            auto h = detail::ngram_counts(hypotheses[i], n);
            auto r = detail::ngram_counts(references[i], n);
            for (const auto& [g, c] : h) {
                auto it = r.find(g);
                match[n - 1] += std::min(c, it == r.end() ? 0 : it->second);
            }
            if (hypotheses[i].size() >= n) total[n - 1] += hypotheses[i].size() - n + 1;
        }
    }
    if (hyp_len == 0) return 0.0;
    double logsum = 0.0;
    for (std::size_t n = 0; n < max_n; ++n) {
        double m = double(match[n]), t = double(total[n]);
        if (smooth) {
            m += 1.0;
            t += 1.0;
        }
        if (m == 0.0 || t == 0.0) return 0.0;
        logsum += std::log(m / t);
    }
    double bp = hyp_len < ref_len ? std::exp(1.0 - double(ref_len) / double(hyp_len)) : 1.0;
    return 100.0 * bp * std::exp(logsum / double(max_n));
}

// Concatenates each talk's sentences (single space between sentences) and
// scores corpus BLEU over the concatenated pairs.
inline double bleu_doc(const std::vector<TalkText>& hypothesis_talks,
                       const std::vector<TalkText>& reference_talks, std::size_t max_n = 4,
                       bool smooth = false) {
    if (hypothesis_talks.size() != reference_talks.size())
        throw std::invalid_argument("bleu_doc: talk structure mismatch");
    std::vector<Sentence> hyps, refs;
    for (std::size_t i = 0; i < hypothesis_talks.size(); ++i) {
        if (hypothesis_talks[i].size() != reference_talks[i].size())
            throw std::invalid_argument("bleu_doc: sentence counts differ in talk " +
                                        std::to_string(i));
        Sentence h, r;
        for (const auto& s : hypothesis_talks[i]) h.insert(h.end(), s.begin(), s.end());
        for (const auto& s : reference_talks[i]) r.insert(r.end(), s.begin(), s.end());
        hyps.push_back(std::move(h));
        refs.push_back(std::move(r));
    }
    return bleu(hyps, refs, max_n, smooth);
}

// ---------------------------------------------------------------------------
// Word vectors and coherence-as-similarity
// ---------------------------------------------------------------------------

struct WordVectors {
    std::size_t dim = 0;
    std::unordered_map<std::string, std::vector<double>> table;

    // File format: first line "<count> <dim>", then one token followed by
    // dim space-separated decimals per line.
    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write vectors: " + path);
        out << table.size() << " " << dim << "\n";
        out.precision(8);
        for (const auto& [tok, v] : table) {
            out << tok;
            for (double x : v) out << " " << x;
            out << "\n";
        }
    }

    static WordVectors load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read vectors: " + path);
        WordVectors wv;
        std::size_t count = 0;
        in >> count >> wv.dim;
        for (std::size_t i = 0; i < count; ++i) {
            std::string tok;
            in >> tok;
            std::vector<double> v(wv.dim);
            for (auto& x : v) in >> x;
            if (!in) throw std::runtime_error("truncated vector file: " + path);
            wv.table.emplace(std::move(tok), std::move(v));
        }
        return wv;
    }
};

namespace detail {

// Bag-of-vectors sentence representation; out-of-vocabulary tokens are
// skipped.
inline std::vector<double> sentence_vector(const Sentence& s, const WordVectors& wv) {
    std::vector<double> v(wv.dim, 0.0);
    for (const auto& tok : s) {
        auto it = wv.table.find(tok);
        if (it == wv.table.end()) continue;
        for (std::size_t i = 0; i < wv.dim; ++i) v[i] += it->second[i];
    }
    return v;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

// Mean cosine similarity between bag-of-vector sums of adjacent sentences.
// A zero-vector sentence (all tokens OOV) scores 0 against its neighbor,
// with a warning.
inline double coherence(const TalkText& document, const WordVectors& vectors,
                        bool warn = true) {
    if (document.size() < 2)
        throw std::invalid_argument("coherence: undefined for documents with < 2 sentences");
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < document.size(); ++i) {
        auto a = detail::sentence_vector(document[i], vectors);
        auto b = detail::sentence_vector(document[i + 1], vectors);
        bool za = std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; });
        bool zb = std::all_of(b.begin(), b.end(), [](double x) { return x == 0.0; });
        if ((za || zb) && warn)
            std::cerr << "coherence: all-OOV sentence, pair " << i << " scored 0\n";
        acc += (za || zb) ? 0.0 : detail::cosine(a, b);
    }
    return acc / double(document.size() - 1);
}

// Pooled over all adjacent pairs across talks; talks with < 2 sentences
// contribute nothing.
inline double corpus_coherence(const std::vector<TalkText>& talks,
                               const WordVectors& vectors) {
    double acc = 0.0;
    std::size_t pairs = 0;
    for (const auto& t : talks) {
        for (std::size_t i = 0; i + 1 < t.size(); ++i) {
            auto a = detail::sentence_vector(t[i], vectors);
            auto b = detail::sentence_vector(t[i + 1], vectors);
            acc += detail::cosine(a, b);
            ++pairs;
        }
    }
    if (pairs == 0) throw std::invalid_argument("corpus_coherence: no adjacent pairs");
    return acc / double(pairs);
}

// ---------------------------------------------------------------------------
// Skip-gram word vectors with negative sampling, desk scale.
// ---------------------------------------------------------------------------

inline WordVectors train_word_vectors(const std::vector<Sentence>& corpus,
                                      std::size_t dim = 100, std::size_t window = 2,
                                      std::size_t epochs = 3, std::uint64_t seed = 1,
                                      double lr = 0.05, std::size_t negatives = 5) {
    if (corpus.empty()) throw std::invalid_argument("train_word_vectors: empty corpus");
    std::vector<std::string> vocab;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<double> freq;
    for (const auto& s : corpus)
        for (const auto& tok : s) {
            auto it = index.find(tok);
            if (it == index.end()) {
                index[tok] = vocab.size();
                vocab.push_back(tok);
                freq.push_back(0.0);
            }
            freq[index[tok]] += 1.0;
        }
    std::size_t v = vocab.size();
    std::vector<double> noise(v);
    for (std::size_t i = 0; i < v; ++i) noise[i] = std::pow(freq[i], 0.75);

    Rng rng(seed);
    std::vector<double> in(v * dim), out(v * dim, 0.0);
    for (auto& x : in) x = rng.uniform(-0.5 / double(dim), 0.5 / double(dim));

    for (std::size_t e = 0; e < epochs; ++e) {
        for (const auto& s : corpus) {
            for (std::size_t c = 0; c < s.size(); ++c) {
                std::size_t center = index[s[c]];
                std::size_t lo = c >= window ? c - window : 0;
                std::size_t hi = std::min(s.size(), c + window + 1);
                for (std::size_t j = lo; j < hi; ++j) {
                    if (j == c) continue;
                    std::size_t ctx = index[s[j]];
                    // one positive + k negative updates on the center vector
                    std::vector<double> grad_in(dim, 0.0);
                    auto update = [&](std::size_t target, double label) {
                        double dot = 0.0;
                        for (std::size_t k = 0; k < dim; ++k)
                            dot += in[center * dim + k] * out[target * dim + k];
                        double p = 1.0 / (1.0 + std::exp(-dot));
                        double g = lr * (label - p);
                        for (std::size_t k = 0; k < dim; ++k) {
                            grad_in[k] += g * out[target * dim + k];
                            out[target * dim + k] += g * in[center * dim + k];
                        }
                    };
                    update(ctx, 1.0);
                    for (std::size_t n = 0; n < negatives; ++n)
                        update(rng.categorical(noise), 0.0);
                    for (std::size_t k = 0; k < dim; ++k) in[center * dim + k] += grad_in[k];
                }
            }
        }
    }
    WordVectors wv;
    wv.dim = dim;
    for (std::size_t i = 0; i < v; ++i)
        wv.table[vocab[i]] =
            std::vector<double>(in.begin() + long(i * dim), in.begin() + long((i + 1) * dim));
    return wv;
}

// ---------------------------------------------------------------------------
// Conjunction statistics: sentence-initial occurrences of listed tokens.
// ---------------------------------------------------------------------------

inline std::vector<std::string> default_conjunctions() {
    return {"And", "But", "In", "So", "What"};
}

inline std::map<std::string, std::size_t> conjunction_stats(
    const std::vector<TalkText>& hypothesis_talks,
    const std::vector<std::string>& conjunction_list = default_conjunctions()) {
    std::map<std::string, std::size_t> counts;
    for (const auto& c : conjunction_list) counts[c] = 0;
    for (const auto& talk : hypothesis_talks)
        for (const auto& sent : talk)
            if (!sent.empty() && counts.count(sent.front())) ++counts[sent.front()];
    return counts;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct EvalReport {
    double bleu = 0.0;
    double bleu_doc = 0.0;
    double coherence = 0.0;
    bool has_coherence = false;
    std::map<std::string, std::size_t> conjunction_counts;

    // One metric per line, NAME<TAB>VALUE.
    std::string to_text() const {
        std::ostringstream out;
        out << "BLEU\t" << bleu << "\n";
        out << "BLEU_doc\t" << bleu_doc << "\n";
        if (has_coherence) out << "coherence\t" << coherence << "\n";
        out << "METEOR\tunavailable\n";
        for (const auto& [tok, c] : conjunction_counts)
            out << "conj_" << tok << "\t" << c << "\n";
        return out.str();
    }
};

inline EvalReport evaluate_talks(const std::vector<TalkText>& hyp,
                                 const std::vector<TalkText>& ref,
                                 const WordVectors* vectors = nullptr) {
    EvalReport rep;
    std::vector<Sentence> flat_h, flat_r;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        for (const auto& s : hyp[i]) flat_h.push_back(s);
        for (const auto& s : ref[i]) flat_r.push_back(s);
    }
    rep.bleu = bleu(flat_h, flat_r);
    rep.bleu_doc = bleu_doc(hyp, ref);
    if (vectors) {
        rep.coherence = corpus_coherence(hyp, *vectors);
        rep.has_coherence = true;
    }
    rep.conjunction_counts = conjunction_stats(hyp);
    return rep;
}

}  // namespace dcnmt
