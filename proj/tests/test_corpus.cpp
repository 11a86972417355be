#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "dcnmt/corpus.hpp"

using namespace dcnmt;

namespace {

Talk make_talk(std::size_t n_sentences, int base = 10) {
    Talk t;
    t.id = "t";
    for (std::size_t i = 0; i < n_sentences; ++i) {
        t.source_sentences.push_back({base + int(i)});
        t.target_sentences.push_back({base + 100 + int(i)});
    }
    return t;
}

}  // namespace

TEST_CASE("split_talk greedy chunking") {
    auto chunks = split_talk(make_talk(40), 16);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].size() == 16);
    CHECK(chunks[1].size() == 16);
    CHECK(chunks[2].size() == 8);

    CHECK(split_talk(make_talk(16), 16).size() == 1);
    CHECK(split_talk(make_talk(16), 16)[0].size() == 16);
    CHECK(split_talk(make_talk(1), 16).size() == 1);
    CHECK(split_talk(make_talk(0), 16).empty());
}

TEST_CASE("split_talk concatenation identity on random talks") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 1 + rng.index(45);
        std::size_t maxs = 1 + rng.index(20);
        Talk t = make_talk(n);
        auto chunks = split_talk(t, maxs);
        std::vector<TokenIds> src, tgt;
        for (const auto& c : chunks) {
            src.insert(src.end(), c.source_sentences.begin(), c.source_sentences.end());
            tgt.insert(tgt.end(), c.target_sentences.begin(), c.target_sentences.end());
        }
        CHECK(src == t.source_sentences);
        CHECK(tgt == t.target_sentences);
        for (std::size_t i = 0; i + 1 < chunks.size(); ++i) CHECK(chunks[i].size() == maxs);
    }
}

TEST_CASE("vocabulary basics and round trip") {
    std::vector<std::vector<std::string>> corpus{
        {"the", "cat", "sat"}, {"the", "dog", "sat"}, {"the", "cat"}};
    auto v = build_vocab(corpus, 100);
    CHECK(v.lookup("<pad>") == kPad);
    CHECK(v.lookup("<bos>") == kBos);
    CHECK(v.lookup("<eos>") == kEos);
    CHECK(v.lookup("<unk>") == kUnk);
    CHECK(v.lookup("the") == 4);  // most frequent first
    CHECK(v.lookup("never-seen") == kUnk);

    std::string text = "the cat sat";
    CHECK(v.decode(v.encode(text)) == text);
}

TEST_CASE("build_vocab frequency cutoff and tie order") {
    std::vector<std::vector<std::string>> corpus{{"b", "a", "b", "a", "c"}};
    auto v = build_vocab(corpus, kNumReserved + 2);
    CHECK(v.size() == kNumReserved + 2);
    // b and a tie at 2; b occurred first
    CHECK(v.lookup("b") == 4);
    CHECK(v.lookup("a") == 5);
    CHECK(v.lookup("c") == kUnk);
    CHECK_THROWS(build_vocab({}, 10));
}

TEST_CASE("vocabulary file round trip") {
    std::vector<std::vector<std::string>> corpus{{"x", "y", "z"}};
    auto v = build_vocab(corpus, 100);
    std::string path = "vocab_test.tmp";
    v.save(path);
    auto v2 = Vocabulary::load(path);
    CHECK(v2.size() == v.size());
    CHECK(v2.lookup("y") == v.lookup("y"));
    CHECK(v2.hash() == v.hash());
    std::remove(path.c_str());
}

TEST_CASE("shuffle_epoch talk-shuffle preserves within-talk order") {
    Corpus corpus{make_talk(4, 10), make_talk(3, 50), make_talk(5, 90)};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        auto batches = shuffle_epoch(corpus, ShuffleStrategy::kTalkShuffle, rng);
        REQUIRE(batches.size() == 3);
        for (const auto& b : batches) {
            // find matching talk and compare order
            bool matched = false;
            for (const auto& t : corpus)
                if (t.source_sentences == b.source) matched = true;
            CHECK(matched);
        }
    }
    // single talk: identical order
    Corpus one{make_talk(6)};
    Rng rng(3);
    auto batches = shuffle_epoch(one, ShuffleStrategy::kTalkShuffle, rng);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].source == one[0].source_sentences);
}

TEST_CASE("sentence-shuffle is reproducible under a seed") {
    Corpus corpus{make_talk(4, 10), make_talk(3, 50)};
    Rng a(42), b(42), c(43);
    auto ba = shuffle_epoch(corpus, ShuffleStrategy::kSentenceShuffle, a);
    auto bb = shuffle_epoch(corpus, ShuffleStrategy::kSentenceShuffle, b);
    auto bc = shuffle_epoch(corpus, ShuffleStrategy::kSentenceShuffle, c);
    REQUIRE(ba.size() == 7);  // one sentence per batch
    for (const auto& batch : ba) CHECK(batch.size() == 1);
    for (std::size_t i = 0; i < ba.size(); ++i) CHECK(ba[i].source == bb[i].source);
    bool any_diff = false;
    for (std::size_t i = 0; i < ba.size(); ++i)
        if (ba[i].source != bc[i].source) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("corpus file format round trip") {
    std::string path = "corpus_test.tmp";
    {
        std::ofstream out(path);
        out << "a b c\nd e\n\nf\ng h\n";
    }
    auto talks = read_raw_talks(path);
    REQUIRE(talks.size() == 2);
    REQUIRE(talks[0].size() == 2);
    CHECK(talks[0][0] == std::vector<std::string>{"a", "b", "c"});
    CHECK(talks[1][1] == std::vector<std::string>{"g", "h"});
    std::remove(path.c_str());
}

TEST_CASE("synthetic corpus structure") {
    auto synth = make_synthetic_discourse_corpus(20, 6, 10, 123);
    REQUIRE(synth.talks.size() == 20);
    std::size_t n_conn = synth.connectives.size();
    for (const auto& talk : synth.talks) {
        REQUIRE(talk.size() == 6);
        for (std::size_t i = 0; i < talk.size(); ++i) {
            const auto& src = talk.source_sentences[i];
            const auto& tgt = talk.target_sentences[i];
            std::size_t off = i == 0 ? 0 : 1;
            REQUIRE(tgt.size() == src.size() + off);
            // deterministic transduction s<k> -> t<k>
            for (std::size_t j = 0; j < src.size(); ++j) {
                const auto& stok = synth.src_vocab.token(src[j]);
                const auto& ttok = synth.tgt_vocab.token(tgt[j + off]);
                CHECK(ttok == "t" + stok.substr(1));
            }
            // connective determined by the talk's opening content token
            if (i > 0) {
                const auto& first = talk.source_sentences[0];
                auto k = std::stoul(synth.src_vocab.token(first.front()).substr(1));
                CHECK(synth.tgt_vocab.token(tgt[0]) == synth.connectives[k % n_conn]);
            }
        }
    }
    // reproducible under the same seed
    auto again = make_synthetic_discourse_corpus(20, 6, 10, 123);
    CHECK(again.talks[7].source_sentences == synth.talks[7].source_sentences);
    CHECK(again.talks[7].target_sentences == synth.talks[7].target_sentences);
}

TEST_CASE("synthetic corpus variable talk sizes") {
    auto synth = make_synthetic_discourse_corpus(200, 16, 20, 9, /*min_sentences=*/4);
    std::size_t lo = 100, hi = 0;
    for (const auto& t : synth.talks) {
        lo = std::min(lo, t.size());
        hi = std::max(hi, t.size());
    }
    CHECK(lo >= 4);
    CHECK(hi <= 16);
    CHECK(lo < hi);
}

TEST_CASE("batch padding masks") {
    Talk t;
    t.source_sentences = {{5, 6, 7}, {8}};
    t.target_sentences = {{9}, {10, 11}};
    Batch b = Batch::from_talk(t);
    CHECK(b.source_padded[1] == std::vector<int>{8, kPad, kPad});
    CHECK(b.target_padded[0] == std::vector<int>{9, kPad});
    CHECK(b.source_lengths == std::vector<std::size_t>{3, 1});
}
