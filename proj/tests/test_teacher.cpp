#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "dcnmt/teacher.hpp"
#include "testutil.hpp"

using namespace dcnmt;

namespace {

TeacherConfig small_config(std::size_t vocab = 20, std::size_t dim = 8) {
    TeacherConfig cfg;
    cfg.vocab = vocab;
    cfg.embed_dim = dim;
    cfg.hidden_dim = dim;
    cfg.dropout_keep = 1.0;  // deterministic unless a test opts in
    return cfg;
}

std::vector<std::vector<TokenIds>> ordered_documents(std::size_t n, Rng& rng) {
    // documents whose sentences share a drifting topic word, so forward and
    // reverse readings are distinguishable once trained
    std::vector<std::vector<TokenIds>> docs;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<TokenIds> doc;
        std::size_t len = 3 + rng.index(4);
        int topic = int(4 + rng.index(6));
        for (std::size_t s = 0; s < len; ++s) {
            TokenIds sent{topic + int(s) % 10 + 4, int(4 + rng.index(16))};
            doc.push_back(sent);
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

}  // namespace

TEST_CASE("sentence embedding is a sum of word embeddings") {
    RewardTeacher teacher(small_config(), 3);
    const auto& table = teacher.params().at("teacher.embed");

    Tensor single = teacher.sentence_embed({5});
    for (std::size_t i = 0; i < single.size(); ++i)
        CHECK(single.val()[i] == Catch::Approx(table.at(5, i)).margin(1e-15));

    // scalar-loop oracle for a multi-token sentence
    TokenIds sent{4, 9, 9, 17};
    Tensor got = teacher.sentence_embed(sent);
    for (std::size_t i = 0; i < got.size(); ++i) {
        double want = 0.0;
        for (int tok : sent) want += table.at(std::size_t(tok), i);
        CHECK(got.val()[i] == Catch::Approx(want).margin(1e-12));
    }

    // doubling every token doubles the embedding
    Tensor twice = teacher.sentence_embed({4, 9, 9, 17, 4, 9, 9, 17});
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(twice.val()[i] == Catch::Approx(2.0 * got.val()[i]).margin(1e-12));

    CHECK_THROWS(teacher.sentence_embed({}));
}

TEST_CASE("document embedding direction semantics") {
    RewardTeacher teacher(small_config(), 5);
    // single sentence: direction cannot matter
    std::vector<TokenIds> one{{4, 5, 6}};
    Tensor f = teacher.document_embed(one, Direction::kForward);
    Tensor r = teacher.document_embed(one, Direction::kReverse);
    CHECK(f.val() == r.val());

    // two distinct sentences: directions differ for a random GRU
    std::vector<TokenIds> two{{4, 5}, {10, 11, 12}};
    Tensor f2 = teacher.document_embed(two, Direction::kForward);
    Tensor r2 = teacher.document_embed(two, Direction::kReverse);
    double diff = 0.0;
    for (std::size_t i = 0; i < f2.size(); ++i) diff += std::abs(f2.val()[i] - r2.val()[i]);
    CHECK(diff > 1e-10);

    // reverse equals forward on the reversed document
    std::vector<TokenIds> flipped{{10, 11, 12}, {4, 5}};
    Tensor f3 = teacher.document_embed(flipped, Direction::kForward);
    CHECK(f3.val() == r2.val());

    CHECK_THROWS(teacher.document_embed({}, Direction::kForward));
}

TEST_CASE("teacher loss endpoints") {
    RewardTeacher teacher(small_config(), 7);
    // single-sentence document: fwd == rev, cosine exactly 1
    CHECK(teacher.teacher_loss({{4, 5, 6}}).item() == 1.0);
    // generic documents stay in [-1, 1]
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<TokenIds> doc;
        for (std::size_t s = 0; s < 2 + rng.index(5); ++s)
            doc.push_back({int(4 + rng.index(16)), int(4 + rng.index(16))});
        double l = teacher.teacher_loss(doc).item();
        CHECK(l >= -1.0);
        CHECK(l <= 1.0);
    }
}

TEST_CASE("order reward identities") {
    RewardTeacher teacher(small_config(), 9);
    std::vector<TokenIds> gold{{4, 5, 6}};
    // single-sentence gold: both cosines use the same gold embedding -> 0
    CHECK(teacher.order_reward({{7, 8}}, gold) == 0.0);

    // shuffling tokens inside sentences changes nothing (bag-of-words)
    std::vector<TokenIds> doc{{4, 5, 6}, {7, 8, 9}, {10, 11}};
    std::vector<TokenIds> gen{{5, 6}, {9, 7}, {12}};
    std::vector<TokenIds> gen_shuffled{{6, 5}, {7, 9}, {12}};
    CHECK(teacher.order_reward(gen, doc) == teacher.order_reward(gen_shuffled, doc));

    // empty generated sentences are scored as <unk>, not rejected
    std::vector<TokenIds> with_empty{{5, 6}, {}, {12}};
    std::vector<TokenIds> with_unk{{5, 6}, {kUnk}, {12}};
    CHECK(teacher.order_reward(with_empty, doc) == teacher.order_reward(with_unk, doc));

    // bounds
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<TokenIds> g, h;
        for (std::size_t s = 0; s < 2 + rng.index(4); ++s) {
            g.push_back({int(4 + rng.index(16))});
            h.push_back({int(4 + rng.index(16))});
        }
        double r = teacher.order_reward(h, g);
        CHECK(r >= -2.0);
        CHECK(r <= 2.0);
    }

    CHECK_THROWS(teacher.order_reward({}, doc));
    CHECK_THROWS(teacher.order_reward(gen, {}));
}

TEST_CASE("teacher loss gradient matches finite differences") {
    RewardTeacher teacher(small_config(12, 5), 11);
    std::vector<TokenIds> doc{{4, 5}, {6, 7, 8}, {9}};
    auto params = testutil::all_params(teacher.params());
    double err = testutil::fd_check(params, [&] { return teacher.teacher_loss(doc); });
    CHECK(err < 1e-3);
}

TEST_CASE("training lowers the order-confusion loss") {
    Rng rng(6);
    auto docs = ordered_documents(150, rng);
    auto cfg = small_config(30, 10);
    cfg.dropout_keep = 0.7;

    RewardTeacher untrained(cfg, 17);
    auto trained = train_teacher(docs, cfg, /*epochs=*/5, /*lr=*/1e-2, /*seed=*/17);
    CHECK(trained.frozen());

    auto held_out = ordered_documents(40, rng);
    double before = 0.0, after = 0.0;
    for (const auto& d : held_out) {
        before += untrained.teacher_loss(d).item();
        after += trained.teacher_loss(d).item();
    }
    before /= double(held_out.size());
    after /= double(held_out.size());
    CHECK(after < before);
    CHECK(after < 0.5);  // forward and reverse readings clearly separated

    // trained teacher rewards gold order over a reversed rendition
    double margin = 0.0;
    for (const auto& d : held_out) {
        std::vector<TokenIds> reversed(d.rbegin(), d.rend());
        margin += trained.order_reward(d, d) - trained.order_reward(reversed, d);
    }
    CHECK(margin / double(held_out.size()) > 0.1);
}

TEST_CASE("single-sentence corpus is a training no-op") {
    std::vector<std::vector<TokenIds>> docs{{{4, 5}}, {{6}}};
    auto cfg = small_config();
    auto t = train_teacher(docs, cfg, 3, 1e-2, 1);
    RewardTeacher fresh(cfg, 1);
    CHECK(t.frozen());
    CHECK(t.params().at("teacher.embed").val() == fresh.params().at("teacher.embed").val());
}

TEST_CASE("teacher checkpoint round trip") {
    auto cfg = small_config(16, 6);
    RewardTeacher teacher(cfg, 23);
    std::vector<TokenIds> doc{{4, 5}, {6, 7}, {8}};
    double before = teacher.teacher_loss(doc).item();

    std::string path = "teacher_test.ckpt";
    teacher.save(path, 12345);
    auto back = RewardTeacher::load(path, 12345);
    CHECK(back.frozen());
    CHECK(back.teacher_loss(doc).item() == before);
    CHECK_THROWS(RewardTeacher::load(path, 999));  // vocabulary mismatch
    std::remove(path.c_str());
}
