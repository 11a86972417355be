#include <catch2/catch_amalgamated.hpp>

#include "dcnmt/gru.hpp"
#include "dcnmt/params.hpp"
#include "dcnmt/tensor.hpp"
#include "dcnmt/transformer.hpp"
#include "testutil.hpp"

using namespace dcnmt;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, bool grad = true) {
    std::vector<double> v(Tensor::numel_of(shape));
    for (auto& x : v) x = rng.normal(0.0, 1.0);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

}  // namespace

TEST_CASE("matmul identity cases") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor c = matmul(a, eye);
    CHECK(c.val() == std::vector<double>{1, 2, 3, 4});

    Tensor col = Tensor::from({2, 1}, {5, 6});
    Tensor d = matmul(eye, col);
    CHECK(d.val() == std::vector<double>{5, 6});
}

TEST_CASE("matmul shape mismatch throws") {
    Tensor a({2, 3});
    Tensor b({2, 3});
    CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("matmul gradient of sum(A*B) wrt A is ones*B^T") {
    Rng rng(7);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor loss = sum(matmul(a, b));
    loss.backward();
    // dA[i,l] = sum_j B[l,j]
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t l = 0; l < 4; ++l) {
            double want = 0.0;
            for (std::size_t j = 0; j < 2; ++j) want += b.at(l, j);
            CHECK(a.grad()[i * 4 + l] == Catch::Approx(want).margin(1e-12));
        }
    double err = testutil::fd_check({a, b}, [&] { return sum(matmul(a, b)); });
    CHECK(err < 1e-3);
}

TEST_CASE("softmax basics") {
    Tensor x = Tensor::from({1, 2}, {0, 0});
    auto y = softmax(x);
    CHECK(y.val()[0] == Catch::Approx(0.5));
    CHECK(y.val()[1] == Catch::Approx(0.5));

    Tensor big = Tensor::from({1, 2}, {1000, 1000});
    auto z = softmax(big);
    CHECK(z.val()[0] == Catch::Approx(0.5));
    CHECK(std::isfinite(z.val()[1]));

    Rng rng(3);
    Tensor r = random_tensor({4, 6}, rng, false);
    auto s = softmax(r);
    for (std::size_t row = 0; row < 4; ++row) {
        double acc = 0.0;
        for (std::size_t c = 0; c < 6; ++c) {
            acc += s.at(row, c);
            CHECK(s.at(row, c) >= 0.0);
        }
        CHECK(acc == Catch::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softmax gradient matches finite differences") {
    Rng rng(11);
    Tensor x = random_tensor({2, 5}, rng);
    Tensor w = random_tensor({2, 5}, rng, false);  // fixed projection to scalar
    double err = testutil::fd_check({x}, [&] { return sum(mul(softmax(x), w)); });
    CHECK(err < 1e-4);
}

TEST_CASE("cosine similarity") {
    Tensor u = Tensor::from({1, 3}, {1, 2, 3}, true);
    CHECK(cosine_similarity(u, u).item() == Catch::Approx(1.0));

    Tensor e1 = Tensor::from({1, 2}, {1, 0});
    Tensor e2 = Tensor::from({1, 2}, {0, 1});
    CHECK(cosine_similarity(e1, e2).item() == Catch::Approx(0.0).margin(1e-15));

    // scalar-loop oracle
    std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < 3; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    double want = dot / (std::sqrt(na) * std::sqrt(nb));
    Tensor v = Tensor::from({1, 3}, b);
    CHECK(cosine_similarity(u, v).item() == Catch::Approx(want).margin(1e-12));

    Tensor zero({1, 3}, 0.0);
    CHECK_THROWS_AS(cosine_similarity(u, zero), DegenerateVectorError);
}

TEST_CASE("cosine similarity gradient") {
    Rng rng(5);
    Tensor u = random_tensor({1, 6}, rng);
    Tensor v = random_tensor({1, 6}, rng);
    double err = testutil::fd_check({u, v}, [&] { return cosine_similarity(u, v); });
    CHECK(err < 1e-3);
}

TEST_CASE("gru_step zero-parameter convention") {
    ParamStore store;
    Rng rng(1);
    auto p = GruCellParams::create(store, "g", 3, 3, rng, 0.0);  // all-zero weights
    Tensor h = Tensor::from({1, 3}, {0.4, -0.2, 1.0});
    Tensor out = gru_step(p, h, h);
    // z = sigmoid(0) = 0.5, cand = tanh(0) = 0 -> h' = 0.5 h
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(out.val()[i] == Catch::Approx(0.5 * h.val()[i]).margin(1e-12));
}

TEST_CASE("gru_step gradient matches finite differences") {
    ParamStore store;
    Rng rng(9);
    auto p = GruCellParams::create(store, "g", 4, 3, rng, 0.4);
    Tensor h0 = random_tensor({1, 3}, rng);
    Tensor x0 = random_tensor({1, 4}, rng, false);
    Tensor x1 = random_tensor({1, 4}, rng, false);
    auto loss = [&] {
        Tensor h = gru_step(p, h0, x0);
        h = gru_step(p, h, x1);
        return sum(h);
    };
    auto params = testutil::all_params(store);
    params.push_back(h0);
    CHECK(testutil::fd_check(params, loss) < 1e-3);
}

TEST_CASE("elementwise and norm ops gradients") {
    Rng rng(13);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    Tensor g = random_tensor({4}, rng);
    Tensor bias = random_tensor({4}, rng);
    CHECK(testutil::fd_check({a, b}, [&] { return sum(mul(add(a, b), sub(a, b))); }) < 1e-3);
    CHECK(testutil::fd_check({a}, [&] { return sum(relu(a)); }, 1e-5) < 1e-3);
    CHECK(testutil::fd_check({a}, [&] { return sum(tanh_op(a)); }) < 1e-3);
    CHECK(testutil::fd_check({a}, [&] { return sum(sigmoid(a)); }) < 1e-3);
    CHECK(testutil::fd_check({a, g, bias}, [&] { return sum(mul(layer_norm(a, g, bias), a)); },
                             1e-5) < 1e-3);
}

TEST_CASE("embedding lookup and cross entropy gradients") {
    Rng rng(17);
    Tensor table = random_tensor({6, 4}, rng);
    std::vector<int> ids{1, 3, 3, 5};
    Tensor w = random_tensor({4, 3}, rng, false);
    std::vector<int> targets{0, 2, 2, 1};
    auto loss = [&] { return cross_entropy(matmul(embedding_lookup(table, ids), w), targets); };
    CHECK(testutil::fd_check({table}, loss) < 1e-3);
}

TEST_CASE("cross entropy skips -1 targets (padding)") {
    Tensor logits = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    double with_pad = cross_entropy(logits, {1, -1}).item();
    Tensor row = Tensor::from({1, 3}, {1, 2, 3});
    double only_first = cross_entropy(row, {1}).item();
    CHECK(with_pad == Catch::Approx(only_first).margin(1e-12));
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    ParamStore store;
    Rng rng(2);
    store.create("p", {3, 3}, rng, 1.0);
    auto before = store.at("p").val();
    Adam opt(0.1);
    store.zero_grad();
    opt.step(store);
    opt.step(store);
    CHECK(store.at("p").val() == before);  // delta exactly zero
}

TEST_CASE("dropout") {
    Rng rng(4);
    Tensor a = random_tensor({10, 10}, rng, false);
    // keep = 1 or eval mode: identity
    Tensor same = dropout(a, 1.0, rng, true);
    CHECK(same.val() == a.val());
    Tensor eval = dropout(a, 0.3, rng, false);
    CHECK(eval.val() == a.val());
    // kept entries are scaled by 1/keep
    Tensor t = dropout(a, 0.5, rng, true);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t.val()[i] == 0.0)
            ++zeros;
        else
            CHECK(t.val()[i] == Catch::Approx(2.0 * a.val()[i]));
    }
    CHECK(zeros > 10);
    CHECK(zeros < 90);
}

TEST_CASE("causal mask blocks future positions") {
    Rng rng(21);
    ParamStore store;
    auto attn = AttnParams::create(store, "a", 8, rng);
    Tensor x = random_tensor({5, 8}, rng, false);
    auto mask = causal_mask(5);
    Tensor y1 = multi_head_attention(x, x, attn, 2, mask);
    // perturb the last row (future for all t < 4)
    Tensor x2 = Tensor::from(x.shape(), x.val());
    for (std::size_t c = 0; c < 8; ++c) x2.val()[4 * 8 + c] += 3.14;
    Tensor y2 = multi_head_attention(x2, x2, attn, 2, mask);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 8; ++c)
            CHECK(y1.at(r, c) == y2.at(r, c));  // bit-identical
}

TEST_CASE("attention gradient matches finite differences") {
    Rng rng(23);
    ParamStore store;
    auto attn = AttnParams::create(store, "a", 6, rng);
    Tensor q = random_tensor({3, 6}, rng);
    Tensor kv = random_tensor({4, 6}, rng);
    auto loss = [&] { return sum(mul(multi_head_attention(q, kv, attn, 3), q)); };
    auto params = testutil::all_params(store);
    params.push_back(q);
    params.push_back(kv);
    CHECK(testutil::fd_check(params, loss) < 1e-3);
}

TEST_CASE("backward visits each node once") {
    // diamond: y = (x + x) elementwise-multiplied with itself; d/dx of (2x)^2 = 8x
    Tensor x = Tensor::from({1, 1}, {3.0}, true);
    Tensor two_x = add(x, x);
    Tensor y = sum(mul(two_x, two_x));
    y.backward();
    CHECK(x.grad()[0] == Catch::Approx(8.0 * 3.0));
}
