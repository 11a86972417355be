#pragma once

#include <string>

#include "dcnmt/params.hpp"
#include "dcnmt/tensor.hpp"

namespace dcnmt {

// Gated recurrent cell parameters. Vectors are rows, so x is [1 x d_in],
// h is [1 x d_h], and weights are [d_in x d_h] / [d_h x d_h].
struct GruCellParams {
    Tensor wz, uz, bz;  // update gate
    Tensor wr, ur, br;  // reset gate
    Tensor wh, uh, bh;  // candidate

    static GruCellParams create(ParamStore& store, const std::string& prefix,
                                std::size_t d_in, std::size_t d_h, Rng& rng,
                                double init_scale) {
        GruCellParams p;
        p.wz = store.create(prefix + ".wz", {d_in, d_h}, rng, init_scale);
        p.uz = store.create(prefix + ".uz", {d_h, d_h}, rng, init_scale);
        p.bz = store.create_zeros(prefix + ".bz", {d_h});
        p.wr = store.create(prefix + ".wr", {d_in, d_h}, rng, init_scale);
        p.ur = store.create(prefix + ".ur", {d_h, d_h}, rng, init_scale);
        p.br = store.create_zeros(prefix + ".br", {d_h});
        p.wh = store.create(prefix + ".wh", {d_in, d_h}, rng, init_scale);
        p.uh = store.create(prefix + ".uh", {d_h, d_h}, rng, init_scale);
        p.bh = store.create_zeros(prefix + ".bh", {d_h});
        return p;
    }

    static GruCellParams from_store(ParamStore& store, const std::string& prefix) {
        GruCellParams p;
        p.wz = store.at(prefix + ".wz");
        p.uz = store.at(prefix + ".uz");
        p.bz = store.at(prefix + ".bz");
        p.wr = store.at(prefix + ".wr");
        p.ur = store.at(prefix + ".ur");
        p.br = store.at(prefix + ".br");
        p.wh = store.at(prefix + ".wh");
        p.uh = store.at(prefix + ".uh");
        p.bh = store.at(prefix + ".bh");
        return p;
    }
};

// z = sigmoid(Wz x + Uz h + bz)
// r = sigmoid(Wr x + Ur h + br)
// hcand = tanh(Wh x + Uh (r * h) + bh)
// h' = (1 - z) * h + z * hcand
inline Tensor gru_step(const GruCellParams& p, const Tensor& h_prev, const Tensor& x) {
    Tensor z = sigmoid(add_rowwise(add(matmul(x, p.wz), matmul(h_prev, p.uz)), p.bz));
    Tensor r = sigmoid(add_rowwise(add(matmul(x, p.wr), matmul(h_prev, p.ur)), p.br));
    Tensor cand =
        tanh_op(add_rowwise(add(matmul(x, p.wh), matmul(mul(r, h_prev), p.uh)), p.bh));
    Tensor ones({1, h_prev.cols()}, 1.0);
    return add(mul(sub(ones, z), h_prev), mul(z, cand));
}

}  // namespace dcnmt
