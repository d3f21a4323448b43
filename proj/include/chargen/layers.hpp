// chargen: character-level data-to-text generation toolkit
//
// layers.hpp - GRU cell, bidirectional encoder pass and additive attention.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "chargen/tensor.hpp"

namespace chargen {

enum class Direction { Forward, Backward };

/// One direction's worth of GRU weights.
struct GruDirectionParams {
    TensorPtr Wz, Uz, bz;  // update gate
    TensorPtr Wr, Ur, br;  // reset gate
    TensorPtr Wh, Uh, bh;  // candidate
};

/// A bidirectional GRU parameter set. Encoder and decoder roles are not
/// fixed; the decoder uses only the forward direction of whichever set it
/// is handed.
struct GruParams {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    GruDirectionParams fwd;
    GruDirectionParams bwd;

    const GruDirectionParams& dir(Direction d) const {
        return d == Direction::Forward ? fwd : bwd;
    }
};

namespace detail {

inline TensorPtr init_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                             double scale_v) {
    std::uniform_real_distribution<double> u(-scale_v, scale_v);
    std::vector<double> v(rows * cols);
    for (double& x : v) x = u(rng);
    return make_leaf({rows, cols}, std::move(v), true);
}

inline TensorPtr init_vector(std::mt19937_64& rng, std::size_t n, double scale_v) {
    std::uniform_real_distribution<double> u(-scale_v, scale_v);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return make_leaf({n}, std::move(v), true);
}

}  // namespace detail

/// Allocate and register one direction of GRU weights under `prefix.`.
inline GruDirectionParams make_gru_direction(ParameterStore& store, const std::string& prefix,
                                             std::size_t input_size, std::size_t hidden_size,
                                             std::mt19937_64& rng) {
    double si = 1.0 / std::sqrt(static_cast<double>(input_size));
    double sh = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    GruDirectionParams p;
    p.Wz = store.add(prefix + ".Wz", detail::init_matrix(rng, hidden_size, input_size, si));
    p.Uz = store.add(prefix + ".Uz", detail::init_matrix(rng, hidden_size, hidden_size, sh));
    p.bz = store.add(prefix + ".bz", zeros({hidden_size}, true));
    p.Wr = store.add(prefix + ".Wr", detail::init_matrix(rng, hidden_size, input_size, si));
    p.Ur = store.add(prefix + ".Ur", detail::init_matrix(rng, hidden_size, hidden_size, sh));
    p.br = store.add(prefix + ".br", zeros({hidden_size}, true));
    p.Wh = store.add(prefix + ".Wh", detail::init_matrix(rng, hidden_size, input_size, si));
    p.Uh = store.add(prefix + ".Uh", detail::init_matrix(rng, hidden_size, hidden_size, sh));
    p.bh = store.add(prefix + ".bh", zeros({hidden_size}, true));
    return p;
}

inline GruParams make_gru(ParameterStore& store, const std::string& prefix,
                          std::size_t input_size, std::size_t hidden_size,
                          std::mt19937_64& rng) {
    GruParams g;
    g.input_size = input_size;
    g.hidden_size = hidden_size;
    g.fwd = make_gru_direction(store, prefix + ".fwd", input_size, hidden_size, rng);
    g.bwd = make_gru_direction(store, prefix + ".bwd", input_size, hidden_size, rng);
    return g;
}

/// Standard GRU recurrence:
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   c = tanh(Wh x + Uh (r * h) + bh)
///   h' = (1 - z) * h + z * c
inline TensorPtr gru_step(const TensorPtr& x, const TensorPtr& h_prev,
                          const GruParams& params, Direction direction) {
    if (x->size() != params.input_size || h_prev->size() != params.hidden_size)
        throw ContractError("gru_step: input/hidden size mismatch");
    const GruDirectionParams& p = params.dir(direction);
    auto z = sigmoid_op(add(add(matvec(p.Wz, x), matvec(p.Uz, h_prev)), p.bz));
    auto r = sigmoid_op(add(add(matvec(p.Wr, x), matvec(p.Ur, h_prev)), p.br));
    auto c = tanh_op(add(add(matvec(p.Wh, x), matvec(p.Uh, mul(r, h_prev))), p.bh));
    auto ones = constant(std::vector<double>(params.hidden_size, 1.0));
    return add(mul(sub(ones, z), h_prev), mul(z, c));
}

/// Per-position annotations h_j = forward_j || backward_j.
struct EncoderAnnotations {
    std::size_t length = 0;            // T_x
    std::vector<TensorPtr> vectors;    // each of size 2 * hidden
    TensorPtr matrix;                  // [T_x, 2 * hidden], stacked annotations
};

inline EncoderAnnotations encode_bidirectional(const std::vector<TensorPtr>& inputs,
                                               const GruParams& params) {
    if (inputs.empty()) throw ContractError("encode_bidirectional: empty sequence");
    std::size_t T = inputs.size();
    std::vector<TensorPtr> fwd(T), bwd(T);
    TensorPtr h = zeros({params.hidden_size});
    for (std::size_t j = 0; j < T; ++j) {
        h = gru_step(inputs[j], h, params, Direction::Forward);
        fwd[j] = h;
    }
    h = zeros({params.hidden_size});
    for (std::size_t j = T; j-- > 0;) {
        h = gru_step(inputs[j], h, params, Direction::Backward);
        bwd[j] = h;
    }
    EncoderAnnotations ann;
    ann.length = T;
    ann.vectors.reserve(T);
    for (std::size_t j = 0; j < T; ++j) ann.vectors.push_back(concat(fwd[j], bwd[j]));
    ann.matrix = stack_rows(ann.vectors);
    return ann;
}

/// Single-hidden-layer additive alignment network.
struct AlignmentParams {
    TensorPtr Ws;  // [align, state]
    TensorPtr Wh;  // [align, 2 * hidden]
    TensorPtr v;   // [align]
    TensorPtr b;   // [align]
};

inline AlignmentParams make_alignment(ParameterStore& store, const std::string& prefix,
                                      std::size_t state_size, std::size_t annotation_size,
                                      std::size_t align_size, std::mt19937_64& rng) {
    double ss = 1.0 / std::sqrt(static_cast<double>(state_size));
    double sa = 1.0 / std::sqrt(static_cast<double>(annotation_size));
    double sv = 1.0 / std::sqrt(static_cast<double>(align_size));
    AlignmentParams p;
    p.Ws = store.add(prefix + ".Ws", detail::init_matrix(rng, align_size, state_size, ss));
    p.Wh = store.add(prefix + ".Wh", detail::init_matrix(rng, align_size, annotation_size, sa));
    p.v = store.add(prefix + ".v", detail::init_vector(rng, align_size, sv));
    p.b = store.add(prefix + ".b", zeros({align_size}, true));
    return p;
}

struct AttentionResult {
    TensorPtr scores;   // e_i, [T_x]
    TensorPtr alphas;   // softmax(e_i), [T_x]
    TensorPtr context;  // alpha-weighted annotation sum, [2 * hidden]
};

/// e_j = v . tanh(Ws s + Wh h_j + b); alpha = softmax(e); C = sum_j alpha_j h_j.
inline AttentionResult attend(const TensorPtr& s_prev, const EncoderAnnotations& ann,
                              const AlignmentParams& params) {
    // projected annotations: [T_x, align]
    auto proj = matmul_transposed_b(ann.matrix, params.Wh);
    auto shifted = add_row_broadcast(proj, add(matvec(params.Ws, s_prev), params.b));
    auto e = matvec(tanh_op(shifted), params.v);
    AttentionResult r;
    r.scores = e;
    r.alphas = softmax_op(e);
    r.context = matvec_transposed(ann.matrix, r.alphas);
    return r;
}

}  // namespace chargen
