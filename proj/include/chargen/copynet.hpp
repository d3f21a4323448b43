// chargen: character-level data-to-text generation toolkit
//
// copynet.hpp - character-wise copy mechanism: alphabet distribution,
// attention-derived copy distribution (with optional right shift),
// recurrent soft copy gate, and their mixture.

#pragma once

#include <string>
#include <vector>

#include "chargen/layers.hpp"
#include "chargen/tensor.hpp"

namespace chargen {

/// Maps [s_i ; C_i] to alphabet logits.
struct OutputHead {
    TensorPtr V;  // [alphabet, state + 2 * hidden]
    TensorPtr b;  // [alphabet]
};

inline OutputHead make_output_head(ParameterStore& store, const std::string& prefix,
                                   std::size_t in_size, std::size_t alphabet_size,
                                   std::mt19937_64& rng) {
    OutputHead h;
    h.V = store.add(prefix + ".V",
                    detail::init_matrix(rng, alphabet_size, in_size,
                                        1.0 / std::sqrt(static_cast<double>(in_size))));
    h.b = store.add(prefix + ".b", zeros({alphabet_size}, true));
    return h;
}

/// P_alph = softmax(V [s ; C] + b)
inline TensorPtr alphabet_distribution(const TensorPtr& s, const TensorPtr& context,
                                       const OutputHead& head) {
    return softmax_op(add(matvec(head.V, concat(s, context)), head.b));
}

/// Attention mass aggregated by input character.
///
/// Unshifted: mass(c) = sum of alpha_j over positions j holding character c.
/// Shifted: the alpha vector is first translated one step to the right
/// (position 1 gets zero mass) and renormalized positionally, then
/// aggregated. If every bit of mass sat on the last position, the shifted
/// vector would be all-zero; that degenerate case falls back to the
/// unshifted aggregation.
inline TensorPtr copy_distribution(const TensorPtr& alphas,
                                   const std::vector<std::size_t>& input_chars,
                                   std::size_t alphabet_size, bool shift) {
    if (alphas->shape.size() != 1 || alphas->size() != input_chars.size())
        throw ContractError("copy_distribution: attention/input length mismatch");
    if (!shift) return scatter_add(alphas, input_chars, alphabet_size);
    auto d = shift_right(alphas);
    auto total = sum(d);
    if (total->value[0] <= 0.0)
        return scatter_add(alphas, input_chars, alphabet_size);
    return scatter_add(div_scalar(d, total), input_chars, alphabet_size);
}

/// Gate parameters; every path projects to a single scalar logit.
struct CopyGateParams {
    TensorPtr Wy;  // [1, embedding]
    TensorPtr Ws;  // [1, state]
    TensorPtr Wc;  // [1, 2 * hidden]
    TensorPtr Wp;  // [1] scalar weight on the previous gate value
    TensorPtr b;   // [1]
};

inline CopyGateParams make_copy_gate(ParameterStore& store, const std::string& prefix,
                                     std::size_t embedding_size, std::size_t state_size,
                                     std::size_t context_size, std::mt19937_64& rng) {
    CopyGateParams p;
    p.Wy = store.add(prefix + ".Wy",
                     detail::init_matrix(rng, 1, embedding_size,
                                         1.0 / std::sqrt(static_cast<double>(embedding_size))));
    p.Ws = store.add(prefix + ".Ws",
                     detail::init_matrix(rng, 1, state_size,
                                         1.0 / std::sqrt(static_cast<double>(state_size))));
    p.Wc = store.add(prefix + ".Wc",
                     detail::init_matrix(rng, 1, context_size,
                                         1.0 / std::sqrt(static_cast<double>(context_size))));
    p.Wp = store.add(prefix + ".Wp", zeros({1}, true));
    p.b = store.add(prefix + ".b", zeros({1}, true));
    return p;
}

/// p_gen = sigmoid(Wy y~ + Ws s + Wp p_prev + Wc C + b), a scalar in (0, 1).
inline TensorPtr copy_gate(const TensorPtr& y_prev_embedding, const TensorPtr& s,
                           const TensorPtr& p_prev, const TensorPtr& context,
                           const CopyGateParams& params) {
    if (!p_prev->is_scalar() || p_prev->value[0] < 0.0 || p_prev->value[0] > 1.0)
        throw ContractError("copy_gate: p_prev must be a scalar in [0, 1]");
    auto logit = add(matvec(params.Wy, y_prev_embedding),
                     add(matvec(params.Ws, s),
                         add(mul(params.Wp, p_prev),
                             add(matvec(params.Wc, context), params.b))));
    return sigmoid_op(logit);
}

/// P_final = p_gen * P_alph + (1 - p_gen) * P_copy
inline TensorPtr mixture(const TensorPtr& p_gen, const TensorPtr& p_alph,
                         const TensorPtr& p_copy) {
    if (!p_gen->is_scalar()) throw ContractError("mixture: p_gen must be scalar");
    if (p_alph->shape != p_copy->shape)
        throw ContractError("mixture: distributions over different alphabets");
    auto one_minus = sub(constant_scalar(1.0), p_gen);
    return add(smul(p_gen, p_alph), smul(one_minus, p_copy));
}

}  // namespace chargen
