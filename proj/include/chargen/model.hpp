// chargen: character-level data-to-text generation toolkit
//
// model.hpp - the full network: shared character embeddings, two
// role-exchangeable GRUs, additive attention, copy mechanism and output
// head. Provides teacher-forced scoring and greedy decoding with full
// per-step traces.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "chargen/copynet.hpp"
#include "chargen/data.hpp"
#include "chargen/layers.hpp"
#include "chargen/tensor.hpp"

namespace chargen {

struct ModelConfig {
    std::size_t alphabet_size = Alphabet::size();
    std::size_t embedding_size = 32;
    std::size_t hidden_size = 128;
    std::size_t align_size = 0;  // 0 means "equal to hidden_size"
    bool copy_enabled = true;
    bool shift_enabled = true;
    bool sum_loss = false;  // default: mean per target character
    std::size_t max_decode_length = 400;

    std::size_t effective_align() const { return align_size ? align_size : hidden_size; }
};

/// All trainable parameter groups. gru_a and gru_b are dimension-identical
/// so that encoder/decoder roles can be exchanged between them.
struct ModelParams {
    ModelConfig config;
    TensorPtr embedding_table;  // [alphabet, embedding]
    GruParams gru_a;
    GruParams gru_b;
    AlignmentParams alignment;
    OutputHead head;
    CopyGateParams gate;
    TensorPtr init_W;  // [hidden, hidden] decoder-init projection
    TensorPtr init_b;  // [hidden]
};

inline ModelParams make_model(ParameterStore& store, const ModelConfig& config,
                              std::mt19937_64& rng) {
    ModelParams m;
    m.config = config;
    std::size_t E = config.embedding_size, H = config.hidden_size;
    m.embedding_table = store.add(
        "embedding", detail::init_matrix(rng, config.alphabet_size, E,
                                         1.0 / std::sqrt(static_cast<double>(E))));
    m.gru_a = make_gru(store, "gru_a", E, H, rng);
    m.gru_b = make_gru(store, "gru_b", E, H, rng);
    m.alignment = make_alignment(store, "align", H, 2 * H, config.effective_align(), rng);
    m.head = make_output_head(store, "head", 3 * H, config.alphabet_size, rng);
    m.gate = make_copy_gate(store, "gate", E, H, 2 * H, rng);
    m.init_W = store.add("init.W",
                         detail::init_matrix(rng, H, H, 1.0 / std::sqrt(static_cast<double>(H))));
    m.init_b = store.add("init.b", zeros({H}, true));
    return m;
}

enum class Phase { Forward, Backward };

/// Which GRU plays encoder and which plays decoder.
struct RoleAssignment {
    const GruParams* encoder_gru = nullptr;
    const GruParams* decoder_gru = nullptr;
};

/// Forward phase computes F (table -> text): encoder gru_a, decoder gru_b.
/// Backward phase computes G (text -> table): roles swapped.
inline RoleAssignment assign_roles(const ModelParams& params, Phase phase) {
    RoleAssignment r;
    if (phase == Phase::Forward) {
        r.encoder_gru = &params.gru_a;
        r.decoder_gru = &params.gru_b;
    } else {
        r.encoder_gru = &params.gru_b;
        r.decoder_gru = &params.gru_a;
    }
    return r;
}

/// Per-step record of the decode: mixture distribution, gate value and
/// attention row.
struct TraceStep {
    std::vector<double> attention;  // alpha row, length T_x
    double p_gen = 1.0;
    std::size_t emitted = 0;        // character index (gold under teacher forcing)
    std::vector<double> p_final;    // mixture distribution over the alphabet
};

struct DecoderTrace {
    std::size_t source_length = 0;  // T_x
    std::vector<TraceStep> steps;   // length T_y
    bool hit_end_symbol = false;    // false means truncated at max length

    std::size_t output_length() const { return steps.size(); }  // T_y
};

namespace detail {

struct DecoderState {
    TensorPtr s;
    TensorPtr p_prev;
    EncoderAnnotations annotations;
};

inline DecoderState init_decoder(const ModelParams& m, const RoleAssignment& roles,
                                 const std::vector<std::size_t>& source) {
    if (source.empty()) throw ContractError("decode: empty source sequence");
    for (std::size_t c : source)
        if (c >= m.config.alphabet_size)
            throw ContractError("decode: source index outside alphabet");
    std::vector<TensorPtr> inputs;
    inputs.reserve(source.size());
    for (std::size_t c : source) inputs.push_back(embedding(m.embedding_table, c));
    DecoderState st;
    st.annotations = encode_bidirectional(inputs, *roles.encoder_gru);
    std::size_t H = m.config.hidden_size;
    auto h1_backward = slice(st.annotations.vectors.front(), H, 2 * H);
    st.s = tanh_op(add(matvec(m.init_W, h1_backward), m.init_b));
    st.p_prev = constant_scalar(0.5);  // neutral gate initialization
    return st;
}

struct StepResult {
    TensorPtr p_final;
    TensorPtr p_gen;
    TensorPtr alphas;
};

/// One decode step. Attention keys off the previous state (Bahdanau
/// convention); the GRU consumes only the previous character's embedding
/// so its input size stays exchangeable with the encoder's.
inline StepResult decode_step(const ModelParams& m, const RoleAssignment& roles,
                              DecoderState& st, const std::vector<std::size_t>& source,
                              std::size_t prev_char) {
    auto y_prev = embedding(m.embedding_table, prev_char);
    auto att = attend(st.s, st.annotations, m.alignment);
    st.s = gru_step(y_prev, st.s, *roles.decoder_gru, Direction::Forward);
    auto p_alph = alphabet_distribution(st.s, att.context, m.head);
    StepResult res;
    res.alphas = att.alphas;
    if (m.config.copy_enabled) {
        res.p_gen = copy_gate(y_prev, st.s, st.p_prev, att.context, m.gate);
        auto p_copy = copy_distribution(att.alphas, source, m.config.alphabet_size,
                                        m.config.shift_enabled);
        res.p_final = mixture(res.p_gen, p_alph, p_copy);
        st.p_prev = res.p_gen;
    } else {
        res.p_gen = constant_scalar(1.0);
        res.p_final = p_alph;
    }
    return res;
}

}  // namespace detail

struct TeacherForcedResult {
    TensorPtr loss;
    DecoderTrace trace;
};

/// Score a (source, target) pair under teacher forcing. The target is
/// extended with the end symbol; the first previous-output is the start
/// symbol. Loss is the mean (or, when configured, sum) of per-character
/// negative log-likelihoods of the mixture distribution.
inline TeacherForcedResult run_teacher_forced(const ModelParams& m,
                                              const RoleAssignment& roles,
                                              const std::vector<std::size_t>& source,
                                              const std::vector<std::size_t>& target) {
    if (target.empty()) throw ContractError("run_teacher_forced: empty target");
    for (std::size_t c : target)
        if (c >= m.config.alphabet_size)
            throw ContractError("run_teacher_forced: target index outside alphabet");
    auto st = detail::init_decoder(m, roles, source);

    std::vector<std::size_t> gold = target;
    gold.push_back(Alphabet::kEnd);

    TeacherForcedResult out;
    out.trace.source_length = source.size();
    TensorPtr total;
    std::size_t prev = Alphabet::kStart;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        auto step = detail::decode_step(m, roles, st, source, prev);
        auto l = nll(step.p_final, gold[i]);
        total = total ? add(total, l) : l;
        TraceStep ts;
        ts.attention = step.alphas->value;
        ts.p_gen = step.p_gen->value[0];
        ts.emitted = gold[i];
        ts.p_final = step.p_final->value;
        out.trace.steps.push_back(std::move(ts));
        prev = gold[i];
    }
    out.trace.hit_end_symbol = true;
    out.loss = m.config.sum_loss
                   ? total
                   : scale(total, 1.0 / static_cast<double>(gold.size()));
    return out;
}

struct DecodeResult {
    std::vector<std::size_t> indices;  // emitted characters, end symbol excluded
    std::string text;
    DecoderTrace trace;
};

/// Greedy argmax decode: emits the most probable character each step and
/// feeds it back; stops at the end symbol or max_len.
inline DecodeResult greedy_decode(const ModelParams& m, const RoleAssignment& roles,
                                  const std::vector<std::size_t>& source,
                                  std::size_t max_len) {
    if (max_len < 1) throw ContractError("greedy_decode: max_len must be >= 1");
    NoGradGuard no_grad;
    auto st = detail::init_decoder(m, roles, source);
    DecodeResult out;
    out.trace.source_length = source.size();
    std::size_t prev = Alphabet::kStart;
    for (std::size_t i = 0; i < max_len; ++i) {
        auto step = detail::decode_step(m, roles, st, source, prev);
        const auto& p = step.p_final->value;
        std::size_t best = static_cast<std::size_t>(
            std::max_element(p.begin(), p.end()) - p.begin());
        TraceStep ts;
        ts.attention = step.alphas->value;
        ts.p_gen = step.p_gen->value[0];
        ts.emitted = best;
        ts.p_final = p;
        out.trace.steps.push_back(std::move(ts));
        if (best == Alphabet::kEnd) {
            out.trace.hit_end_symbol = true;
            break;
        }
        out.indices.push_back(best);
        prev = best;
    }
    out.text = decode_indices(out.indices);
    return out;
}

}  // namespace chargen
