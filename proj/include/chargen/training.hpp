// chargen: character-level data-to-text generation toolkit
//
// training.hpp - the two-phase switching-GRU training pipeline: teacher
// forcing, Adam with gradient clipping, validation-based early stopping
// and the four-variant ablation runner.

#pragma once

#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chargen/metrics.hpp"
#include "chargen/model.hpp"
#include "chargen/tensor.hpp"

namespace chargen {

struct TrainConfig {
    std::size_t max_epochs = 10;
    std::size_t batch_size = 1;  // >1 accumulates gradients before stepping
    double learning_rate = 1e-3;
    double clip_norm = 5.0;
    std::size_t validation_interval = 500;  // iterations between evaluations
    std::size_t patience = 3;               // evaluations without improvement
    std::size_t validation_max_instances = 0;  // 0 = all
    bool copy_enabled = true;
    bool switch_enabled = true;
    bool shift_enabled = true;
    std::uint64_t seed = 0;
    std::size_t max_decode_length = 400;

    void validate() const {
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (learning_rate <= 0 || clip_norm <= 0) throw ConfigError("rates must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (validation_interval < 1) throw ConfigError("validation_interval must be >= 1");
    }
};

/// Per-iteration losses and diagnostics.
struct IterationReport {
    double l_forward = 0.0;
    std::optional<double> l_backward;  // absent when switching is disabled
    double grad_norm_forward = 0.0;    // pre-clip
    double grad_norm_backward = 0.0;
    double p_gen_mean = 1.0;           // over phase-1 steps
    bool phase2_skipped = false;       // decode produced an empty utterance
};

/// One training example as index sequences.
struct EncodedExample {
    std::vector<std::size_t> source;  // meaning representation
    std::vector<std::size_t> target;  // reference sentence
};

/// One switching-GRU learning iteration over a single example:
///   1. forward roles: teacher-forced L_forward = loss(y~, y); step.
///   2. greedy-decode y~ under forward roles (detached from gradients).
///   3. backward roles: teacher-forced L_backward = loss(x~, x) with
///      source y~ and target x; step.
/// With switching disabled only phase 1 runs.
inline IterationReport switching_iteration(const EncodedExample& example, ModelParams& model,
                                           ParameterStore& store, AdamState& adam,
                                           const TrainConfig& config) {
    model.config.copy_enabled = config.copy_enabled;
    model.config.shift_enabled = config.shift_enabled;
    IterationReport report;

    auto fwd = assign_roles(model, Phase::Forward);
    auto result = run_teacher_forced(model, fwd, example.source, example.target);
    report.l_forward = result.loss->scalar();
    double acc = 0.0;
    for (const auto& s : result.trace.steps) acc += s.p_gen;
    report.p_gen_mean = acc / static_cast<double>(result.trace.steps.size());
    store.zero_grad();
    backward(result.loss);
    report.grad_norm_forward = clip_global_norm(store, config.clip_norm);
    adam.step(store);

    if (!config.switch_enabled) return report;

    auto decoded = greedy_decode(model, fwd, example.source, config.max_decode_length);
    if (decoded.indices.empty()) {
        report.phase2_skipped = true;
        return report;
    }
    auto bwd = assign_roles(model, Phase::Backward);
    auto recon = run_teacher_forced(model, bwd, decoded.indices, example.source);
    report.l_backward = recon.loss->scalar();
    store.zero_grad();
    backward(recon.loss);
    report.grad_norm_backward = clip_global_norm(store, config.clip_norm);
    adam.step(store);
    return report;
}

/// Batched variant: gradients accumulate over the chunk (each example's
/// loss scaled by 1/chunk) before a single optimizer step per phase.
inline IterationReport switching_batch_iteration(const std::vector<EncodedExample>& chunk,
                                                 ModelParams& model, ParameterStore& store,
                                                 AdamState& adam, const TrainConfig& config) {
    if (chunk.empty()) throw ContractError("switching_batch_iteration: empty chunk");
    if (chunk.size() == 1) return switching_iteration(chunk[0], model, store, adam, config);
    model.config.copy_enabled = config.copy_enabled;
    model.config.shift_enabled = config.shift_enabled;
    IterationReport report;
    double inv = 1.0 / static_cast<double>(chunk.size());

    auto fwd = assign_roles(model, Phase::Forward);
    store.zero_grad();
    double pgen_acc = 0.0;
    for (const auto& ex : chunk) {
        auto result = run_teacher_forced(model, fwd, ex.source, ex.target);
        report.l_forward += result.loss->scalar() * inv;
        double acc = 0.0;
        for (const auto& s : result.trace.steps) acc += s.p_gen;
        pgen_acc += inv * acc / static_cast<double>(result.trace.steps.size());
        backward(scale(result.loss, inv));
    }
    report.p_gen_mean = pgen_acc;
    report.grad_norm_forward = clip_global_norm(store, config.clip_norm);
    adam.step(store);
    if (!config.switch_enabled) return report;

    std::vector<EncodedExample> recon;
    for (const auto& ex : chunk) {
        auto decoded = greedy_decode(model, fwd, ex.source, config.max_decode_length);
        if (decoded.indices.empty()) {
            report.phase2_skipped = true;
            continue;
        }
        recon.push_back({decoded.indices, ex.source});
    }
    if (recon.empty()) return report;
    auto bwd = assign_roles(model, Phase::Backward);
    store.zero_grad();
    double rinv = 1.0 / static_cast<double>(recon.size());
    double l_bwd = 0.0;
    for (const auto& ex : recon) {
        auto result = run_teacher_forced(model, bwd, ex.source, ex.target);
        l_bwd += result.loss->scalar() * rinv;
        backward(scale(result.loss, rinv));
    }
    report.l_backward = l_bwd;
    report.grad_norm_backward = clip_global_norm(store, config.clip_norm);
    adam.step(store);
    return report;
}

/// Frozen copy of every parameter's values, keyed by name.
struct ParamSnapshot {
    std::vector<std::pair<std::string, std::vector<double>>> values;

    static ParamSnapshot capture(const ParameterStore& store) {
        ParamSnapshot s;
        for (const auto& [name, t] : store.items()) s.values.emplace_back(name, t->value);
        return s;
    }

    void restore(ParameterStore& store) const {
        for (const auto& [name, v] : values) {
            auto t = store.get(name);
            if (t->size() != v.size())
                throw ContractError("snapshot/parameter shape mismatch for " + name);
            t->value = v;
        }
    }
};

/// One line of the training log.
struct TrainLogRecord {
    std::size_t iteration = 0;
    std::size_t epoch = 0;
    double l_forward = 0.0;
    std::optional<double> l_backward;
    double validation_bleu = 0.0;
    double p_gen_mean = 1.0;
};

struct TrainResult {
    ParamSnapshot best;           // parameters with the best validation BLEU
    double best_bleu = 0.0;
    std::size_t best_iteration = 0;
    std::vector<TrainLogRecord> log;
    long long optimizer_steps = 0;
};

namespace detail {

inline std::vector<EncodedExample> encode_training_split(const Dataset& ds) {
    std::vector<EncodedExample> out;
    for (const auto& inst : ds.instances) {
        if (inst.split != Split::Train) continue;
        auto src = encode_text(inst.mr.serialize());
        for (const auto& ref : inst.references) out.push_back({src, encode_text(ref)});
    }
    return out;
}

}  // namespace detail

/// Decode every validation MR and score BLEU against the grouped
/// references.
inline double validation_bleu(const ModelParams& model, const Dataset& ds,
                              std::size_t max_instances, std::size_t max_decode_length) {
    auto roles = assign_roles(model, Phase::Forward);
    std::vector<std::string> hyps;
    std::vector<std::vector<std::string>> refs;
    for (const auto& inst : ds.instances) {
        if (inst.split != Split::Validation) continue;
        if (max_instances && hyps.size() >= max_instances) break;
        auto decoded = greedy_decode(model, roles, encode_text(inst.mr.serialize()),
                                     max_decode_length);
        hyps.push_back(decoded.text);
        refs.push_back(inst.references);
    }
    if (hyps.empty()) throw ConfigError("validation split is empty");
    return bleu(tokenize_corpus(hyps, refs));
}

/// Train until `patience` validation evaluations pass without a BLEU
/// improvement (or max_epochs ends). Returns the best checkpoint seen,
/// never the last.
inline TrainResult train(const Dataset& dataset, ModelParams& model, ParameterStore& store,
                         const TrainConfig& config, AdamState* external_adam = nullptr) {
    config.validate();
    auto examples = detail::encode_training_split(dataset);
    if (examples.empty()) throw ConfigError("training split is empty");
    bool has_validation = false;
    for (const auto& inst : dataset.instances)
        if (inst.split == Split::Validation) { has_validation = true; break; }
    if (!has_validation) throw ConfigError("validation split is empty");

    model.config.copy_enabled = config.copy_enabled;
    model.config.shift_enabled = config.shift_enabled;

    AdamConfig acfg;
    acfg.learning_rate = config.learning_rate;
    AdamState local_adam(acfg);
    AdamState& adam = external_adam ? *external_adam : local_adam;

    TrainResult result;
    result.best = ParamSnapshot::capture(store);
    result.best_bleu = -1.0;
    std::size_t evals_since_best = 0;
    std::size_t iteration = 0;
    double window_fwd = 0.0, window_pgen = 0.0;
    double window_bwd = 0.0;
    std::size_t window_n = 0, window_bwd_n = 0;
    bool stop = false;

    for (std::size_t epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
        // reshuffle each epoch, reseeded from the run seed
        std::vector<std::size_t> order(examples.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ULL * (epoch + 1));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t k = 0; k < order.size() && !stop; k += config.batch_size) {
            std::vector<EncodedExample> chunk;
            for (std::size_t b = k; b < std::min(k + config.batch_size, order.size()); ++b)
                chunk.push_back(examples[order[b]]);
            auto report = switching_batch_iteration(chunk, model, store, adam, config);
            ++iteration;
            window_fwd += report.l_forward;
            window_pgen += report.p_gen_mean;
            ++window_n;
            if (report.l_backward) {
                window_bwd += *report.l_backward;
                ++window_bwd_n;
            }
            if (iteration % config.validation_interval == 0) {
                double bleu_score = validation_bleu(model, dataset,
                                                    config.validation_max_instances,
                                                    config.max_decode_length);
                TrainLogRecord rec;
                rec.iteration = iteration;
                rec.epoch = epoch;
                rec.l_forward = window_fwd / static_cast<double>(window_n);
                if (window_bwd_n)
                    rec.l_backward = window_bwd / static_cast<double>(window_bwd_n);
                rec.validation_bleu = bleu_score;
                rec.p_gen_mean = window_pgen / static_cast<double>(window_n);
                result.log.push_back(rec);
                window_fwd = window_pgen = window_bwd = 0.0;
                window_n = window_bwd_n = 0;
                if (bleu_score > result.best_bleu) {
                    result.best_bleu = bleu_score;
                    result.best_iteration = iteration;
                    result.best = ParamSnapshot::capture(store);
                    evals_since_best = 0;
                } else {
                    ++evals_since_best;
                    if (evals_since_best >= config.patience) stop = true;
                }
            }
        }
    }
    result.optimizer_steps = adam.step_count();
    return result;
}

// ---------------------------------------------------------------------------
// Ablation suite

struct AblationRow {
    std::string variant;  // EDA, EDA_C, EDA_S, EDA_CS
    MetricReport metrics;
};

inline void apply_variant(TrainConfig& cfg, const std::string& variant) {
    if (variant == "eda") { cfg.copy_enabled = false; cfg.switch_enabled = false; }
    else if (variant == "eda_c") { cfg.copy_enabled = true; cfg.switch_enabled = false; }
    else if (variant == "eda_s") { cfg.copy_enabled = false; cfg.switch_enabled = true; }
    else if (variant == "eda_cs") { cfg.copy_enabled = true; cfg.switch_enabled = true; }
    else throw ConfigError("unknown variant: " + variant);
}

/// Train the four ablation variants with a shared seed and budget; score
/// each on the test split with all five metrics.
inline std::vector<AblationRow> ablation_suite(const Dataset& dataset,
                                               const ModelConfig& model_config,
                                               const TrainConfig& base_config) {
    static const char* variants[] = {"eda", "eda_c", "eda_s", "eda_cs"};
    static const char* labels[] = {"EDA", "EDA_C", "EDA_S", "EDA_CS"};
    std::vector<AblationRow> rows;
    for (int v = 0; v < 4; ++v) {
        TrainConfig cfg = base_config;
        apply_variant(cfg, variants[v]);
        ParameterStore store;
        std::mt19937_64 rng(cfg.seed);
        ModelParams model = make_model(store, model_config, rng);
        auto result = train(dataset, model, store, cfg);
        result.best.restore(store);

        auto roles = assign_roles(model, Phase::Forward);
        std::vector<std::string> hyps;
        std::vector<std::vector<std::string>> refs;
        for (const auto& inst : dataset.instances) {
            if (inst.split != Split::Test) continue;
            auto decoded = greedy_decode(model, roles, encode_text(inst.mr.serialize()),
                                         cfg.max_decode_length);
            hyps.push_back(decoded.text);
            refs.push_back(inst.references);
        }
        if (hyps.empty()) throw ConfigError("test split is empty");
        AblationRow row;
        row.variant = labels[v];
        row.metrics = score_corpus(tokenize_corpus(hyps, refs));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace chargen
