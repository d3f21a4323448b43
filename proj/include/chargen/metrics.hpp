// chargen: character-level data-to-text generation toolkit
//
// metrics.hpp - multi-reference corpus scoring: BLEU, NIST, reduced
// METEOR (exact + stem stages, no synonym resources), ROUGE-L and CIDEr,
// all over one shared tokenization.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "chargen/tensor.hpp"

namespace chargen {

struct AlignmentError : std::runtime_error {
    std::size_t instance;
    AlignmentError(const std::string& msg, std::size_t idx)
        : std::runtime_error(msg + " at instance " + std::to_string(idx)), instance(idx) {}
};

// ---------------------------------------------------------------------------
// Tokenization

/// Canonical metric tokenization, shared by all five metrics: lowercase,
/// punctuation split into standalone tokens, whitespace-separated.
/// (Model I/O stays case-sensitive; this applies to scoring only.)
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
            tokens.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    flush();
    return tokens;
}

struct TokenizedPair {
    std::vector<std::string> hypothesis;
    std::vector<std::vector<std::string>> references;
};

inline std::vector<TokenizedPair> tokenize_corpus(
    const std::vector<std::string>& hypotheses,
    const std::vector<std::vector<std::string>>& references) {
    if (hypotheses.size() != references.size())
        throw AlignmentError("hypothesis/reference group count mismatch",
                             std::min(hypotheses.size(), references.size()));
    std::vector<TokenizedPair> corpus(hypotheses.size());
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        if (references[i].empty()) throw AlignmentError("empty reference group", i);
        corpus[i].hypothesis = tokenize(hypotheses[i]);
        for (const auto& r : references[i]) corpus[i].references.push_back(tokenize(r));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// n-gram helpers

namespace detail {

using Counts = std::map<std::vector<std::string>, std::size_t>;

inline Counts ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
    Counts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BLEU

/// Corpus BLEU, n = 1..4, uniform weights, pooled clipped counts, closest
/// reference length for the brevity penalty, no smoothing.
inline double bleu(const std::vector<TokenizedPair>& corpus) {
    if (corpus.empty()) throw ContractError("bleu: empty corpus");
    constexpr std::size_t kMaxN = 4;
    std::size_t matched[kMaxN] = {0}, total[kMaxN] = {0};
    std::size_t hyp_len = 0, ref_len = 0;
    for (const auto& pair : corpus) {
        hyp_len += pair.hypothesis.size();
        // closest reference length; ties go to the shorter
        std::size_t best = pair.references[0].size();
        for (const auto& r : pair.references) {
            auto d = [&](std::size_t l) {
                return l > pair.hypothesis.size() ? l - pair.hypothesis.size()
                                                  : pair.hypothesis.size() - l;
            };
            if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best))
                best = r.size();
        }
        ref_len += best;
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            auto hyp_counts = detail::ngram_counts(pair.hypothesis, n);
            detail::Counts max_ref;
            for (const auto& r : pair.references)
                for (const auto& [g, c] : detail::ngram_counts(r, n))
                    max_ref[g] = std::max(max_ref[g], c);
            for (const auto& [g, c] : hyp_counts) {
                total[n - 1] += c;
                auto it = max_ref.find(g);
                if (it != max_ref.end()) matched[n - 1] += std::min(c, it->second);
            }
        }
    }
    double log_prec = 0.0;
    for (std::size_t n = 0; n < kMaxN; ++n) {
        if (matched[n] == 0 || total[n] == 0) return 0.0;
        log_prec += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    }
    double bp = 1.0;
    if (hyp_len < ref_len && hyp_len > 0)
        bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    if (hyp_len == 0) return 0.0;
    return bp * std::exp(log_prec / kMaxN);
}

// ---------------------------------------------------------------------------
// NIST

/// Information-weighted n-gram co-occurrence, n = 1..5, with the NIST
/// brevity factor. Information weights come from the reference corpus:
///   Info(w1..wn) = log2(count(w1..wn-1) / count(w1..wn))
/// with the unigram numerator being the total reference word count.
inline double nist(const std::vector<TokenizedPair>& corpus) {
    if (corpus.empty()) throw ContractError("nist: empty corpus");
    constexpr std::size_t kMaxN = 5;
    // reference-corpus n-gram counts for the info weights
    detail::Counts ref_counts[kMaxN + 1];
    double total_ref_words = 0.0;
    for (const auto& pair : corpus)
        for (const auto& r : pair.references) {
            total_ref_words += static_cast<double>(r.size());
            for (std::size_t n = 1; n <= kMaxN; ++n)
                for (const auto& [g, c] : detail::ngram_counts(r, n)) ref_counts[n][g] += c;
        }
    auto info = [&](const std::vector<std::string>& g) -> double {
        std::size_t n = g.size();
        auto it = ref_counts[n].find(g);
        if (it == ref_counts[n].end()) return 0.0;
        double denom = static_cast<double>(it->second);
        double numer;
        if (n == 1) {
            numer = total_ref_words;
        } else {
            std::vector<std::string> prefix(g.begin(), g.end() - 1);
            numer = static_cast<double>(ref_counts[n - 1][prefix]);
        }
        return std::log2(numer / denom);
    };

    double numerator[kMaxN] = {0.0}, denominator[kMaxN] = {0.0};
    std::size_t hyp_len = 0;
    double avg_ref_len = 0.0;
    for (const auto& pair : corpus) {
        hyp_len += pair.hypothesis.size();
        double mean = 0.0;
        for (const auto& r : pair.references) mean += static_cast<double>(r.size());
        avg_ref_len += mean / static_cast<double>(pair.references.size());
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            auto hyp_counts = detail::ngram_counts(pair.hypothesis, n);
            detail::Counts max_ref;
            for (const auto& r : pair.references)
                for (const auto& [g, c] : detail::ngram_counts(r, n))
                    max_ref[g] = std::max(max_ref[g], c);
            for (const auto& [g, c] : hyp_counts) {
                denominator[n - 1] += static_cast<double>(c);
                auto it = max_ref.find(g);
                if (it != max_ref.end())
                    numerator[n - 1] +=
                        static_cast<double>(std::min(c, it->second)) * info(g);
            }
        }
    }
    double score = 0.0;
    for (std::size_t n = 0; n < kMaxN; ++n)
        if (denominator[n] > 0.0) score += numerator[n] / denominator[n];
    // brevity factor: 0.5 when the system output is 2/3 the reference length
    double beta = std::log(0.5) / std::pow(std::log(2.0 / 3.0), 2);
    double ratio = avg_ref_len > 0.0 ? static_cast<double>(hyp_len) / avg_ref_len : 0.0;
    double bf = std::exp(beta * std::pow(std::log(std::min(ratio, 1.0)), 2));
    if (ratio <= 0.0) bf = 0.0;
    return score * bf;
}

// ---------------------------------------------------------------------------
// Porter stemmer (for the METEOR stem stage)

namespace detail {

/// Classic Porter (1980) stemming algorithm, steps 1-5.
class PorterStemmer {
public:
    static std::string stem(const std::string& word) {
        if (word.size() <= 2) return word;
        std::string b = word;
        step1a(b); step1b(b); step1c(b);
        step2(b); step3(b); step4(b); step5(b);
        return b;
    }

private:
    static bool is_vowel(const std::string& b, std::size_t i) {
        char c = b[i];
        if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') return true;
        if (c == 'y') return i > 0 && !is_vowel(b, i - 1);
        return false;
    }

    // measure of the stem b[0..end): number of VC sequences
    static int measure(const std::string& b, std::size_t end) {
        int m = 0;
        std::size_t i = 0;
        while (i < end && !is_vowel(b, i)) ++i;
        while (i < end) {
            while (i < end && is_vowel(b, i)) ++i;
            if (i == end) break;
            ++m;
            while (i < end && !is_vowel(b, i)) ++i;
        }
        return m;
    }

    static bool has_vowel(const std::string& b, std::size_t end) {
        for (std::size_t i = 0; i < end; ++i)
            if (is_vowel(b, i)) return true;
        return false;
    }

    static bool double_consonant(const std::string& b) {
        std::size_t n = b.size();
        return n >= 2 && b[n - 1] == b[n - 2] && !is_vowel(b, n - 1);
    }

    // consonant-vowel-consonant where the final consonant is not w, x or y
    static bool cvc(const std::string& b) {
        std::size_t n = b.size();
        if (n < 3) return false;
        if (is_vowel(b, n - 1) || !is_vowel(b, n - 2) || is_vowel(b, n - 3)) return false;
        char c = b[n - 1];
        return c != 'w' && c != 'x' && c != 'y';
    }

    static bool ends_with(const std::string& b, const char* suffix) {
        std::size_t n = std::strlen(suffix);
        return b.size() >= n && b.compare(b.size() - n, n, suffix) == 0;
    }

    static void replace_suffix(std::string& b, std::size_t suffix_len, const char* repl) {
        b.resize(b.size() - suffix_len);
        b += repl;
    }

    static void step1a(std::string& b) {
        if (ends_with(b, "sses")) replace_suffix(b, 4, "ss");
        else if (ends_with(b, "ies")) replace_suffix(b, 3, "i");
        else if (ends_with(b, "ss")) {}
        else if (ends_with(b, "s")) b.pop_back();
    }

    static void step1b(std::string& b) {
        bool cleanup = false;
        if (ends_with(b, "eed")) {
            if (measure(b, b.size() - 3) > 0) b.pop_back();
        } else if (ends_with(b, "ed") && has_vowel(b, b.size() - 2)) {
            b.resize(b.size() - 2);
            cleanup = true;
        } else if (ends_with(b, "ing") && has_vowel(b, b.size() - 3)) {
            b.resize(b.size() - 3);
            cleanup = true;
        }
        if (cleanup) {
            if (ends_with(b, "at") || ends_with(b, "bl") || ends_with(b, "iz")) b += "e";
            else if (double_consonant(b) && !ends_with(b, "l") && !ends_with(b, "s") &&
                     !ends_with(b, "z"))
                b.pop_back();
            else if (measure(b, b.size()) == 1 && cvc(b)) b += "e";
        }
    }

    static void step1c(std::string& b) {
        if (ends_with(b, "y") && has_vowel(b, b.size() - 1)) b.back() = 'i';
    }

    static void rule(std::string& b, const char* suffix, const char* repl, int min_m) {
        if (ends_with(b, suffix)) {
            std::size_t n = std::strlen(suffix);
            if (measure(b, b.size() - n) > min_m) replace_suffix(b, n, repl);
        }
    }

    static void step2(std::string& b) {
        static const std::pair<const char*, const char*> rules[] = {
            {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
            {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
            {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
            {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
            {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"}, {"biliti", "ble"},
        };
        for (const auto& [s, r] : rules)
            if (ends_with(b, s)) { rule(b, s, r, 0); return; }
    }

    static void step3(std::string& b) {
        static const std::pair<const char*, const char*> rules[] = {
            {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
            {"ical", "ic"},  {"ful", ""},   {"ness", ""},
        };
        for (const auto& [s, r] : rules)
            if (ends_with(b, s)) { rule(b, s, r, 0); return; }
    }

    static void step4(std::string& b) {
        static const char* suffixes[] = {
            "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
            "ment", "ent", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
        };
        for (const char* s : suffixes) {
            if (!ends_with(b, s)) continue;
            std::size_t n = std::strlen(s);
            if (measure(b, b.size() - n) > 1) b.resize(b.size() - n);
            return;
        }
        if (ends_with(b, "ion")) {
            std::size_t end = b.size() - 3;
            if (end > 0 && (b[end - 1] == 's' || b[end - 1] == 't') && measure(b, end) > 1)
                b.resize(end);
        }
    }

    static void step5(std::string& b) {
        if (ends_with(b, "e")) {
            int m = measure(b, b.size() - 1);
            std::string without = b.substr(0, b.size() - 1);
            if (m > 1 || (m == 1 && !cvc(without))) b.pop_back();
        }
        if (ends_with(b, "ll") && measure(b, b.size()) > 1) b.pop_back();
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// METEOR (reduced: exact + stem stages only)

namespace detail {

struct MeteorStats {
    double matches = 0, hyp_len = 0, ref_len = 0, chunks = 0;
};

/// Align hypothesis to one reference: exact matches first, then stem
/// matches on the remainder; chunks counted over the resulting mapping.
inline MeteorStats meteor_align(const std::vector<std::string>& hyp,
                                const std::vector<std::string>& ref) {
    MeteorStats st;
    st.hyp_len = static_cast<double>(hyp.size());
    st.ref_len = static_cast<double>(ref.size());
    std::vector<int> hyp_to_ref(hyp.size(), -1);
    std::vector<bool> ref_used(ref.size(), false);
    for (std::size_t i = 0; i < hyp.size(); ++i)
        for (std::size_t j = 0; j < ref.size(); ++j)
            if (!ref_used[j] && hyp[i] == ref[j]) {
                hyp_to_ref[i] = static_cast<int>(j);
                ref_used[j] = true;
                break;
            }
    std::vector<std::string> hyp_stems(hyp.size()), ref_stems(ref.size());
    for (std::size_t i = 0; i < hyp.size(); ++i) hyp_stems[i] = PorterStemmer::stem(hyp[i]);
    for (std::size_t j = 0; j < ref.size(); ++j) ref_stems[j] = PorterStemmer::stem(ref[j]);
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        if (hyp_to_ref[i] >= 0) continue;
        for (std::size_t j = 0; j < ref.size(); ++j)
            if (!ref_used[j] && hyp_stems[i] == ref_stems[j]) {
                hyp_to_ref[i] = static_cast<int>(j);
                ref_used[j] = true;
                break;
            }
    }
    int prev = -2;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        if (hyp_to_ref[i] < 0) {
            prev = -2;
            continue;
        }
        st.matches += 1.0;
        if (hyp_to_ref[i] != prev + 1) st.chunks += 1.0;
        prev = hyp_to_ref[i];
    }
    return st;
}

inline double meteor_score(const MeteorStats& st, double alpha, double beta, double gamma) {
    if (st.matches == 0.0 || st.hyp_len == 0.0 || st.ref_len == 0.0) return 0.0;
    double p = st.matches / st.hyp_len;
    double r = st.matches / st.ref_len;
    double f = p * r / (alpha * p + (1.0 - alpha) * r);
    double penalty = gamma * std::pow(st.chunks / st.matches, beta);
    return f * (1.0 - penalty);
}

}  // namespace detail

/// Reduced METEOR: per-instance best reference, corpus score over the
/// summed alignment statistics. alpha=0.9, beta=3, gamma=0.5.
inline double meteor_reduced(const std::vector<TokenizedPair>& corpus) {
    if (corpus.empty()) throw ContractError("meteor_reduced: empty corpus");
    constexpr double kAlpha = 0.9, kBeta = 3.0, kGamma = 0.5;
    detail::MeteorStats total;
    for (const auto& pair : corpus) {
        detail::MeteorStats best;
        double best_score = -1.0;
        for (const auto& r : pair.references) {
            auto st = detail::meteor_align(pair.hypothesis, r);
            double s = detail::meteor_score(st, kAlpha, kBeta, kGamma);
            if (s > best_score) {
                best_score = s;
                best = st;
            }
        }
        total.matches += best.matches;
        total.hyp_len += best.hyp_len;
        total.ref_len += best.ref_len;
        total.chunks += best.chunks;
    }
    return detail::meteor_score(total, kAlpha, kBeta, kGamma);
}

// ---------------------------------------------------------------------------
// ROUGE-L

namespace detail {

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace detail

/// LCS F-score with beta=1.2, best reference per instance, mean over
/// instances.
inline double rouge_l(const std::vector<TokenizedPair>& corpus) {
    if (corpus.empty()) throw ContractError("rouge_l: empty corpus");
    constexpr double kBetaSq = 1.2 * 1.2;
    double total = 0.0;
    for (const auto& pair : corpus) {
        double best = 0.0;
        for (const auto& r : pair.references) {
            if (pair.hypothesis.empty() || r.empty()) continue;
            double lcs = static_cast<double>(detail::lcs_length(pair.hypothesis, r));
            if (lcs == 0.0) continue;
            double prec = lcs / static_cast<double>(pair.hypothesis.size());
            double rec = lcs / static_cast<double>(r.size());
            double f = (1.0 + kBetaSq) * rec * prec / (rec + kBetaSq * prec);
            best = std::max(best, f);
        }
        total += best;
    }
    return total / static_cast<double>(corpus.size());
}

// ---------------------------------------------------------------------------
// CIDEr

/// Plain CIDEr: tf-idf n-gram cosine similarity, n = 1..4, averaged over
/// n, mean cosine over references, scaled by 10, mean over instances.
/// idf comes from the reference corpus; a zero vector has cosine 0.
inline double cider(const std::vector<TokenizedPair>& corpus) {
    if (corpus.empty()) throw ContractError("cider: empty corpus");
    constexpr std::size_t kMaxN = 4;
    double N = static_cast<double>(corpus.size());
    // document frequency: number of instances whose reference set contains g
    detail::Counts df[kMaxN + 1];
    for (const auto& pair : corpus)
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            detail::Counts seen;
            for (const auto& r : pair.references)
                for (const auto& [g, c] : detail::ngram_counts(r, n)) seen[g] = 1;
            for (const auto& [g, c] : seen) df[n][g] += 1;
        }
    auto idf = [&](std::size_t n, const std::vector<std::string>& g) {
        auto it = df[n].find(g);
        double d = (it == df[n].end()) ? 1.0 : static_cast<double>(std::max<std::size_t>(it->second, 1));
        return std::log(N) - std::log(d);
    };
    auto tfidf = [&](const std::vector<std::string>& tokens, std::size_t n) {
        std::map<std::vector<std::string>, double> vec;
        for (const auto& [g, c] : detail::ngram_counts(tokens, n))
            vec[g] = static_cast<double>(c) * idf(n, g);
        return vec;
    };
    auto cosine = [](const std::map<std::vector<std::string>, double>& a,
                     const std::map<std::vector<std::string>, double>& b) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (const auto& [g, v] : a) {
            na += v * v;
            auto it = b.find(g);
            if (it != b.end()) dot += v * it->second;
        }
        for (const auto& [g, v] : b) nb += v * v;
        if (na == 0.0 || nb == 0.0) return 0.0;
        return dot / (std::sqrt(na) * std::sqrt(nb));
    };

    double total = 0.0;
    for (const auto& pair : corpus) {
        double inst = 0.0;
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            auto hyp_vec = tfidf(pair.hypothesis, n);
            double mean_cos = 0.0;
            for (const auto& r : pair.references) mean_cos += cosine(hyp_vec, tfidf(r, n));
            inst += mean_cos / static_cast<double>(pair.references.size());
        }
        total += 10.0 * inst / static_cast<double>(kMaxN);
    }
    return total / N;
}

// ---------------------------------------------------------------------------
// Combined report and file I/O

struct MetricReport {
    double bleu = 0, nist = 0, meteor = 0, rouge_l = 0, cider = 0;
};

inline MetricReport score_corpus(const std::vector<TokenizedPair>& corpus) {
    MetricReport r;
    r.bleu = bleu(corpus);
    r.nist = nist(corpus);
    r.meteor = meteor_reduced(corpus);
    r.rouge_l = rouge_l(corpus);
    r.cider = cider(corpus);
    return r;
}

/// Hypotheses: one utterance per line. References: groups separated by
/// blank lines, one reference per line.
inline std::vector<std::string> read_hypotheses_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open hypotheses file: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(line);
    }
    return out;
}

inline std::vector<std::vector<std::string>> read_references_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open references file: " + path);
    std::vector<std::vector<std::string>> groups;
    std::vector<std::string> cur;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (!cur.empty()) groups.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(line);
        }
    }
    if (!cur.empty()) groups.push_back(std::move(cur));
    return groups;
}

inline MetricReport score_all(const std::string& hypotheses_path,
                              const std::string& references_path) {
    auto hyps = read_hypotheses_file(hypotheses_path);
    auto refs = read_references_file(references_path);
    return score_corpus(tokenize_corpus(hyps, refs));
}

}  // namespace chargen
