// chargen: character-level data-to-text generation toolkit
//
// data.hpp - meaning-representation parsing, ASCII alphabet encoding,
// dataset loading with multi-reference grouping, and the augmented-corpus
// builder that resamples copy-susceptible slot values from disjoint pools.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "chargen/tensor.hpp"

namespace chargen {

struct ParseError : std::runtime_error {
    std::size_t offset;
    ParseError(const std::string& msg, std::size_t off)
        : std::runtime_error(msg + " at byte " + std::to_string(off)), offset(off) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Alphabet

/// Printable ASCII (32..126) plus reserved start / end / unknown symbols.
/// Reserved symbols occupy the first three indices so they never collide
/// with printable characters.
class Alphabet {
public:
    static constexpr std::size_t kStart = 0;
    static constexpr std::size_t kEnd = 1;
    static constexpr std::size_t kUnknown = 2;
    static constexpr std::size_t kPrintableBase = 3;

    static constexpr std::size_t size() { return kPrintableBase + (126 - 32 + 1); }  // 98

    static bool admits(char c) {
        unsigned char u = static_cast<unsigned char>(c);
        return u >= 32 && u <= 126;
    }

    static std::size_t index_of(char c) {
        if (!admits(c)) return kUnknown;
        return kPrintableBase + static_cast<unsigned char>(c) - 32;
    }

    /// Reserved symbols decode to an empty string.
    static std::string decode(std::size_t index) {
        if (index < kPrintableBase) return "";
        if (index >= size()) throw ContractError("Alphabet::decode: index out of range");
        return std::string(1, static_cast<char>(index - kPrintableBase + 32));
    }
};

/// Best-effort mapping of common accented Latin characters to ASCII.
/// Input is UTF-8; anything unmapped becomes the unknown symbol.
inline std::string transliterate(const std::string& text) {
    static const std::unordered_map<std::string, std::string> table = {
        {"à", "a"}, {"á", "a"}, {"â", "a"}, {"ã", "a"}, {"ä", "a"}, {"å", "a"},
        {"è", "e"}, {"é", "e"}, {"ê", "e"}, {"ë", "e"},
        {"ì", "i"}, {"í", "i"}, {"î", "i"}, {"ï", "i"},
        {"ò", "o"}, {"ó", "o"}, {"ô", "o"}, {"õ", "o"}, {"ö", "o"}, {"ø", "o"},
        {"ù", "u"}, {"ú", "u"}, {"û", "u"}, {"ü", "u"},
        {"ç", "c"}, {"ñ", "n"}, {"ý", "y"}, {"ÿ", "y"},
        {"À", "A"}, {"Á", "A"}, {"Â", "A"}, {"Ã", "A"}, {"Ä", "A"}, {"Å", "A"},
        {"È", "E"}, {"É", "E"}, {"Ê", "E"}, {"Ë", "E"},
        {"Ì", "I"}, {"Í", "I"}, {"Î", "I"}, {"Ï", "I"},
        {"Ò", "O"}, {"Ó", "O"}, {"Ô", "O"}, {"Õ", "O"}, {"Ö", "O"}, {"Ø", "O"},
        {"Ù", "U"}, {"Ú", "U"}, {"Û", "U"}, {"Ü", "U"},
        {"Ç", "C"}, {"Ñ", "N"}, {"Ý", "Y"},
        {"œ", "oe"}, {"Œ", "OE"}, {"æ", "ae"}, {"Æ", "AE"}, {"ß", "ss"},
        {"’", "'"}, {"‘", "'"}, {"“", "\""}, {"”", "\""},
        {"–", "-"}, {"—", "-"}, {"…", "..."}, {" ", " "},
    };
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char u = static_cast<unsigned char>(text[i]);
        if (u < 0x80) {
            out.push_back(text[i]);
            ++i;
            continue;
        }
        std::size_t len = (u >= 0xF0) ? 4 : (u >= 0xE0) ? 3 : 2;
        len = std::min(len, text.size() - i);
        auto it = table.find(text.substr(i, len));
        if (it != table.end()) out += it->second;
        else out.push_back('\x01');  // placeholder mapped to the unknown symbol
        i += len;
    }
    return out;
}

/// Total function: every character maps to an index, unknowns included.
/// Start/end symbols are the caller's responsibility.
inline std::vector<std::size_t> encode_text(const std::string& text) {
    std::string ascii = transliterate(text);
    std::vector<std::size_t> out;
    out.reserve(ascii.size());
    for (char c : ascii) out.push_back(Alphabet::index_of(c));
    return out;
}

inline std::string decode_indices(const std::vector<std::size_t>& indices) {
    std::string out;
    for (std::size_t i : indices) out += Alphabet::decode(i);
    return out;
}

// ---------------------------------------------------------------------------
// Meaning representations

struct Slot {
    std::string key;
    std::string value;
    bool operator==(const Slot&) const = default;
};

/// Ordered list of slot-value pairs; canonical form `k1[v1], k2[v2]`.
struct MeaningRepresentation {
    std::vector<Slot> slots;

    std::string serialize() const {
        std::string out;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (i) out += ", ";
            out += slots[i].key + "[" + slots[i].value + "]";
        }
        return out;
    }

    std::optional<std::string> value_of(const std::string& key) const {
        for (const auto& s : slots)
            if (s.key == key) return s.value;
        return std::nullopt;
    }

    bool operator==(const MeaningRepresentation&) const = default;
};

/// Parse the comma-separated `key[value]` grammar. Values may contain any
/// character except unbalanced square brackets; duplicate keys are kept
/// in order.
inline MeaningRepresentation parse_mr(const std::string& text) {
    MeaningRepresentation mr;
    std::size_t i = 0;
    auto skip_ws = [&] { while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i; };
    skip_ws();
    while (i < text.size()) {
        std::size_t key_begin = i;
        while (i < text.size() && text[i] != '[') {
            if (text[i] == ']') throw ParseError("unbalanced ']'", i);
            ++i;
        }
        if (i == text.size()) throw ParseError("expected '['", i);
        std::string key = text.substr(key_begin, i - key_begin);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        if (key.empty()) throw ParseError("empty slot key", key_begin);
        ++i;  // consume '['
        std::size_t val_begin = i;
        int depth = 1;
        while (i < text.size() && depth > 0) {
            if (text[i] == '[') ++depth;
            else if (text[i] == ']') --depth;
            ++i;
        }
        if (depth != 0) throw ParseError("unbalanced '['", val_begin - 1);
        mr.slots.push_back({key, text.substr(val_begin, i - val_begin - 1)});
        skip_ws();
        if (i < text.size()) {
            if (text[i] != ',') throw ParseError("expected ','", i);
            ++i;
            skip_ws();
            if (i == text.size()) throw ParseError("trailing ','", i);
        }
    }
    if (mr.slots.empty()) throw ParseError("empty meaning representation", 0);
    return mr;
}

// ---------------------------------------------------------------------------
// Datasets

enum class Split { Train, Validation, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        default: return "test";
    }
}

struct DatasetInstance {
    MeaningRepresentation mr;
    std::vector<std::string> references;
    Split split = Split::Train;
};

struct Dataset {
    std::vector<DatasetInstance> instances;

    std::vector<const DatasetInstance*> split(Split s) const {
        std::vector<const DatasetInstance*> out;
        for (const auto& inst : instances)
            if (inst.split == s) out.push_back(&inst);
        return out;
    }
};

namespace detail {

/// Minimal RFC-4180 CSV reader: quoted fields, doubled quotes, multi-line
/// fields inside quotes.
inline std::vector<std::vector<std::string>> read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    char c;
    bool any = false;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') { field.push_back('"'); in.get(); }
                else quoted = false;
            } else field.push_back(c);
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (any && (!field.empty() || !row.empty())) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void group_references(std::vector<DatasetInstance>& out,
                             const std::vector<std::pair<std::string, std::string>>& pairs,
                             Split split, bool group) {
    if (!group) {
        for (const auto& [mr_text, ref] : pairs)
            out.push_back({parse_mr(mr_text), {ref}, split});
        return;
    }
    // group all references sharing one MR string, preserving first-seen order
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& [mr_text, ref] : pairs) {
        auto [it, inserted] = groups.try_emplace(mr_text);
        if (inserted) order.push_back(mr_text);
        it->second.push_back(ref);
    }
    for (const auto& key : order)
        out.push_back({parse_mr(key), groups[key], split});
}

}  // namespace detail

/// Load one split of an E2E-style CSV: header row, two quoted columns
/// `mr,ref`. Validation/test references are grouped per identical MR.
inline std::vector<DatasetInstance> load_e2e_csv(const std::string& path, Split split) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset file: " + path);
    auto rows = detail::read_csv(in);
    if (rows.empty()) throw ConfigError("empty dataset file: " + path);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t r = 1; r < rows.size(); ++r) {  // skip header
        if (rows[r].size() == 1 && rows[r][0].empty()) continue;
        if (rows[r].size() < 2)
            throw ConfigError("malformed row " + std::to_string(r + 1) + " in " + path);
        pairs.emplace_back(rows[r][0], rows[r][1]);
    }
    std::vector<DatasetInstance> out;
    detail::group_references(out, pairs, split, split != Split::Train);
    return out;
}

/// Load one split of the hotel/restaurant dialogue-act JSON format:
/// an array of [dialogue_act, reference, ...] entries where the act looks
/// like `inform(name='X';area='Y')`. Non-inform acts are dropped and the
/// act wrapper is stripped; pairs are rewritten to the `key[value]` form.
inline std::vector<DatasetInstance> load_hotel_restaurant_json(const std::string& path,
                                                               Split split) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
    if (!doc.is_array()) throw ConfigError("expected a JSON array in " + path);

    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t r = 0; r < doc.size(); ++r) {
        const auto& entry = doc[r];
        if (!entry.is_array() || entry.size() < 2 || !entry[0].is_string() ||
            !entry[1].is_string())
            throw ConfigError("malformed entry " + std::to_string(r) + " in " + path);
        std::string act = entry[0].get<std::string>();
        auto paren = act.find('(');
        if (paren == std::string::npos || act.back() != ')')
            throw ConfigError("malformed dialogue act in entry " + std::to_string(r));
        if (act.substr(0, paren) != "inform") continue;
        std::string body = act.substr(paren + 1, act.size() - paren - 2);
        MeaningRepresentation mr;
        std::size_t i = 0;
        while (i < body.size()) {
            std::size_t eq = body.find('=', i);
            std::size_t semi = body.find(';', i);
            std::string key, value;
            if (eq == std::string::npos || (semi != std::string::npos && eq > semi)) {
                // bare flag slot, e.g. type=... missing: keep key with empty value
                key = body.substr(i, (semi == std::string::npos ? body.size() : semi) - i);
            } else {
                key = body.substr(i, eq - i);
                std::size_t v = eq + 1;
                if (v < body.size() && body[v] == '\'') {
                    std::size_t close = body.find('\'', v + 1);
                    if (close == std::string::npos)
                        throw ConfigError("unterminated quote in entry " + std::to_string(r));
                    value = body.substr(v + 1, close - v - 1);
                    semi = body.find(';', close);
                } else {
                    value = body.substr(v, (semi == std::string::npos ? body.size() : semi) - v);
                }
            }
            if (!key.empty()) mr.slots.push_back({key, value});
            if (semi == std::string::npos) break;
            i = semi + 1;
        }
        if (!mr.slots.empty())
            pairs.emplace_back(mr.serialize(), entry[1].get<std::string>());
    }
    std::vector<DatasetInstance> out;
    detail::group_references(out, pairs, split, split != Split::Train);
    return out;
}

enum class DatasetFormat { E2eCsv, HotelRestaurantJson };

inline std::vector<DatasetInstance> load_dataset(const std::string& path, DatasetFormat fmt,
                                                 Split split) {
    switch (fmt) {
        case DatasetFormat::E2eCsv: return load_e2e_csv(path, split);
        case DatasetFormat::HotelRestaurantJson:
            return load_hotel_restaurant_json(path, split);
    }
    throw ConfigError("unknown dataset format");
}

// ---------------------------------------------------------------------------
// Corpus statistics

struct SplitStats {
    std::size_t count = 0;
    double mean_mr_chars = 0.0;
    double mean_ref_chars = 0.0;
};

struct CorpusStats {
    SplitStats train, validation, test;

    SplitStats& for_split(Split s) {
        switch (s) {
            case Split::Train: return train;
            case Split::Validation: return validation;
            default: return test;
        }
    }
};

/// Per-split instance counts and mean character lengths of serialized MRs
/// and references (every reference counts once).
inline CorpusStats corpus_stats(const Dataset& ds) {
    CorpusStats stats;
    struct Acc { std::size_t n = 0, refs = 0; double mr = 0, ref = 0; };
    Acc acc[3];
    for (const auto& inst : ds.instances) {
        Acc& a = acc[static_cast<int>(inst.split)];
        ++a.n;
        a.mr += static_cast<double>(inst.mr.serialize().size());
        for (const auto& r : inst.references) {
            a.ref += static_cast<double>(r.size());
            ++a.refs;
        }
    }
    Split splits[3] = {Split::Train, Split::Validation, Split::Test};
    for (int k = 0; k < 3; ++k) {
        SplitStats& s = stats.for_split(splits[k]);
        s.count = acc[k].n;
        if (acc[k].n) s.mean_mr_chars = acc[k].mr / static_cast<double>(acc[k].n);
        if (acc[k].refs) s.mean_ref_chars = acc[k].ref / static_cast<double>(acc[k].refs);
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Augmented corpus builder (E2E+ construction)

/// Replacement pools for the copy-susceptible slots. The name and near
/// slots draw from the same kind of pool (restaurant names) but must be
/// disjoint; every pool is partitioned per split and the partitions must
/// be pairwise disjoint.
struct ValuePools {
    struct Pool {
        std::vector<std::string> train, validation, test;

        const std::vector<std::string>& partition(Split s) const {
            switch (s) {
                case Split::Train: return train;
                case Split::Validation: return validation;
                default: return test;
            }
        }
    };
    Pool name, near, food;

    void validate() const {
        const Pool* pools[3] = {&name, &near, &food};
        const char* labels[3] = {"name", "near", "food"};
        for (int k = 0; k < 3; ++k) {
            const Pool& p = *pools[k];
            if (p.train.empty() || p.validation.empty() || p.test.empty())
                throw ConfigError(std::string("empty pool partition for slot ") + labels[k]);
            auto collect = [](const std::vector<std::string>& v) {
                return std::set<std::string>(v.begin(), v.end());
            };
            auto tr = collect(p.train), va = collect(p.validation), te = collect(p.test);
            auto disjoint = [](const std::set<std::string>& a, const std::set<std::string>& b) {
                for (const auto& x : a)
                    if (b.count(x)) return false;
                return true;
            };
            if (!disjoint(tr, va) || !disjoint(tr, te) || !disjoint(va, te))
                throw ConfigError(std::string("pool partitions overlap for slot ") + labels[k]);
        }
        // name and near pools must not share any value across all partitions
        std::set<std::string> all_names(name.train.begin(), name.train.end());
        all_names.insert(name.validation.begin(), name.validation.end());
        all_names.insert(name.test.begin(), name.test.end());
        for (const auto* part : {&near.train, &near.validation, &near.test})
            for (const auto& v : *part)
                if (all_names.count(v))
                    throw ConfigError("name and near pools share value: " + v);
    }
};

/// One value per line, UTF-8, blank lines skipped.
inline std::vector<std::string> load_pool_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open pool file: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

struct BuildReport {
    std::uint64_t seed = 0;
    std::size_t replaced_name = 0, replaced_near = 0, replaced_food = 0;
    std::size_t skipped_guard = 0;  // slots left alone by the consistency guard
};

namespace detail {

inline void replace_all_occurrences(std::string& text, const std::string& from,
                                    const std::string& to) {
    if (from.empty()) return;
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
}

}  // namespace detail

/// Resample name/near/food values from per-split pools, replacing every
/// exact occurrence of the old value in the MR and each reference.
/// Replacement is longest-value-first so one slot's value being a
/// substring of another's cannot corrupt the other's replacement. A slot
/// whose value never occurs verbatim in a reference is left unreplaced in
/// both the MR and that reference (consistency guard). Deterministic
/// under the seed.
inline Dataset build_augmented(const Dataset& source, const ValuePools& pools,
                               std::uint64_t seed, BuildReport* report = nullptr) {
    pools.validate();
    std::mt19937_64 rng(seed);
    BuildReport local;
    local.seed = seed;
    Dataset out;
    out.instances.reserve(source.instances.size());

    const char* slot_keys[3] = {"name", "near", "food"};
    for (const auto& inst : source.instances) {
        DatasetInstance ni = inst;
        // gather planned replacements (old value, new value, slot index)
        struct Planned { std::string old_v, new_v; int slot; };
        std::vector<Planned> plan;
        for (int k = 0; k < 3; ++k) {
            auto old_v = ni.mr.value_of(slot_keys[k]);
            if (!old_v || old_v->empty()) continue;
            const ValuePools::Pool& pool =
                (k == 0) ? pools.name : (k == 1) ? pools.near : pools.food;
            const auto& part = pool.partition(inst.split);
            std::uniform_int_distribution<std::size_t> pick(0, part.size() - 1);
            plan.push_back({*old_v, part[pick(rng)], k});
        }
        // longest old value first
        std::stable_sort(plan.begin(), plan.end(), [](const Planned& a, const Planned& b) {
            return a.old_v.size() > b.old_v.size();
        });
        for (const auto& p : plan) {
            bool present_everywhere = true;
            for (const auto& ref : ni.references)
                if (ref.find(p.old_v) == std::string::npos) { present_everywhere = false; break; }
            if (!present_everywhere) {
                ++local.skipped_guard;
                continue;
            }
            for (auto& slot : ni.mr.slots)
                if (slot.key == slot_keys[p.slot] && slot.value == p.old_v) slot.value = p.new_v;
            for (auto& ref : ni.references)
                detail::replace_all_occurrences(ref, p.old_v, p.new_v);
            if (p.slot == 0) ++local.replaced_name;
            else if (p.slot == 1) ++local.replaced_near;
            else ++local.replaced_food;
        }
        out.instances.push_back(std::move(ni));
    }
    if (report) *report = local;
    return out;
}

/// Write a dataset split back out in the two-column CSV schema.
inline void write_e2e_csv(const std::vector<const DatasetInstance*>& instances,
                          std::ostream& out) {
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += "\"\"";
            else q.push_back(c);
        }
        q += "\"";
        return q;
    };
    out << "mr,ref\n";
    for (const auto* inst : instances)
        for (const auto& ref : inst->references)
            out << quote(inst->mr.serialize()) << "," << quote(ref) << "\n";
}

}  // namespace chargen
