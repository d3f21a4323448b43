#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "chargen/checkpoint.hpp"

using namespace chargen;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "chargen_checkpoint_test";
    fs::create_directories(dir);
    return dir / name;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.embedding_size = 4;
    c.hidden_size = 5;
    return c;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    ParameterStore store;
    std::mt19937_64 rng(71);
    auto cfg = tiny_config();
    auto model = make_model(store, cfg, rng);
    // scribble distinctive values so defaults cannot mask a failure
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (const auto& [name, t] : store.items())
        for (double& v : t->value) v = u(rng);

    nlohmann::json echo = {{"seed", 9}, {"variant", "eda_cs"}};
    auto path = temp_path("model.bin");
    save_checkpoint(path.string(), store, cfg, echo);

    auto loaded = load_checkpoint(path.string());
    CHECK(loaded.config.embedding_size == cfg.embedding_size);
    CHECK(loaded.config.hidden_size == cfg.hidden_size);
    CHECK(loaded.config.alphabet_size == cfg.alphabet_size);
    CHECK(loaded.run_config_echo == echo);
    CHECK_FALSE(loaded.has_optimizer_state);
    REQUIRE(loaded.store.items().size() == store.items().size());
    for (std::size_t i = 0; i < store.items().size(); ++i) {
        const auto& [name, t] = store.items()[i];
        const auto& [lname, lt] = loaded.store.items()[i];
        CHECK(lname == name);
        CHECK(lt->shape == t->shape);
        CHECK(lt->value == t->value);  // bitwise
    }
    SECTION("saving twice produces identical bytes") {
        auto p2 = temp_path("model2.bin");
        save_checkpoint(p2.string(), store, cfg, echo);
        CHECK(read_bytes(path) == read_bytes(p2));
    }
}

TEST_CASE("optimizer state rides along") {
    ParameterStore store;
    std::mt19937_64 rng(72);
    auto cfg = tiny_config();
    auto model = make_model(store, cfg, rng);
    AdamState adam;
    // populate the moments with two synthetic steps
    for (int it = 0; it < 2; ++it) {
        for (const auto& [name, t] : store.items())
            for (double& g : t->grad) g = 0.01;
        adam.step(store);
        store.zero_grad();
    }
    auto path = temp_path("opt.bin");
    save_checkpoint(path.string(), store, cfg, {}, &adam);
    auto loaded = load_checkpoint(path.string());
    CHECK(loaded.has_optimizer_state);
    CHECK(loaded.optimizer_step == 2);
    CHECK(loaded.adam.step_count() == 2);
    auto& src = adam.moments();
    auto& dst = loaded.adam.moments();
    for (const auto& [name, t] : store.items()) {
        REQUIRE(dst.count(name) == 1);
        CHECK(dst[name].first == src[name].first);
        CHECK(dst[name].second == src[name].second);
    }
}

TEST_CASE("checkpoint corruption is detected") {
    ParameterStore store;
    std::mt19937_64 rng(73);
    auto cfg = tiny_config();
    auto model = make_model(store, cfg, rng);
    auto path = temp_path("corrupt.bin");
    save_checkpoint(path.string(), store, cfg, {});
    auto bytes = read_bytes(path);

    SECTION("flipped payload byte breaks the digest") {
        auto broken = bytes;
        broken[broken.size() / 2] = static_cast<char>(broken[broken.size() / 2] ^ 0x5A);
        auto p2 = temp_path("flipped.bin");
        write_bytes(p2, broken);
        CHECK_THROWS_AS(load_checkpoint(p2.string()), CorruptArtifactError);
    }
    SECTION("wrong magic") {
        auto broken = bytes;
        broken[0] = 'X';
        auto p2 = temp_path("magic.bin");
        write_bytes(p2, broken);
        CHECK_THROWS_AS(load_checkpoint(p2.string()), CorruptArtifactError);
    }
    SECTION("truncation") {
        auto p2 = temp_path("short.bin");
        write_bytes(p2, bytes.substr(0, bytes.size() - 20));
        CHECK_THROWS_AS(load_checkpoint(p2.string()), CorruptArtifactError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_checkpoint("/nonexistent/ck.bin"), CorruptArtifactError);
    }
}

TEST_CASE("trace files round trip") {
    std::vector<TraceRecord> traces;
    TraceRecord rec;
    rec.source = encode_text("ab");
    rec.trace.source_length = 2;
    TraceStep s1;
    s1.attention = {0.9, 0.1};
    s1.p_gen = 0.42;
    s1.emitted = Alphabet::index_of('a');
    TraceStep s2;
    s2.attention = {0.2, 0.8};
    s2.p_gen = 0.77;
    s2.emitted = Alphabet::kEnd;
    rec.trace.steps = {s1, s2};
    rec.trace.hit_end_symbol = true;
    traces.push_back(rec);

    TraceRecord rec2;
    rec2.source = encode_text("xyz");
    rec2.trace.source_length = 3;
    TraceStep s3;
    s3.attention = {0.3, 0.3, 0.4};
    s3.p_gen = 0.5;
    s3.emitted = Alphabet::index_of('x');
    rec2.trace.steps = {s3};
    rec2.trace.hit_end_symbol = false;
    traces.push_back(rec2);

    auto path = temp_path("traces.bin");
    save_traces(path.string(), traces);
    auto loaded = load_traces(path.string());
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(loaded[i].source == traces[i].source);
        CHECK(loaded[i].trace.source_length == traces[i].trace.source_length);
        CHECK(loaded[i].trace.hit_end_symbol == traces[i].trace.hit_end_symbol);
        REQUIRE(loaded[i].trace.steps.size() == traces[i].trace.steps.size());
        for (std::size_t s = 0; s < loaded[i].trace.steps.size(); ++s) {
            CHECK(loaded[i].trace.steps[s].emitted == traces[i].trace.steps[s].emitted);
            CHECK(loaded[i].trace.steps[s].p_gen == traces[i].trace.steps[s].p_gen);
            CHECK(loaded[i].trace.steps[s].attention ==
                  traces[i].trace.steps[s].attention);
        }
    }
    SECTION("ragged attention rows are rejected at save time") {
        traces[0].trace.steps[0].attention.pop_back();
        CHECK_THROWS_AS(save_traces(temp_path("bad.bin").string(), traces), ContractError);
    }
    SECTION("trace corruption is detected") {
        auto bytes = read_bytes(path);
        bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x5A);
        auto p2 = temp_path("traces_bad.bin");
        write_bytes(p2, bytes);
        CHECK_THROWS_AS(load_traces(p2.string()), CorruptArtifactError);
        auto magic = read_bytes(path);
        magic[0] = 'X';
        auto p3 = temp_path("traces_magic.bin");
        write_bytes(p3, magic);
        CHECK_THROWS_AS(load_traces(p3.string()), CorruptArtifactError);
    }
}

TEST_CASE("a saved and reloaded model decodes identically") {
    ParameterStore store;
    std::mt19937_64 rng(74);
    auto cfg = tiny_config();
    auto model = make_model(store, cfg, rng);
    auto roles = assign_roles(model, Phase::Forward);
    auto src = encode_text("name[Ecco]");
    auto before = greedy_decode(model, roles, src, 30);

    auto path = temp_path("decode.bin");
    save_checkpoint(path.string(), store, cfg, {});
    auto loaded = load_checkpoint(path.string());
    auto lroles = assign_roles(loaded.model, Phase::Forward);
    auto after = greedy_decode(loaded.model, lroles, src, 30);
    CHECK(after.text == before.text);
    CHECK(after.indices == before.indices);
}
