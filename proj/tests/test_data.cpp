#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "chargen/data.hpp"

using namespace chargen;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
    fs::path dir = fs::temp_directory_path() / "chargen_data_test";
    fs::create_directories(dir);
    fs::path p = dir / name;
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
}

}  // namespace

TEST_CASE("alphabet layout") {
    CHECK(Alphabet::size() == 98);
    CHECK(Alphabet::kStart == 0);
    CHECK(Alphabet::kEnd == 1);
    CHECK(Alphabet::kUnknown == 2);
    CHECK(Alphabet::index_of(' ') == 3);
    CHECK(Alphabet::index_of('~') == 97);
    CHECK(Alphabet::index_of('a') == 68);
    // reserved symbols decode to nothing
    CHECK(Alphabet::decode(Alphabet::kStart).empty());
    CHECK(Alphabet::decode(Alphabet::kEnd).empty());
    CHECK(Alphabet::decode(Alphabet::kUnknown).empty());
    CHECK_THROWS_AS(Alphabet::decode(Alphabet::size()), ContractError);
    // printable characters round-trip
    for (char c = 32; c != 127; ++c)
        CHECK(Alphabet::decode(Alphabet::index_of(c)) == std::string(1, c));
}

TEST_CASE("transliteration") {
    CHECK(transliterate("café") == "cafe");
    CHECK(transliterate("naïve Dürer") == "naive Durer");
    CHECK(transliterate("Œuvre æon ß") == "OEuvre aeon ss");
    CHECK(transliterate("don’t") == "don't");
    SECTION("unmapped multibyte characters become the unknown symbol") {
        auto idx = encode_text("a\xE6\x97\xA5" "b");  // CJK codepoint between ASCII letters
        REQUIRE(idx.size() == 3);
        CHECK(idx[0] == Alphabet::index_of('a'));
        CHECK(idx[1] == Alphabet::kUnknown);
        CHECK(idx[2] == Alphabet::index_of('b'));
    }
}

TEST_CASE("text encoding round-trips printable ASCII") {
    std::string text = "The Mill, near Cafe Rouge: rating 3 of 5!";
    CHECK(decode_indices(encode_text(text)) == text);
    CHECK(encode_text("").empty());
}

TEST_CASE("meaning representation parsing") {
    SECTION("canonical multi-slot form") {
        auto mr = parse_mr("name[Blue Spice], eatType[coffee shop], area[city centre]");
        REQUIRE(mr.slots.size() == 3);
        CHECK(mr.slots[0] == Slot{"name", "Blue Spice"});
        CHECK(mr.slots[1] == Slot{"eatType", "coffee shop"});
        CHECK(mr.slots[2] == Slot{"area", "city centre"});
        CHECK(mr.serialize() == "name[Blue Spice], eatType[coffee shop], area[city centre]");
        CHECK(mr.value_of("area") == "city centre");
        CHECK_FALSE(mr.value_of("food").has_value());
    }
    SECTION("serialize/parse round trip") {
        auto mr = parse_mr("a[1], b[two words], c[x, y]");
        CHECK(parse_mr(mr.serialize()) == mr);
    }
    SECTION("duplicate keys are preserved in order") {
        auto mr = parse_mr("k[1], k[2]");
        REQUIRE(mr.slots.size() == 2);
        CHECK(mr.slots[0].value == "1");
        CHECK(mr.slots[1].value == "2");
        CHECK(mr.value_of("k") == "1");  // first occurrence
    }
    SECTION("nested brackets stay inside the value") {
        auto mr = parse_mr("k[a[b]c]");
        REQUIRE(mr.slots.size() == 1);
        CHECK(mr.slots[0].value == "a[b]c");
    }
    SECTION("empty value is allowed") {
        CHECK(parse_mr("k[]").slots[0].value.empty());
    }
    SECTION("parse errors carry byte offsets") {
        CHECK_THROWS_AS(parse_mr(""), ParseError);
        CHECK_THROWS_AS(parse_mr("name"), ParseError);
        CHECK_THROWS_AS(parse_mr("name[x"), ParseError);
        CHECK_THROWS_AS(parse_mr("[x]"), ParseError);
        CHECK_THROWS_AS(parse_mr("a[1] b[2]"), ParseError);
        CHECK_THROWS_AS(parse_mr("a[1],"), ParseError);
        try {
            parse_mr("name]x[");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.offset == 4);
            CHECK(std::string(e.what()).find("byte 4") != std::string::npos);
        }
    }
}

TEST_CASE("csv loading") {
    SECTION("training rows stay ungrouped") {
        auto p = temp_file("train.csv",
                           "mr,ref\n"
                           "\"name[A]\",\"A is fine.\"\n"
                           "\"name[A]\",\"A is good.\"\n"
                           "\"name[B]\",\"B, the \"\"best\"\" spot.\"\n");
        auto insts = load_e2e_csv(p.string(), Split::Train);
        REQUIRE(insts.size() == 3);
        CHECK(insts[0].references == std::vector<std::string>{"A is fine."});
        CHECK(insts[2].references == std::vector<std::string>{"B, the \"best\" spot."});
        CHECK(insts[2].split == Split::Train);
    }
    SECTION("validation rows group per identical MR") {
        auto p = temp_file("val.csv",
                           "mr,ref\n"
                           "\"name[A]\",\"A is fine.\"\n"
                           "\"name[B]\",\"B works.\"\n"
                           "\"name[A]\",\"A is good.\"\n");
        auto insts = load_e2e_csv(p.string(), Split::Validation);
        REQUIRE(insts.size() == 2);
        CHECK(insts[0].mr.serialize() == "name[A]");
        CHECK(insts[0].references ==
              std::vector<std::string>{"A is fine.", "A is good."});
        CHECK(insts[1].references == std::vector<std::string>{"B works."});
    }
    SECTION("quoted fields may span lines") {
        auto p = temp_file("multiline.csv",
                           "mr,ref\n"
                           "\"name[A]\",\"line one\nline two\"\n");
        auto insts = load_e2e_csv(p.string(), Split::Train);
        REQUIRE(insts.size() == 1);
        CHECK(insts[0].references[0] == "line one\nline two");
    }
    SECTION("missing and malformed files are rejected") {
        CHECK_THROWS_AS(load_e2e_csv("/nonexistent/x.csv", Split::Train), ConfigError);
        auto p = temp_file("bad.csv", "mr,ref\nonly-one-field\n");
        CHECK_THROWS_AS(load_e2e_csv(p.string(), Split::Train), ConfigError);
    }
}

TEST_CASE("dialogue-act json loading") {
    auto p = temp_file("hotel.json", R"json([
        ["inform(name='Red Door';area='north')", "Red Door is in the north."],
        ["?request(area)", "which area?"],
        ["inform(name='Fino';pricerange=cheap)", "Fino is cheap."],
        ["inform(name='Semi;colon')", "odd name."]
    ])json");
    auto insts = load_hotel_restaurant_json(p.string(), Split::Train);
    REQUIRE(insts.size() == 3);  // the request act is dropped
    CHECK(insts[0].mr.serialize() == "name[Red Door], area[north]");
    CHECK(insts[1].mr.serialize() == "name[Fino], pricerange[cheap]");
    CHECK(insts[2].mr.serialize() == "name[Semi;colon]");  // quotes protect ';'
    CHECK(insts[0].references[0] == "Red Door is in the north.");
    SECTION("invalid json is rejected") {
        auto bad = temp_file("bad.json", "{not json");
        CHECK_THROWS_AS(load_hotel_restaurant_json(bad.string(), Split::Train), ConfigError);
    }
}

TEST_CASE("corpus statistics") {
    Dataset ds;
    DatasetInstance a;
    a.mr = parse_mr("name[AB]");  // serialized length 8
    a.references = {"1234", "123456"};
    a.split = Split::Train;
    ds.instances.push_back(a);
    DatasetInstance b = a;
    b.split = Split::Test;
    b.references = {"12"};
    ds.instances.push_back(b);

    auto stats = corpus_stats(ds);
    CHECK(stats.train.count == 1);
    CHECK(stats.train.mean_mr_chars == Catch::Approx(8.0));
    CHECK(stats.train.mean_ref_chars == Catch::Approx(5.0));
    CHECK(stats.test.count == 1);
    CHECK(stats.test.mean_ref_chars == Catch::Approx(2.0));
    CHECK(stats.validation.count == 0);
}

namespace {

ValuePools good_pools() {
    ValuePools p;
    p.name = {{"Nova", "Quill"}, {"Vertex"}, {"Zephyr"}};
    p.near = {{"Old Gate", "Mill Pond"}, {"Fern Way"}, {"High Arch"}};
    p.food = {{"Thai", "Greek"}, {"Polish"}, {"Malay"}};
    return p;
}

}  // namespace

TEST_CASE("value pool validation") {
    CHECK_NOTHROW(good_pools().validate());
    SECTION("empty partition") {
        auto p = good_pools();
        p.food.validation.clear();
        CHECK_THROWS_AS(p.validate(), ConfigError);
    }
    SECTION("partition overlap") {
        auto p = good_pools();
        p.name.test.push_back("Nova");
        CHECK_THROWS_AS(p.validate(), ConfigError);
    }
    SECTION("name and near sharing a value") {
        auto p = good_pools();
        p.near.train.push_back("Quill");
        CHECK_THROWS_AS(p.validate(), ConfigError);
    }
}

TEST_CASE("augmented corpus builder") {
    Dataset src;
    {
        DatasetInstance inst;
        inst.mr = parse_mr("name[Blue Spice], near[Blue], food[French]");
        inst.references = {"Blue Spice serves French food near Blue."};
        inst.split = Split::Train;
        src.instances.push_back(inst);
    }
    {
        DatasetInstance inst;  // reference omits the food value: guard case
        inst.mr = parse_mr("name[Aromi], food[Italian]");
        inst.references = {"Aromi is in the centre."};
        inst.split = Split::Test;
        src.instances.push_back(inst);
    }
    auto pools = good_pools();

    BuildReport report;
    auto built = build_augmented(src, pools, 99, &report);
    REQUIRE(built.instances.size() == 2);

    SECTION("replacement rewrites MR and references consistently") {
        const auto& inst = built.instances[0];
        auto name_v = inst.mr.value_of("name").value();
        auto near_v = inst.mr.value_of("near").value();
        auto food_v = inst.mr.value_of("food").value();
        // values drawn from the train partitions
        CHECK((name_v == "Nova" || name_v == "Quill"));
        CHECK((near_v == "Old Gate" || near_v == "Mill Pond"));
        CHECK((food_v == "Thai" || food_v == "Greek"));
        const auto& ref = inst.references[0];
        CHECK(ref == name_v + " serves " + food_v + " food near " + near_v + ".");
        // longest-first replacement kept "Blue" inside "Blue Spice" intact
        CHECK(ref.find("Blue") == std::string::npos);
        // corpus-wide counts: the second (guard-case) instance also has its
        // name replaced, so names total two
        CHECK(report.replaced_name == 2);
        CHECK(report.replaced_near == 1);
        CHECK(report.replaced_food == 1);
    }
    SECTION("consistency guard skips absent values") {
        const auto& inst = built.instances[1];
        CHECK(inst.mr.value_of("food") == "Italian");  // untouched
        CHECK(inst.mr.value_of("name") != "Aromi");    // name did occur, so replaced
        CHECK(report.skipped_guard == 1);
        // test-split instance draws from the test partition
        CHECK(inst.mr.value_of("name") == "Zephyr");
    }
    SECTION("deterministic under the seed") {
        auto again = build_augmented(src, pools, 99);
        REQUIRE(again.instances.size() == built.instances.size());
        for (std::size_t i = 0; i < built.instances.size(); ++i) {
            CHECK(again.instances[i].mr == built.instances[i].mr);
            CHECK(again.instances[i].references == built.instances[i].references);
        }
    }
    SECTION("source dataset is untouched") {
        CHECK(src.instances[0].mr.value_of("name") == "Blue Spice");
        CHECK(src.instances[0].references[0] ==
              "Blue Spice serves French food near Blue.");
    }
}

TEST_CASE("csv writer round-trips through the loader") {
    Dataset ds;
    DatasetInstance inst;
    inst.mr = parse_mr("name[A \"quoted\" place], food[Thai]");
    inst.references = {"Line with, comma and \"quotes\"."};
    inst.split = Split::Train;
    ds.instances.push_back(inst);

    std::ostringstream out;
    write_e2e_csv(ds.split(Split::Train), out);
    auto p = temp_file("roundtrip.csv", out.str());
    auto back = load_e2e_csv(p.string(), Split::Train);
    REQUIRE(back.size() == 1);
    CHECK(back[0].mr == inst.mr);
    CHECK(back[0].references == inst.references);
}

TEST_CASE("pool files load one value per line") {
    auto p = temp_file("pool.txt", "Alpha\r\n\nBeta\nGamma\n");
    auto values = load_pool_file(p.string());
    CHECK(values == std::vector<std::string>{"Alpha", "Beta", "Gamma"});
    CHECK_THROWS_AS(load_pool_file("/nonexistent/pool.txt"), ConfigError);
}
