// chargen: character-level data-to-text generation toolkit
//
// Command-line surface: prepare-data, train, generate, evaluate, inspect.
// Exit codes: 0 success, 2 config/input problem, 3 corpus alignment
// problem, 4 corrupt artifact.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chargen/checkpoint.hpp"
#include "chargen/data.hpp"
#include "chargen/metrics.hpp"
#include "chargen/model.hpp"
#include "chargen/training.hpp"
#include "chargen/viz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAlignment = 3;
constexpr int kExitCorrupt = 4;

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw chargen::ConfigError("cannot open file: " + path);
    chargen::detail::Fnv1a h;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount())
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    return h.digest();
}

// ---------------------------------------------------------------------------
// Run configuration: JSON file with CLI overrides (CLI > file > defaults).

struct RunConfig {
    chargen::ModelConfig model;
    chargen::TrainConfig train;

    static RunConfig from_json(const json& j) {
        RunConfig rc;
        static const std::set<std::string> known = {
            "embedding_size", "hidden_size", "align_size", "max_decode_length",
            "max_epochs", "batch_size", "learning_rate", "clip_norm",
            "validation_interval", "patience", "validation_max_instances",
            "copy_enabled", "switch_enabled", "shift_enabled", "seed", "sum_loss"};
        for (const auto& [key, value] : j.items())
            if (!known.count(key))
                throw chargen::ConfigError("unknown config key: " + key);
        rc.model.embedding_size = j.value("embedding_size", rc.model.embedding_size);
        rc.model.hidden_size = j.value("hidden_size", rc.model.hidden_size);
        rc.model.align_size = j.value("align_size", rc.model.align_size);
        rc.model.max_decode_length = j.value("max_decode_length", rc.model.max_decode_length);
        rc.model.sum_loss = j.value("sum_loss", rc.model.sum_loss);
        rc.train.max_epochs = j.value("max_epochs", rc.train.max_epochs);
        rc.train.batch_size = j.value("batch_size", rc.train.batch_size);
        rc.train.learning_rate = j.value("learning_rate", rc.train.learning_rate);
        rc.train.clip_norm = j.value("clip_norm", rc.train.clip_norm);
        rc.train.validation_interval =
            j.value("validation_interval", rc.train.validation_interval);
        rc.train.patience = j.value("patience", rc.train.patience);
        rc.train.validation_max_instances =
            j.value("validation_max_instances", rc.train.validation_max_instances);
        rc.train.copy_enabled = j.value("copy_enabled", rc.train.copy_enabled);
        rc.train.switch_enabled = j.value("switch_enabled", rc.train.switch_enabled);
        rc.train.shift_enabled = j.value("shift_enabled", rc.train.shift_enabled);
        rc.train.seed = j.value("seed", rc.train.seed);
        rc.train.max_decode_length = rc.model.max_decode_length;
        return rc;
    }

    json to_json() const {
        return {
            {"embedding_size", model.embedding_size},
            {"hidden_size", model.hidden_size},
            {"align_size", model.align_size},
            {"max_decode_length", model.max_decode_length},
            {"sum_loss", model.sum_loss},
            {"max_epochs", train.max_epochs},
            {"batch_size", train.batch_size},
            {"learning_rate", train.learning_rate},
            {"clip_norm", train.clip_norm},
            {"validation_interval", train.validation_interval},
            {"patience", train.patience},
            {"validation_max_instances", train.validation_max_instances},
            {"copy_enabled", train.copy_enabled},
            {"switch_enabled", train.switch_enabled},
            {"shift_enabled", train.shift_enabled},
            {"seed", train.seed},
        };
    }
};

chargen::Dataset load_three_splits(const std::string& train_path,
                                   const std::string& validation_path,
                                   const std::string& test_path,
                                   chargen::DatasetFormat fmt) {
    chargen::Dataset ds;
    auto append = [&](const std::string& path, chargen::Split split) {
        if (path.empty()) return;
        auto part = chargen::load_dataset(path, fmt, split);
        ds.instances.insert(ds.instances.end(), part.begin(), part.end());
    };
    append(train_path, chargen::Split::Train);
    append(validation_path, chargen::Split::Validation);
    append(test_path, chargen::Split::Test);
    return ds;
}

chargen::DatasetFormat parse_format(const std::string& name) {
    if (name == "e2e-csv") return chargen::DatasetFormat::E2eCsv;
    if (name == "hotel-restaurant-json") return chargen::DatasetFormat::HotelRestaurantJson;
    throw chargen::ConfigError("unknown dataset format: " + name);
}

void print_report(std::ostream& out, const chargen::MetricReport& r) {
    out << std::fixed << std::setprecision(4);
    out << "bleu " << r.bleu << "\n";
    out << "nist " << r.nist << "\n";
    out << "meteor " << r.meteor << "\n";
    out << "rouge_l " << r.rouge_l << "\n";
    out << "cider " << r.cider << "\n";
}

// ---------------------------------------------------------------------------
// prepare-data

struct PrepareArgs {
    std::string train_csv, validation_csv, test_csv;
    std::string name_pool, near_pool, food_pool;  // single files, auto-partitioned
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    bool stats_only = false;
};

chargen::ValuePools::Pool partition_pool(const std::vector<std::string>& values) {
    // deterministic 80/10/10 split by position
    chargen::ValuePools::Pool p;
    if (values.size() < 3)
        throw chargen::ConfigError("pool needs at least 3 values to partition");
    std::size_t n = values.size();
    std::size_t n_train = std::max<std::size_t>(1, n * 8 / 10);
    std::size_t n_val = std::max<std::size_t>(1, (n - n_train) / 2);
    if (n_train + n_val >= n) n_train = n - n_val - 1;
    p.train.assign(values.begin(), values.begin() + n_train);
    p.validation.assign(values.begin() + n_train, values.begin() + n_train + n_val);
    p.test.assign(values.begin() + n_train + n_val, values.end());
    return p;
}

int cmd_prepare_data(const PrepareArgs& args) {
    auto ds = load_three_splits(args.train_csv, args.validation_csv, args.test_csv,
                                chargen::DatasetFormat::E2eCsv);
    if (args.stats_only) {
        auto stats = chargen::corpus_stats(ds);
        auto line = [](const char* name, const chargen::SplitStats& s) {
            std::cout << name << " count " << s.count << " mr_chars " << std::fixed
                      << std::setprecision(2) << s.mean_mr_chars << " ref_chars "
                      << s.mean_ref_chars << "\n";
        };
        line("train", stats.train);
        line("validation", stats.validation);
        line("test", stats.test);
        return 0;
    }
    if (args.name_pool.empty() || args.near_pool.empty() || args.food_pool.empty())
        throw chargen::ConfigError("--name-pool, --near-pool and --food-pool are required");
    chargen::ValuePools pools;
    pools.name = partition_pool(chargen::load_pool_file(args.name_pool));
    pools.near = partition_pool(chargen::load_pool_file(args.near_pool));
    pools.food = partition_pool(chargen::load_pool_file(args.food_pool));

    chargen::BuildReport report;
    auto built = chargen::build_augmented(ds, pools, args.seed, &report);

    fs::create_directories(args.out_dir);
    auto write_split = [&](chargen::Split split, const std::string& filename) {
        std::ofstream out(fs::path(args.out_dir) / filename, std::ios::binary);
        chargen::write_e2e_csv(built.split(split), out);
    };
    write_split(chargen::Split::Train, "e2eplus_train.csv");
    write_split(chargen::Split::Validation, "e2eplus_validation.csv");
    write_split(chargen::Split::Test, "e2eplus_test.csv");

    json sidecar = {
        {"seed", report.seed},
        {"pool_hashes",
         {{"name", hash_file(args.name_pool)},
          {"near", hash_file(args.near_pool)},
          {"food", hash_file(args.food_pool)}}},
        {"replacements",
         {{"name", report.replaced_name},
          {"near", report.replaced_near},
          {"food", report.replaced_food}}},
        {"skipped_by_consistency_guard", report.skipped_guard},
    };
    std::ofstream side(fs::path(args.out_dir) / "e2eplus_provenance.json", std::ios::binary);
    side << sidecar.dump(2) << "\n";
    std::cout << "wrote E2E+ corpus to " << args.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string config_path;
    std::string train_path, validation_path, test_path;
    std::string format = "e2e-csv";
    std::string out_dir = "run";
    std::string variant;
    std::string resume_path;
    bool ablation = false;
    std::vector<std::string> overrides;  // key=value
};

json load_config_json(const std::string& path, const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw chargen::ConfigError("cannot open config file: " + path);
        in >> j;
    }
    for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw chargen::ConfigError("override must look like key=value: " + kv);
        std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        try {
            j[key] = json::parse(value);
        } catch (const json::exception&) {
            j[key] = value;
        }
    }
    return j;
}

void write_training_log(const std::string& path,
                        const std::vector<chargen::TrainLogRecord>& log) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& rec : log) {
        json j = {{"iteration", rec.iteration},
                  {"epoch", rec.epoch},
                  {"l_forward", rec.l_forward},
                  {"bleu", rec.validation_bleu},
                  {"p_gen_mean", rec.p_gen_mean}};
        if (rec.l_backward) j["l_backward"] = *rec.l_backward;
        else j["l_backward"] = nullptr;
        out << j.dump() << "\n";
    }
}

int cmd_train(const TrainArgs& args) {
    json config_json = load_config_json(args.config_path, args.overrides);
    RunConfig rc = RunConfig::from_json(config_json);
    if (!args.variant.empty()) chargen::apply_variant(rc.train, args.variant);
    rc.train.validate();

    auto ds = load_three_splits(args.train_path, args.validation_path, args.test_path,
                                parse_format(args.format));
    fs::create_directories(args.out_dir);

    if (args.ablation) {
        auto rows = chargen::ablation_suite(ds, rc.model, rc.train);
        std::ofstream out(fs::path(args.out_dir) / "ablation_report.txt", std::ios::binary);
        for (const auto& row : rows) {
            out << row.variant << "\n";
            print_report(out, row.metrics);
            print_report(std::cout, row.metrics);
        }
        std::cout << "wrote ablation report to " << args.out_dir << "\n";
        return 0;
    }

    chargen::ParameterStore store;
    chargen::ModelParams model;
    chargen::AdamConfig acfg;
    acfg.learning_rate = rc.train.learning_rate;
    chargen::AdamState adam(acfg);
    if (!args.resume_path.empty()) {
        auto ck = chargen::load_checkpoint(args.resume_path, acfg);
        store = std::move(ck.store);
        model = ck.model;
        model.config.copy_enabled = rc.train.copy_enabled;
        model.config.shift_enabled = rc.train.shift_enabled;
        if (ck.has_optimizer_state) adam = std::move(ck.adam);
    } else {
        std::mt19937_64 rng(rc.train.seed);
        rc.model.copy_enabled = rc.train.copy_enabled;
        rc.model.shift_enabled = rc.train.shift_enabled;
        model = chargen::make_model(store, rc.model, rng);
    }

    auto result = chargen::train(ds, model, store, rc.train, &adam);
    result.best.restore(store);
    chargen::save_checkpoint((fs::path(args.out_dir) / "checkpoint.bin").string(), store,
                             model.config, rc.to_json(), &adam);
    write_training_log((fs::path(args.out_dir) / "training_log.jsonl").string(), result.log);
    std::cout << "best validation bleu " << std::fixed << std::setprecision(4)
              << result.best_bleu << " at iteration " << result.best_iteration << "\n";
    std::cout << "optimizer steps " << result.optimizer_steps << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    std::string checkpoint_path;
    std::string input_path;
    std::string output_path;
    std::string trace_path;
    std::size_t max_len = 0;  // 0 = checkpoint default
};

int cmd_generate(const GenerateArgs& args) {
    auto ck = chargen::load_checkpoint(args.checkpoint_path);
    std::size_t max_len = args.max_len ? args.max_len : ck.config.max_decode_length;
    std::ifstream in(args.input_path, std::ios::binary);
    if (!in) throw chargen::ConfigError("cannot open input file: " + args.input_path);
    std::ofstream out(args.output_path, std::ios::binary);
    if (!out) throw chargen::ConfigError("cannot write output file: " + args.output_path);

    auto roles = chargen::assign_roles(ck.model, chargen::Phase::Forward);
    std::vector<chargen::TraceRecord> traces;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            auto mr = chargen::parse_mr(line);
            auto source = chargen::encode_text(mr.serialize());
            auto decoded = chargen::greedy_decode(ck.model, roles, source, max_len);
            out << decoded.text << "\n";
            if (!args.trace_path.empty())
                traces.push_back({source, std::move(decoded.trace)});
        } catch (const chargen::ParseError& e) {
            out << "\n";
            std::cerr << "line " << lineno << ": " << e.what() << "\n";
        }
    }
    if (!args.trace_path.empty()) chargen::save_traces(args.trace_path, traces);
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::string hypotheses_path;
    std::string references_path;
    std::string output_path;
};

int cmd_evaluate(const EvaluateArgs& args) {
    for (const auto& path : {args.hypotheses_path, args.references_path})
        if (!fs::exists(path)) throw chargen::ConfigError("cannot open file: " + path);
    auto report = chargen::score_all(args.hypotheses_path, args.references_path);
    print_report(std::cout, report);
    if (!args.output_path.empty()) {
        std::ofstream out(args.output_path, std::ios::binary);
        print_report(out, report);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectArgs {
    std::string trace_path;
    std::string out_dir = ".";
    std::string format = "pgm";
};

int cmd_inspect(const InspectArgs& args) {
    auto traces = chargen::load_traces(args.trace_path);
    fs::create_directories(args.out_dir);
    auto fmt = args.format == "svg" ? chargen::ImageFormat::ScalableVector
                                    : chargen::ImageFormat::PortableGraymap;
    const char* ext = args.format == "svg" ? ".svg" : ".pgm";
    for (std::size_t i = 0; i < traces.size(); ++i) {
        auto path = fs::path(args.out_dir) / ("trace_" + std::to_string(i) + ext);
        chargen::render(traces[i].trace, traces[i].source, path.string(), fmt);
    }
    std::cout << "rendered " << traces.size() << " trace(s) to " << args.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"character-level data-to-text generation toolkit"};
    app.require_subcommand(1);

    PrepareArgs prep;
    auto* prepare = app.add_subcommand("prepare-data",
                                       "build the augmented (E2E+-style) corpus or print stats");
    prepare->add_option("--train", prep.train_csv, "training split CSV")->required();
    prepare->add_option("--validation", prep.validation_csv, "validation split CSV");
    prepare->add_option("--test", prep.test_csv, "test split CSV");
    prepare->add_option("--name-pool", prep.name_pool, "name value pool file");
    prepare->add_option("--near-pool", prep.near_pool, "near value pool file");
    prepare->add_option("--food-pool", prep.food_pool, "food value pool file");
    prepare->add_option("--out-dir", prep.out_dir, "output directory");
    prepare->add_option("--seed", prep.seed, "replacement seed");
    prepare->add_flag("--stats", prep.stats_only, "print corpus statistics and exit");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", tr.config_path, "JSON config file");
    train_cmd->add_option("--train", tr.train_path, "training split")->required();
    train_cmd->add_option("--validation", tr.validation_path, "validation split")->required();
    train_cmd->add_option("--test", tr.test_path, "test split");
    train_cmd->add_option("--format", tr.format, "e2e-csv | hotel-restaurant-json");
    train_cmd->add_option("--out-dir", tr.out_dir, "output directory");
    train_cmd->add_option("--variant", tr.variant, "eda | eda_c | eda_s | eda_cs");
    train_cmd->add_option("--resume", tr.resume_path, "resume from checkpoint");
    train_cmd->add_flag("--ablation", tr.ablation, "run the four-variant ablation suite");
    train_cmd->add_option("--set", tr.overrides, "config override key=value")
        ->take_all();

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "decode meaning representations");
    generate->add_option("--checkpoint", gen.checkpoint_path, "model checkpoint")->required();
    generate->add_option("--input", gen.input_path, "MR file, one per line")->required();
    generate->add_option("--output", gen.output_path, "utterances file")->required();
    generate->add_option("--trace", gen.trace_path, "write decode traces here");
    generate->add_option("--max-len", gen.max_len, "decode length cap");

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "score hypotheses against references");
    evaluate->add_option("--hypotheses", ev.hypotheses_path, "one utterance per line")
        ->required();
    evaluate->add_option("--references", ev.references_path,
                         "reference groups separated by blank lines")
        ->required();
    evaluate->add_option("--output", ev.output_path, "also write the report here");

    InspectArgs ins;
    auto* inspect = app.add_subcommand("inspect", "render decode traces as images");
    inspect->add_option("--trace", ins.trace_path, "trace file")->required();
    inspect->add_option("--out-dir", ins.out_dir, "output directory");
    inspect->add_option("--format", ins.format, "pgm | svg");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (prepare->parsed()) return cmd_prepare_data(prep);
        if (train_cmd->parsed()) return cmd_train(tr);
        if (generate->parsed()) return cmd_generate(gen);
        if (evaluate->parsed()) return cmd_evaluate(ev);
        if (inspect->parsed()) return cmd_inspect(ins);
    } catch (const chargen::AlignmentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAlignment;
    } catch (const chargen::CorruptArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCorrupt;
    } catch (const chargen::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const chargen::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
