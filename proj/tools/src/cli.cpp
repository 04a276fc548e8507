#include "statesoup_cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "statesoup/corpus.hpp"
#include "statesoup/error.hpp"
#include "statesoup/experiments.hpp"
#include "statesoup/mixing.hpp"
#include "statesoup/model.hpp"
#include "statesoup/model_io.hpp"
#include "statesoup/store.hpp"
#include "statesoup/trainer.hpp"

namespace statesoup::cli {

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string library;
    std::string model;
    std::string strategy = "mean";
    std::optional<std::size_t> layer;
    std::optional<std::size_t> k;
    std::string out;
};

struct Settings {
    ModelConfig model;
    TrainConfig train;
    ExperimentConfig experiment;
};

Settings load_settings(const Options& o) {
    Settings s;
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in) throw IoError("cannot read config " + o.config_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config " + o.config_path + " is not valid JSON: " + e.what());
        }
        check_known_keys(j, {"model", "train", "experiment"}, "top-level");
        try {
            if (j.contains("model")) s.model = j.at("model").get<ModelConfig>();
            if (j.contains("train")) s.train = j.at("train").get<TrainConfig>();
            if (j.contains("experiment")) s.experiment = j.at("experiment").get<ExperimentConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config " + o.config_path + ": " + e.what());
        }
    }
    if (o.seed) {
        s.train.seed = *o.seed;
        s.experiment.seed = *o.seed;
    }
    if (!o.model.empty()) s.experiment.model_path = o.model;
    if (o.layer) s.experiment.layer = *o.layer;
    if (o.k) s.experiment.query_shots = {*o.k};
    if (!o.out.empty()) s.experiment.out_dir = o.out;
    s.model.validate();
    s.train.validate();
    s.experiment.validate();
    return s;
}

std::string out_path(const Settings& s, const std::string& name) {
    std::filesystem::path dir(s.experiment.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string());
    return (dir / name).string();
}

GatedLinearModel load_trained(const Settings& s) {
    if (s.experiment.model_path.empty()) throw ConfigError("no model path given (--model or experiment.model_path)");
    return GatedLinearModel(load_model(s.experiment.model_path));
}

std::string library_path(const Options& o, const Settings& s) {
    return o.library.empty() ? out_path(s, "library.ssl") : o.library;
}

void cmd_train(const Options&, const Settings& s, std::ostream& out) {
    const auto tasks = s.experiment.tasks();
    const auto result = train(s.model, s.train, tasks, s.experiment.corpus);
    const std::string model_file = out_path(s, "model.ssm");
    nlohmann::json meta{{"train", s.train}, {"tasks", nlohmann::json::array()}, {"seconds", result.seconds}};
    for (const auto& t : tasks) meta["tasks"].push_back(t.task_id);
    save_model(result.params, model_file, meta, s.train.seed);
    const std::string metrics = out_path(s, "metrics.jsonl");
    write_metrics_jsonl(result.log, metrics);
    out << "wrote " << model_file << " and " << metrics << " (final loss " << result.log.back().loss << ")\n";
}

void cmd_build_library(const Options& o, const Settings& s, std::ostream& out) {
    const auto model = load_trained(s);
    const auto lib = build_library(model, s.experiment.tasks(), s.experiment);
    const std::string path = library_path(o, s);
    save_library(lib, path);
    out << "wrote " << path << " (" << lib.size() << " entries)\n";
}

void cmd_retrieve(const Options& o, const Settings& s, std::ostream& out) {
    const auto model = load_trained(s);
    const auto lib = load_library(library_path(o, s));
    const auto rows = run_retrieval_experiment(model, lib, s.experiment.tasks(), s.experiment);
    const std::string path = out_path(s, "retrieval.csv");
    write_retrieval_csv(rows, output_metadata(model, s.experiment), path);
    out << "wrote " << path << "\n";
}

void cmd_mix(const Options& o, const Settings& s, std::ostream& out) {
    const auto model = load_trained(s);
    const auto tasks = s.experiment.tasks();
    const auto meta = output_metadata(model, s.experiment);
    const MixStrategy strategy = parse_mix_strategy(o.strategy);
    auto mix_meta = meta;
    mix_meta["strategy"] = to_string(strategy);
    const std::string path = out_path(s, "mixing.csv");
    write_mixing_csv(run_mixing_experiment(model, tasks, s.experiment, strategy), mix_meta, path);
    out << "wrote " << path << "\n";
    if (!o.library.empty()) {
        const auto lib = load_library(o.library);
        const std::string rpath = out_path(s, "retrieve_mix.csv");
        write_retrieve_mix_csv(run_retrieve_and_mix_experiment(model, lib, tasks, s.experiment), meta, rpath);
        out << "wrote " << rpath << "\n";
    }
}

void cmd_eval_icl(const Options&, const Settings& s, std::ostream& out) {
    const auto model = load_trained(s);
    const std::string path = out_path(s, "icl.csv");
    write_icl_csv(run_icl_eval(model, s.experiment.tasks(), s.experiment), output_metadata(model, s.experiment), path);
    out << "wrote " << path << "\n";
}

void cmd_eval_seq(const Options&, const Settings& s, std::ostream& out) {
    const auto model = load_trained(s);
    const auto corpus = make_sequential_corpus(s.experiment.corpus, s.experiment.n_sequences, s.experiment.chunk_len);
    const auto result = run_sequential_mixing_experiment(model, corpus);
    const std::string path = out_path(s, "sequential.csv");
    write_sequential_csv(result, output_metadata(model, s.experiment), path);
    out << "wrote " << path << "\n";
}

void cmd_export_states(const Options& o, const Settings& s, std::ostream& out) {
    const auto lib = load_library(library_path(o, s));
    if (lib.empty()) throw RangeError("library has no entries to export");
    const std::size_t layers = lib.entries.front().layers.size();
    const std::size_t layer =
        s.experiment.layer == kDefaultLayer ? std::min((layers + 1) / 2, layers - 1) : s.experiment.layer;
    const std::string path = out_path(s, "states.csv");
    const auto rows = export_states_csv(lib, layer, s.experiment.state_kind, path);
    out << "wrote " << path << " (" << rows << " rows)\n";
}

std::string json_line(const std::string& kind, const std::string& message) {
    return nlohmann::json{{"error", kind}, {"message", message}}.dump();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"State soup: snapshot, store, retrieve and mix recurrent model states", "statesoup"};
    app.require_subcommand(1);
    Options o;

    using Handler = void (*)(const Options&, const Settings&, std::ostream&);
    Handler handler = nullptr;
    const std::pair<const char*, std::pair<const char*, Handler>> commands[] = {
        {"train", {"Train a model on the task and corpus streams", cmd_train}},
        {"build-library", {"Build a skill library of task states", cmd_build_library}},
        {"retrieve", {"Run the nearest-state retrieval experiment", cmd_retrieve}},
        {"mix", {"Run the mixing experiment (and retrieve-and-mix with --library)", cmd_mix}},
        {"eval-icl", {"Score k-shot accuracy and randomized-label controls", cmd_eval_icl}},
        {"eval-seq", {"Run the sequential chunk-mixing experiment", cmd_eval_seq}},
        {"export-states", {"Export flattened library states as CSV", cmd_export_states}},
    };
    for (const auto& [name, info] : commands) {
        auto* sub = app.add_subcommand(name, info.first);
        sub->add_option("--config", o.config_path, "JSON config with model/train/experiment sections");
        sub->add_option("--seed", o.seed, "Seed for training and experiments");
        sub->add_option("--library", o.library, "Skill library file");
        sub->add_option("--model", o.model, "Model checkpoint");
        sub->add_option("--strategy", o.strategy, "Mixing strategy")
            ->check(CLI::IsMember({"mean", "weighted", "adecay"}));
        sub->add_option("--layer", o.layer, "Layer used for retrieval and export");
        sub->add_option("--k", o.k, "Restrict the shot schedule to one k");
        sub->add_option("--out", o.out, "Output directory");
        const Handler h = info.second;
        sub->callback([&handler, h] { handler = h; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        const Settings settings = load_settings(o);
        handler(o, settings, out);
        return 0;
    } catch (const Error& e) {
        err << json_line(e.kind(), e.what()) << "\n";
    } catch (const nlohmann::json::exception& e) {
        err << json_line("config", e.what()) << "\n";
    } catch (const std::exception& e) {
        err << json_line("internal", e.what()) << "\n";
    }
    return 1;
}

}  // namespace statesoup::cli
