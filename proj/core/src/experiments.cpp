#include "statesoup/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "statesoup/binary_format.hpp"
#include "statesoup/error.hpp"

namespace statesoup {

namespace {

enum : std::uint64_t {
    kTagSplit = 0x73706c6974,
    kTagLibrary = 0x6c6962,
    kTagRetrieval = 0x726574,
    kTagMixing = 0x6d6978,
    kTagRetrieveMix = 0x726d6978,
    kTagControl = 0x63746c,
    kTagIcl = 0x69636c,
};

constexpr std::size_t kRetrieveMixTestsPerRound = 16;

std::string corpus_kind_name(CorpusKind k) { return k == CorpusKind::Synthetic ? "synthetic" : "text-file"; }

CorpusKind corpus_kind_from(const std::string& s) {
    if (s == "synthetic") return CorpusKind::Synthetic;
    if (s == "text-file") return CorpusKind::TextFile;
    throw ConfigError("unknown corpus kind '" + s + "' (expected synthetic or text-file)");
}

StateSnapshot process_demo(const LanguageModel& model, const Demonstration& demo, const TaskSpec& task) {
    StateSnapshot s = advance(model, model.zero_state(), demo.tokens);
    s.meta.task_label = task.task_id;
    s.meta.shots = demo.k;
    s.meta.token_count = demo.tokens.size();
    return s;
}

ExampleSet mask_of(std::size_t size, std::span<const std::size_t> ids) {
    ExampleSet m(size);
    m.insert(ids);
    return m;
}

/// Picks `n` ids uniformly from `pool` without replacement.
std::vector<std::size_t> pick(std::vector<std::size_t> pool, std::size_t n, Rng& rng) {
    rng.shuffle(pool);
    pool.resize(std::min(n, pool.size()));
    return pool;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(9) << v;
    return os.str();
}

void write_csv(const std::string& path, const std::string& body, const nlohmann::json& meta) {
    binary::write_file_atomic(path + ".meta.json", meta.dump(2) + "\n");
    binary::write_file_atomic(path, body);
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

std::size_t ExperimentConfig::retrieval_layer(const ModelConfig& model) const {
    const std::size_t l = layer == kDefaultLayer ? (model.num_layers + 1) / 2 : layer;
    if (l >= model.num_layers) {
        // ceil(L / 2) equals L only for L = 1.
        if (layer == kDefaultLayer) return model.num_layers - 1;
        throw RangeError("layer " + std::to_string(l) + " out of range for " + std::to_string(model.num_layers) +
                         " layers");
    }
    return l;
}

std::vector<TaskSpec> ExperimentConfig::tasks() const {
    std::vector<TaskSpec> out;
    out.reserve(task_seeds.size());
    for (auto s : task_seeds) out.push_back(make_task(task_kind, s));
    return out;
}

void ExperimentConfig::validate() const {
    if (task_seeds.empty()) throw ConfigError("experiment needs at least one task");
    if (query_shots.empty()) throw ConfigError("query shot schedule is empty");
    for (auto k : query_shots) {
        if (k == 0) throw ConfigError("query shot counts must be >= 1");
    }
    if (states_per_task == 0 || library_shots == 0) throw ConfigError("library needs >= 1 state of >= 1 shot");
    if (queries_per_cell == 0 || n_test == 0) throw ConfigError("query and test counts must be >= 1");
    if (chunk_len == 0 || n_sequences == 0) throw ConfigError("corpus needs >= 1 sequence of >= 1 token");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"model_path", c.model_path},
                       {"task_seeds", c.task_seeds},
                       {"task_kind", to_string(c.task_kind)},
                       {"states_per_task", c.states_per_task},
                       {"library_shots", c.library_shots},
                       {"query_shots", c.query_shots},
                       {"queries_per_cell", c.queries_per_cell},
                       {"n_test", c.n_test},
                       {"chunk_len", c.chunk_len},
                       {"n_sequences", c.n_sequences},
                       {"seed", c.seed},
                       {"corpus",
                        {{"kind", corpus_kind_name(c.corpus.kind)},
                         {"seed", c.corpus.seed},
                         {"family_seed", c.corpus.family_seed},
                         {"path", c.corpus.path}}},
                       {"out_dir", c.out_dir},
                       {"state_kind", to_string(c.state_kind)},
                       {"randomized_partner", c.randomized_partner}};
    if (c.layer == kDefaultLayer) {
        j["layer"] = nullptr;
    } else {
        j["layer"] = c.layer;
    }
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    check_known_keys(j,
                     {"model_path", "task_seeds", "task_kind", "states_per_task", "library_shots", "query_shots",
                      "queries_per_cell", "n_test", "chunk_len", "n_sequences", "seed", "corpus", "out_dir", "layer",
                      "state_kind", "randomized_partner"},
                     "experiment");
    ExperimentConfig d;
    c.model_path = j.value("model_path", d.model_path);
    c.task_seeds = j.value("task_seeds", d.task_seeds);
    c.task_kind = task_kind_from_string(j.value("task_kind", to_string(d.task_kind)));
    c.states_per_task = j.value("states_per_task", d.states_per_task);
    c.library_shots = j.value("library_shots", d.library_shots);
    c.query_shots = j.value("query_shots", d.query_shots);
    c.queries_per_cell = j.value("queries_per_cell", d.queries_per_cell);
    c.n_test = j.value("n_test", d.n_test);
    c.chunk_len = j.value("chunk_len", d.chunk_len);
    c.n_sequences = j.value("n_sequences", d.n_sequences);
    c.seed = j.value("seed", d.seed);
    c.corpus = d.corpus;
    if (j.contains("corpus")) {
        const auto& jc = j.at("corpus");
        check_known_keys(jc, {"kind", "seed", "family_seed", "path"}, "corpus");
        c.corpus.kind = corpus_kind_from(jc.value("kind", std::string("synthetic")));
        c.corpus.seed = jc.value("seed", d.corpus.seed);
        c.corpus.family_seed = jc.value("family_seed", d.corpus.family_seed);
        c.corpus.path = jc.value("path", d.corpus.path);
    }
    c.out_dir = j.value("out_dir", d.out_dir);
    c.layer = j.contains("layer") && !j.at("layer").is_null() ? j.at("layer").get<std::size_t>() : kDefaultLayer;
    c.state_kind = parse_state_kind(j.value("state_kind", to_string(d.state_kind)));
    c.randomized_partner = j.value("randomized_partner", d.randomized_partner);
}

TaskSplit split_task(const TaskSpec& task, std::uint64_t seed) {
    std::vector<std::size_t> ids(task.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    Rng rng(derive_seed(seed, kTagSplit, task.seed, static_cast<std::uint64_t>(task.kind)));
    rng.shuffle(ids);
    TaskSplit s{ExampleSet(task.size()), ExampleSet(task.size())};
    const std::size_t half = task.size() / 2;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i < half) {
            s.library.insert(ids[i]);
        } else {
            s.query.insert(ids[i]);
        }
    }
    return s;
}

SkillLibrary build_library(const LanguageModel& model, const std::vector<TaskSpec>& tasks,
                           const ExperimentConfig& cfg) {
    cfg.validate();
    SkillLibrary lib(model.model_hash());
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const auto& task = tasks[ti];
        const TaskSplit split = split_task(task, cfg.seed);
        if (split.library.count() < cfg.library_shots) {
            throw RangeError("insufficient examples: task " + task.task_id + " has " +
                             std::to_string(split.library.count()) + " library pairs, needs " +
                             std::to_string(cfg.library_shots));
        }
        for (std::size_t i = 0; i < cfg.states_per_task; ++i) {
            Rng rng(derive_seed(cfg.seed, kTagLibrary, ti, i));
            const auto demo = sample_demonstrations(task, cfg.library_shots, rng, split.query);
            lib.add(process_demo(model, demo, task));
        }
    }
    return lib;
}

std::vector<RetrievalRow> run_retrieval_experiment(const LanguageModel& model, const SkillLibrary& lib,
                                                   const std::vector<TaskSpec>& tasks, const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t layer = cfg.retrieval_layer(model.config());
    std::vector<std::string> labels;
    for (const auto& e : lib.entries) labels.push_back(e.meta.task_label);

    std::vector<RetrievalRow> rows;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const auto& task = tasks[ti];
        const TaskSplit split = split_task(task, cfg.seed);
        for (std::size_t k : cfg.query_shots) {
            RetrievalRow row{task.task_id, k, cfg.queries_per_cell, 0.0, 0.0, 0.0};
            std::size_t same = 0, shuffled_same = 0;
            for (std::size_t q = 0; q < cfg.queries_per_cell; ++q) {
                Rng rng(derive_seed(cfg.seed, kTagRetrieval, ti, k, q));
                const auto demo = sample_demonstrations(task, k, rng, split.library);
                const auto res = retrieve_nearest(lib, {process_demo(model, demo, task), layer, cfg.state_kind});
                same += labels[res.index] == task.task_id;
                std::vector<std::string> perm = labels;
                rng.shuffle(perm);
                shuffled_same += perm[res.index] == task.task_id;
                row.mean_similarity += res.similarity;
            }
            const double n = static_cast<double>(cfg.queries_per_cell);
            row.same_task_rate = static_cast<double>(same) / n;
            row.shuffled_label_rate = static_cast<double>(shuffled_same) / n;
            row.mean_similarity /= n;
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<IclEvalRow> run_icl_eval(const LanguageModel& model, const std::vector<TaskSpec>& tasks,
                                     const ExperimentConfig& cfg, bool randomized_controls) {
    cfg.validate();
    std::vector<IclEvalRow> rows;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const auto& task = tasks[ti];
        const double chance = 1.0 / static_cast<double>(task.size());
        for (std::size_t k : cfg.query_shots) {
            if (k >= task.size()) {
                throw RangeError("insufficient examples: task " + task.task_id + " cannot hold " + std::to_string(k) +
                                 " shots and a test query");
            }
            IclScore score;
            for (std::size_t round = 0; score.total < cfg.n_test; ++round) {
                Rng rng(derive_seed(cfg.seed, kTagIcl, ti, k, round));
                const auto demo = sample_demonstrations(task, k, rng, ExampleSet(task.size()));
                score += eval_icl(model, process_demo(model, demo, task), task, cfg.n_test - score.total, rng,
                                  mask_of(task.size(), demo.example_ids));
            }
            rows.push_back({task.task_id, false, k, score.total, score.accuracy(), chance,
                            binomial_two_sided_p(score.correct, score.total, chance)});
            if (!randomized_controls) continue;
            IclScore control;
            for (std::size_t trial = 0; trial < cfg.n_test; ++trial) {
                const TaskSpec shuffled = randomize_labels(task, derive_seed(cfg.seed, kTagControl, ti, k, trial));
                Rng rng(derive_seed(cfg.seed, kTagIcl, kTagControl, ti, k, trial));
                const auto demo = sample_demonstrations(shuffled, k, rng, ExampleSet(task.size()));
                control += eval_icl(model, process_demo(model, demo, shuffled), shuffled, 1, rng,
                                    mask_of(task.size(), demo.example_ids));
            }
            rows.push_back({task.task_id, true, k, control.total, control.accuracy(), chance,
                            binomial_two_sided_p(control.correct, control.total, chance)});
        }
    }
    return rows;
}

std::vector<MixingRow> run_mixing_experiment(const LanguageModel& model, const std::vector<TaskSpec>& tasks,
                                             const ExperimentConfig& cfg, MixStrategy strategy) {
    cfg.validate();
    const std::size_t total = cfg.library_shots;
    for (std::size_t k : cfg.query_shots) {
        if (total % k != 0) {
            throw ConfigError("mixing shot count " + std::to_string(k) + " does not divide " + std::to_string(total));
        }
    }
    std::vector<MixingRow> rows;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const auto& task = tasks[ti];
        if (task.size() <= total) {
            throw RangeError("insufficient examples: task " + task.task_id + " cannot hold " + std::to_string(total) +
                             " demonstrations and a test query");
        }
        for (std::size_t k : cfg.query_shots) {
            MixingRow row{task.task_id, k, total / k, 0, 0.0, 0.0};
            IclScore base, soup;
            for (std::size_t round = 0; base.total < cfg.n_test; ++round) {
                Rng rng(derive_seed(cfg.seed, kTagMixing, ti, k, round));
                const auto all = sample_demonstrations(task, total, rng, ExampleSet(task.size()));
                std::vector<StateSnapshot> states;
                for (std::size_t g = 0; g < total / k; ++g) {
                    std::vector<std::size_t> ids(all.example_ids.begin() + static_cast<std::ptrdiff_t>(g * k),
                                                 all.example_ids.begin() + static_cast<std::ptrdiff_t>((g + 1) * k));
                    states.push_back(process_demo(model, format_demonstration(task, std::move(ids)), task));
                }
                const ExampleSet used = mask_of(task.size(), all.example_ids);
                const std::size_t want = cfg.n_test - base.total;
                Rng test_rng(derive_seed(cfg.seed, kTagMixing, ti, k, round, 1));
                Rng test_rng_copy = test_rng;
                base += eval_icl(model, states.front(), task, want, test_rng, used);
                MixRecipe recipe{strategy, {}};
                if (strategy == MixStrategy::Weighted) recipe.weights.assign(states.size(), 1.0);
                soup += eval_icl(model, mix(states, recipe), task, want, test_rng_copy, used);
            }
            row.n_test = base.total;
            row.baseline_accuracy = base.accuracy();
            row.soup_accuracy = soup.accuracy();
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<RetrieveMixRow> run_retrieve_and_mix_experiment(const LanguageModel& model, const SkillLibrary& lib,
                                                            const std::vector<TaskSpec>& tasks,
                                                            const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t layer = cfg.retrieval_layer(model.config());
    std::vector<RetrieveMixRow> rows;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
        const auto& task = tasks[ti];
        const TaskSplit split = split_task(task, cfg.seed);
        const std::vector<std::size_t> query_half = split.library.complement();
        for (std::size_t k : cfg.query_shots) {
            if (k + std::min(kRetrieveMixTestsPerRound, query_half.size()) > task.size()) {
                throw RangeError("insufficient examples: task " + task.task_id + " cannot hold " + std::to_string(k) +
                                 " query shots and test queries");
            }
            IclScore alone, mixed;
            std::size_t same = 0, rounds = 0;
            for (std::size_t round = 0; alone.total < cfg.n_test; ++round, ++rounds) {
                Rng rng(derive_seed(cfg.seed, kTagRetrieveMix, ti, k, round));
                const std::size_t want = std::min(kRetrieveMixTestsPerRound, cfg.n_test - alone.total);
                const auto tests = pick(query_half, want, rng);
                const ExampleSet test_mask = mask_of(task.size(), tests);
                const auto demo = sample_demonstrations(task, k, rng, test_mask);
                const StateSnapshot q = process_demo(model, demo, task);

                StateSnapshot partner;
                if (cfg.randomized_partner) {
                    const TaskSpec control = randomize_labels(task, derive_seed(cfg.seed, kTagControl, ti, round));
                    Rng crng(derive_seed(cfg.seed, kTagControl, ti, k, round));
                    partner = process_demo(model, sample_demonstrations(control, cfg.library_shots, crng, test_mask),
                                           control);
                } else {
                    const auto res = retrieve_nearest(lib, {q, layer, cfg.state_kind});
                    partner = lib.entries[res.index];
                }
                same += partner.meta.task_label == task.task_id;
                const std::vector<StateSnapshot> pair{q, partner};

                const ExampleSet not_tests = mask_of(task.size(), test_mask.complement());
                Rng eval_rng(derive_seed(cfg.seed, kTagRetrieveMix, ti, k, round, 1));
                Rng eval_rng_copy = eval_rng;
                alone += eval_icl(model, q, task, want, eval_rng, not_tests);
                mixed += eval_icl(model, mean_mix(pair), task, want, eval_rng_copy, not_tests);
            }
            const double rate = static_cast<double>(same) / static_cast<double>(rounds);
            rows.push_back({task.task_id, k, "query_only", alone.total, alone.accuracy(), rate});
            rows.push_back({task.task_id, k, "query_plus_retrieved", mixed.total, mixed.accuracy(), rate});
        }
    }
    return rows;
}

std::string to_string(SeqCondition c) {
    switch (c) {
        case SeqCondition::Sequential: return "sequential";
        case SeqCondition::SecondOnly: return "c2_only";
        case SeqCondition::MeanMix: return "mean_mix";
        case SeqCondition::ADecay: return "a_decay";
    }
    return "sequential";
}

SequentialResult run_sequential_mixing_experiment(const LanguageModel& model,
                                                  const std::vector<ChunkTriple>& corpus) {
    if (corpus.empty()) throw RangeError("sequential experiment needs at least one triple");
    SequentialResult r;
    r.losses.assign(4, {});
    for (const auto& t : corpus) {
        if (t.test.size() < 2) throw RangeError("test chunk needs at least two tokens");
        const StateSnapshot s1 = advance(model, model.zero_state(), t.c1, true);
        const StateSnapshot s12 = advance(model, s1, t.c2);
        const StateSnapshot s2 = advance(model, suffix_start(s1), t.c2, true);
        const std::vector<StateSnapshot> both{s1, s2};
        r.losses[0].push_back(sequence_loss(model, s12, t.test));
        r.losses[1].push_back(sequence_loss(model, s2, t.test));
        r.losses[2].push_back(sequence_loss(model, mean_mix(both), t.test));
        r.losses[3].push_back(sequence_loss(model, a_decay_combine(s1, s2), t.test));
    }
    const SeqCondition order[] = {SeqCondition::Sequential, SeqCondition::SecondOnly, SeqCondition::MeanMix,
                                  SeqCondition::ADecay};
    for (std::size_t c = 0; c < 4; ++c) {
        r.rows.push_back({order[c], r.losses[c].size(), mean_of(r.losses[c]), stderr_of(r.losses[c])});
    }
    return r;
}

double paired_stderr(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("paired samples differ in length");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return stderr_of(d);
}

nlohmann::json output_metadata(const LanguageModel& model, const ExperimentConfig& cfg) {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : cfg.tasks()) tasks.push_back({{"task_id", t.task_id}, {"seed", t.seed}});
    return {{"model_hash", hash_hex(model.model_hash())},
            {"model_config", model.config()},
            {"scale", "desk-scale toy model; not comparable with large pretrained models"},
            {"tasks", std::move(tasks)},
            {"experiment", cfg},
            {"retrieval_layer", cfg.retrieval_layer(model.config())},
            {"averages", "macro_avg rows are unweighted means over tasks"}};
}

std::vector<RetrievalRow> macro_average(const std::vector<RetrievalRow>& rows) {
    std::vector<RetrievalRow> out;
    std::map<std::size_t, std::size_t> index;
    std::map<std::size_t, double> counts;
    for (const auto& r : rows) {
        auto [it, fresh] = index.try_emplace(r.k, out.size());
        if (fresh) out.push_back({"macro_avg", r.k, 0, 0.0, 0.0, 0.0});
        auto& m = out[it->second];
        m.queries += r.queries;
        m.same_task_rate += r.same_task_rate;
        m.shuffled_label_rate += r.shuffled_label_rate;
        m.mean_similarity += r.mean_similarity;
        counts[r.k] += 1.0;
    }
    for (auto& m : out) {
        m.same_task_rate /= counts[m.k];
        m.shuffled_label_rate /= counts[m.k];
        m.mean_similarity /= counts[m.k];
    }
    return out;
}

std::vector<MixingRow> macro_average(const std::vector<MixingRow>& rows) {
    std::vector<MixingRow> out;
    std::map<std::size_t, std::size_t> index;
    std::map<std::size_t, double> counts;
    for (const auto& r : rows) {
        auto [it, fresh] = index.try_emplace(r.k, out.size());
        if (fresh) out.push_back({"macro_avg", r.k, r.states, 0, 0.0, 0.0});
        auto& m = out[it->second];
        m.n_test += r.n_test;
        m.baseline_accuracy += r.baseline_accuracy;
        m.soup_accuracy += r.soup_accuracy;
        counts[r.k] += 1.0;
    }
    for (auto& m : out) {
        m.baseline_accuracy /= counts[m.k];
        m.soup_accuracy /= counts[m.k];
    }
    return out;
}

std::vector<RetrieveMixRow> macro_average(const std::vector<RetrieveMixRow>& rows) {
    std::vector<RetrieveMixRow> out;
    std::map<std::pair<std::size_t, std::string>, std::size_t> index;
    std::map<std::pair<std::size_t, std::string>, double> counts;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.k, r.condition);
        auto [it, fresh] = index.try_emplace(key, out.size());
        if (fresh) out.push_back({"macro_avg", r.k, r.condition, 0, 0.0, 0.0});
        auto& m = out[it->second];
        m.n_test += r.n_test;
        m.accuracy += r.accuracy;
        m.retrieved_same_task_rate += r.retrieved_same_task_rate;
        counts[key] += 1.0;
    }
    for (auto& m : out) {
        const double c = counts[{m.k, m.condition}];
        m.accuracy /= c;
        m.retrieved_same_task_rate /= c;
    }
    return out;
}

void write_retrieval_csv(const std::vector<RetrievalRow>& rows, const nlohmann::json& meta, const std::string& path) {
    std::ostringstream os;
    os << "task_id,k,queries,same_task_rate,shuffled_label_rate,mean_similarity\n";
    auto emit = [&](const RetrievalRow& r) {
        os << r.task_id << ',' << r.k << ',' << r.queries << ',' << fmt(r.same_task_rate) << ','
           << fmt(r.shuffled_label_rate) << ',' << fmt(r.mean_similarity) << '\n';
    };
    for (const auto& r : rows) emit(r);
    for (const auto& r : macro_average(rows)) emit(r);
    write_csv(path, os.str(), meta);
}

void write_icl_csv(const std::vector<IclEvalRow>& rows, const nlohmann::json& meta, const std::string& path) {
    std::ostringstream os;
    os << "task_id,randomized,k,n_test,accuracy,chance,p_value\n";
    for (const auto& r : rows) {
        os << r.task_id << ',' << (r.randomized ? 1 : 0) << ',' << r.k << ',' << r.n_test << ',' << fmt(r.accuracy)
           << ',' << fmt(r.chance) << ',' << fmt(r.p_value) << '\n';
    }
    write_csv(path, os.str(), meta);
}

void write_mixing_csv(const std::vector<MixingRow>& rows, const nlohmann::json& meta, const std::string& path) {
    std::ostringstream os;
    os << "task_id,k,states,n_test,baseline_accuracy,soup_accuracy\n";
    auto emit = [&](const MixingRow& r) {
        os << r.task_id << ',' << r.k << ',' << r.states << ',' << r.n_test << ',' << fmt(r.baseline_accuracy) << ','
           << fmt(r.soup_accuracy) << '\n';
    };
    for (const auto& r : rows) emit(r);
    for (const auto& r : macro_average(rows)) emit(r);
    write_csv(path, os.str(), meta);
}

void write_retrieve_mix_csv(const std::vector<RetrieveMixRow>& rows, const nlohmann::json& meta,
                            const std::string& path) {
    std::ostringstream os;
    os << "task_id,k,condition,n_test,accuracy,retrieved_same_task_rate\n";
    auto emit = [&](const RetrieveMixRow& r) {
        os << r.task_id << ',' << r.k << ',' << r.condition << ',' << r.n_test << ',' << fmt(r.accuracy) << ','
           << fmt(r.retrieved_same_task_rate) << '\n';
    };
    for (const auto& r : rows) emit(r);
    for (const auto& r : macro_average(rows)) emit(r);
    write_csv(path, os.str(), meta);
}

void write_sequential_csv(const SequentialResult& result, const nlohmann::json& meta, const std::string& path) {
    std::ostringstream os;
    os << "condition,n,mean_nll,stderr\n";
    for (const auto& r : result.rows) {
        os << to_string(r.condition) << ',' << r.n << ',' << fmt(r.mean_nll) << ',' << fmt(r.stderr_nll) << '\n';
    }
    write_csv(path, os.str(), meta);
}

}  // namespace statesoup
