#include "forge/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "forge/corpus.hpp"
#include "forge/dpo/chat_shim.hpp"
#include "forge/dpo/checkpoint.hpp"
#include "forge/dpo/train.hpp"
#include "forge/error.hpp"
#include "forge/evals.hpp"
#include "forge/filter.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"
#include "forge/llm_client.hpp"
#include "forge/manifest.hpp"
#include "forge/report.hpp"
#include "forge/synth.hpp"

namespace forge::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct GlobalArgs {
    std::string out_dir = "out";
    std::string cache_dir;  // empty -> <out>/cache
    std::uint64_t seed = 0;
};

fs::path cache_dir_for(const GlobalArgs& g) {
    return g.cache_dir.empty() ? fs::path(g.out_dir) / "cache" : fs::path(g.cache_dir);
}

llm::ClientConfig subject_client_config(const GlobalArgs& g, const std::string& base_url) {
    llm::ClientConfig cfg;
    cfg.base_url = base_url;
    cfg.cache_dir = cache_dir_for(g);
    return cfg;
}

// The judge may live behind different credentials than the subject model.
llm::ClientConfig judge_client_config(const GlobalArgs& g, const std::string& base_url) {
    llm::ClientConfig cfg = subject_client_config(g, base_url);
    if (const char* key = std::getenv("FORGE_JUDGE_API_KEY"); key != nullptr && *key != '\0') {
        cfg.api_key = key;
    }
    return cfg;
}

std::string read_optional_file(const std::string& path) {
    return path.empty() ? std::string() : read_file(path);
}

void add_input_hash(manifest::RunManifest& m, const std::string& path) {
    if (!path.empty()) m.input_hashes[path] = sha256_file(path);
}

// Stage everything, hash, rename into place, then record the manifest beside
// the outputs. The manifest is written last: its presence marks a completed
// run.
void finish_run(manifest::OutputStager& stager, manifest::RunManifest& m) {
    m.output_hashes = stager.hashes();
    m.run_id = manifest::make_run_id(m.subcommand, m.started, m.config_echo);
    m.tool_version = manifest::kToolVersion;
    stager.commit();
    m.finished = now_iso8601();
    manifest::save_manifest(m, stager.out_dir() / "run_manifest.json");
}

json issues_json(const std::vector<synth::ItemIssue>& issues) {
    json arr = json::array();
    for (const auto& issue : issues) {
        arr.push_back(json{{"index", issue.index},
                           {"origin_post_id", issue.origin_post_id},
                           {"detail", issue.detail}});
    }
    return arr;
}

// One probe prompt per non-empty line.
std::vector<std::string> load_probes(const std::string& path) {
    if (path.empty()) return evals::probe_prompts();
    std::vector<std::string> probes;
    std::string text = read_file(path);
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        std::string line = text.substr(start, end == std::string::npos ? end : end - start);
        if (!corpus::trim(line).empty()) probes.push_back(corpus::trim(line));
        if (end == std::string::npos) break;
        start = end + 1;
    }
    if (probes.empty()) throw DataError("probe file " + path + " has no prompts");
    return probes;
}

evals::ScoringTable load_table_or_default(const std::string& path) {
    return path.empty() ? evals::default_scoring_table() : evals::load_scoring_table(path);
}

// ---------------------------------------------------------------------------
// filter

struct FilterArgs {
    std::string in;
    std::string ideology;
    int threshold = 2;
    std::string model;
    std::string base_url;
    std::string format = "generic";
    std::string malformed = "fail";
    std::string examples_file;
};

void run_filter(const GlobalArgs& g, const FilterArgs& a) {
    auto started = now_iso8601();
    corpus::LoadReport load_report;
    auto posts = corpus::load_posts(a.in, corpus::input_format_from_string(a.format),
                                    a.malformed == "skip" ? corpus::MalformedPolicy::skip
                                                          : corpus::MalformedPolicy::fail,
                                    &load_report);
    for (const auto& w : load_report.warnings) std::cerr << "warning: " << w << "\n";
    auto deduped = corpus::dedup_posts(posts);

    filter::FilterOptions opts;
    opts.ideology = corpus::ideology_from_string(a.ideology);
    opts.threshold = a.threshold;
    opts.model = a.model;
    opts.examples_text = read_optional_file(a.examples_file);
    opts.seed_salt = g.seed;

    llm::LlmClient client(subject_client_config(g, a.base_url));
    auto output = filter::filter_corpus(deduped, opts, client);

    manifest::RunManifest m;
    m.subcommand = "filter";
    m.started = started;
    m.config_echo = {{"in", a.in},
                     {"ideology", a.ideology},
                     {"threshold", std::to_string(a.threshold)},
                     {"model", a.model},
                     {"base_url", a.base_url},
                     {"format", a.format},
                     {"malformed", a.malformed},
                     {"examples", a.examples_file},
                     {"seed", std::to_string(g.seed)}};
    add_input_hash(m, a.in);
    add_input_hash(m, a.examples_file);

    manifest::OutputStager stager(g.out_dir);
    corpus::write_dataset(output.verdicts, stager.path_for("verdicts.jsonl"), "filter-verdicts",
                          m.config_echo);
    corpus::write_dataset(output.kept, stager.path_for("kept.jsonl"), "filter-kept",
                          m.config_echo);
    finish_run(stager, m);

    std::cout << "filter: kept " << output.kept.size() << " of " << deduped.size()
              << " posts (threshold " << a.threshold << ", " << posts.size() - deduped.size()
              << " duplicates dropped)\n";
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::string phase;
    std::string in;
    std::string ideology;
    std::string model;
    std::string base_url;
    double temperature = llm::kGenerationTemperature;
    int max_tokens = 512;
    std::string examples_file;
    std::string templates_dir;
    std::string format = "generic";
    bool dump_templates = false;
};

void run_synth(const GlobalArgs& g, const SynthArgs& a) {
    auto started = now_iso8601();

    if (a.dump_templates) {
        manifest::RunManifest m;
        m.subcommand = "synth";
        m.started = started;
        m.config_echo = {{"dump_templates", "true"}};
        manifest::OutputStager stager(g.out_dir);
        synth::dump_templates(stager.path_for("templates"));
        finish_run(stager, m);
        std::cout << "synth: wrote default templates to "
                  << (fs::path(g.out_dir) / "templates").string() << "\n";
        return;
    }

    if (a.phase != "base" && a.phase != "synthetic" && a.phase != "preference") {
        throw UsageError("invalid phase '" + a.phase + "' (expected base|synthetic|preference)");
    }
    if (a.in.empty()) throw UsageError("--in is required");
    if (a.ideology.empty()) throw UsageError("--ideology is required");
    if (a.model.empty()) throw UsageError("--model is required");
    if (a.base_url.empty()) throw UsageError("--base-url is required");

    synth::PromptTemplates templates = a.templates_dir.empty()
                                           ? synth::default_templates()
                                           : synth::load_templates(a.templates_dir);
    synth::GenOptions opts;
    opts.ideology = corpus::ideology_from_string(a.ideology);
    opts.model = a.model;
    opts.temperature = a.temperature;
    opts.max_tokens = a.max_tokens;
    opts.examples_text = read_optional_file(a.examples_file);
    opts.templates = &templates;
    opts.seed_salt = g.seed;

    llm::LlmClient client(subject_client_config(g, a.base_url));

    manifest::RunManifest m;
    m.subcommand = "synth";
    m.started = started;
    m.config_echo = {{"phase", a.phase},
                     {"in", a.in},
                     {"ideology", a.ideology},
                     {"model", a.model},
                     {"base_url", a.base_url},
                     {"temperature", format_double(a.temperature)},
                     {"max_tokens", std::to_string(a.max_tokens)},
                     {"examples", a.examples_file},
                     {"templates_dir", a.templates_dir},
                     {"seed", std::to_string(g.seed)}};
    add_input_hash(m, a.in);
    add_input_hash(m, a.examples_file);

    manifest::OutputStager stager(g.out_dir);
    synth::SynthReport report;
    std::size_t produced = 0;
    std::size_t consumed = 0;

    if (a.phase == "base") {
        auto posts = corpus::load_posts(a.in, corpus::input_format_from_string(a.format));
        consumed = posts.size();
        auto pairs = synth::build_base_dataset(posts, opts, client, &report);
        produced = pairs.size();
        corpus::write_dataset(pairs, stager.path_for("pairs_base.jsonl"), "synth-base",
                              m.config_echo);
    } else if (a.phase == "synthetic") {
        auto base = corpus::read_dataset<corpus::InstructionPair>(a.in);
        consumed = base.size();
        auto pairs = synth::build_synthetic_dataset(base, opts, client, &report);
        produced = pairs.size();
        corpus::write_dataset(pairs, stager.path_for("pairs_synthetic.jsonl"), "synth-synthetic",
                              m.config_echo);
    } else {
        auto base = corpus::read_dataset<corpus::InstructionPair>(a.in);
        consumed = base.size();
        auto triplets = synth::build_preference_dataset(base, opts, client, &report);
        produced = triplets.size();
        corpus::write_dataset(triplets, stager.path_for("triplets.jsonl"), "synth-preference",
                              m.config_echo);
    }

    json report_json{{"phase", a.phase},
                     {"consumed", consumed},
                     {"produced", produced},
                     {"failures", issues_json(report.failures)},
                     {"flags", issues_json(report.flags)}};
    atomic_write_file(stager.path_for("synth_report.json"), report_json.dump(2) + "\n");
    finish_run(stager, m);

    std::cout << "synth " << a.phase << ": " << produced << " of " << consumed << " items ("
              << report.failures.size() << " failures, " << report.flags.size() << " flags)\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string triplets;
    int steps = 0;
    int batch = 64;
    double beta = 0.1;
    double lr = 0.0003;
    double weight_decay = 0.01;
    int rank = 16;
    double alpha = 32.0;
    int eval_every = 50;
    std::string base_model;
    int vocab_size = 64;
    int embed_dim = 16;
    int hidden_dim = 32;
    int max_new_tokens = 64;
    std::string scoring_table;
    std::string probes_file;
    std::string judge_url;
    std::string judge_model;
    bool no_instruct_baseline = false;
    bool no_eval = false;
};

void run_train(const GlobalArgs& g, const TrainArgs& a) {
    auto started = now_iso8601();
    if (a.judge_url.empty() != a.judge_model.empty()) {
        throw UsageError("--judge-url and --judge-model must be given together");
    }

    auto triplets = corpus::read_dataset<corpus::PreferenceTriplet>(a.triplets);

    dpo::ToyLM base;
    if (!a.base_model.empty()) {
        base = dpo::load_model(a.base_model);
    } else {
        std::vector<std::string> texts;
        texts.reserve(triplets.size() * 3);
        for (const auto& t : triplets) {
            texts.push_back(t.instruction);
            texts.push_back(t.chosen);
            texts.push_back(t.rejected);
        }
        base = dpo::make_toy_lm(dpo::build_vocab(texts, a.vocab_size), a.embed_dim, a.hidden_dim,
                                g.seed);
    }

    dpo::DpoConfig cfg;
    cfg.beta = a.beta;
    cfg.lr = a.lr;
    cfg.weight_decay = a.weight_decay;
    cfg.batch = a.batch;
    cfg.steps = a.steps;
    cfg.seed = g.seed;
    cfg.eval_every = a.eval_every;
    cfg.lora_rank = a.rank;
    cfg.lora_alpha = a.alpha;

    manifest::RunManifest m;
    m.subcommand = "train";
    m.started = started;
    m.config_echo = {{"triplets", a.triplets},
                     {"steps", std::to_string(a.steps)},
                     {"batch", std::to_string(a.batch)},
                     {"beta", format_double(a.beta)},
                     {"lr", format_double(a.lr)},
                     {"weight_decay", format_double(a.weight_decay)},
                     {"rank", std::to_string(a.rank)},
                     {"alpha", format_double(a.alpha)},
                     {"eval_every", std::to_string(a.eval_every)},
                     {"base_model", a.base_model},
                     {"vocab_size", std::to_string(a.vocab_size)},
                     {"embed_dim", std::to_string(a.embed_dim)},
                     {"hidden_dim", std::to_string(a.hidden_dim)},
                     {"scoring_table", a.scoring_table},
                     {"probes", a.probes_file},
                     {"judge_url", a.judge_url},
                     {"judge_model", a.judge_model},
                     {"objective", a.no_instruct_baseline ? "ce" : "dpo"},
                     {"eval", a.no_eval ? "off" : "on"},
                     {"seed", std::to_string(g.seed)}};
    add_input_hash(m, a.triplets);
    add_input_hash(m, a.base_model);
    add_input_hash(m, a.scoring_table);
    add_input_hash(m, a.probes_file);

    evals::ScoringTable table = load_table_or_default(a.scoring_table);
    auto probes = load_probes(a.probes_file);
    std::string base_digest = dpo::model_digest(base);

    std::unique_ptr<llm::LlmClient> judge_client;
    std::unique_ptr<llm::LlmChatEndpoint> judge;
    if (!a.judge_url.empty()) {
        judge_client =
            std::make_unique<llm::LlmClient>(judge_client_config(g, a.judge_url));
        judge = std::make_unique<llm::LlmChatEndpoint>(*judge_client, a.judge_model,
                                                       llm::kJudgeTemperature, 8);
    }

    manifest::OutputStager stager(g.out_dir);
    dpo::ToyChatEndpoint shim(base, {}, a.max_new_tokens);
    std::vector<evals::CompassResult> compass_results;
    std::vector<evals::ProbeEvalResult> probe_results;
    std::vector<evals::TranscriptEntry> transcript;
    std::vector<evals::JudgeScore> judge_scores;

    dpo::CheckpointHook hook = [&](long step, const dpo::ToyLM& hook_base,
                                   const std::vector<dpo::LoraAdapter>& adapters) {
        std::string id = dpo::checkpoint_id_for_step(step);
        dpo::Checkpoint ckpt;
        ckpt.step = step;
        ckpt.config_echo = m.config_echo;
        ckpt.base_digest = base_digest;
        ckpt.vocab_tokens = hook_base.vocab.tokens;
        ckpt.adapters = adapters;
        dpo::save_checkpoint(ckpt, stager.path_for("checkpoints/" + id + ".json"));
        if (a.no_eval) return;

        shim.set_adapters(adapters);
        auto compass = evals::run_compass_eval(shim, table, id, &transcript);
        if (compass.degraded) {
            std::cerr << "warning: " << id << ": compass result degraded (abstention "
                      << format_double(compass.abstain_fraction) << ")\n";
        }
        compass_results.push_back(std::move(compass));
        if (judge != nullptr) {
            auto probe = evals::run_probe_eval(shim, *judge, id, probes);
            for (int prompt_id : probe.failed_prompt_ids) {
                std::cerr << "warning: " << id << ": probe " << prompt_id << " not scored\n";
            }
            judge_scores.insert(judge_scores.end(), probe.scores.begin(), probe.scores.end());
            probe_results.push_back(std::move(probe));
        }
    };

    dpo::TrainResult result;
    if (a.no_instruct_baseline) {
        // The no-instruction-tuning baseline: plain next-token CE on the raw
        // preferred texts, same adapter setup and step budget.
        std::vector<std::string> texts;
        texts.reserve(triplets.size());
        for (const auto& t : triplets) texts.push_back(t.chosen);
        result = dpo::train_ce_baseline(texts, base, cfg, hook);
    } else {
        result = dpo::train(triplets, base, cfg, hook);
    }

    dpo::save_model(base, stager.path_for("model.json"));
    atomic_write_file(stager.path_for("metrics.csv"), dpo::metrics_csv(result.metrics));
    if (!a.no_eval) {
        auto compass_rows = evals::compass_trajectory(compass_results);
        atomic_write_file(stager.path_for("compass_trajectory.csv"),
                          evals::compass_trajectory_csv(compass_rows));
        corpus::write_dataset(transcript, stager.path_for("quiz_transcript.jsonl"),
                              "train-quiz-transcript", m.config_echo);
        if (judge != nullptr) {
            auto score_rows = evals::score_trajectory(probe_results);
            atomic_write_file(stager.path_for("score_trajectory.csv"),
                              evals::score_trajectory_csv(score_rows));
            corpus::write_dataset(judge_scores, stager.path_for("judge_scores.jsonl"),
                                  "train-judge-scores", m.config_echo);
        }
    }
    finish_run(stager, m);

    const auto& last = result.metrics.back();
    std::cout << "train: " << (a.no_instruct_baseline ? "ce" : "dpo") << " for " << a.steps
              << " steps, final loss " << format_double(last.loss) << ", mean margin "
              << format_double(last.mean_margin) << ", batch accuracy "
              << format_double(last.pref_accuracy) << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string metric = "both";
    std::string checkpoint;
    std::string base_model;
    std::string base_url;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 256;
    int max_new_tokens = 64;
    std::string checkpoint_id;
    std::string scoring_table;
    std::string probes_file;
    std::string judge_url;
    std::string judge_model;
};

void run_eval(const GlobalArgs& g, const EvalArgs& a) {
    auto started = now_iso8601();
    if (a.metric != "compass" && a.metric != "probes" && a.metric != "both") {
        throw UsageError("invalid metric '" + a.metric + "' (expected compass|probes|both)");
    }
    bool want_compass = a.metric != "probes";
    bool want_probes = a.metric != "compass";

    bool toy = !a.checkpoint.empty();
    if (toy && a.base_model.empty()) {
        throw UsageError("--checkpoint requires --base-model");
    }
    if (!toy && (a.base_url.empty() || a.model.empty())) {
        throw UsageError("eval needs either --checkpoint + --base-model or --base-url + --model");
    }

    std::string checkpoint_id = a.checkpoint_id;
    std::unique_ptr<llm::LlmClient> subject_client;
    std::unique_ptr<ChatEndpoint> subject;
    if (toy) {
        dpo::ToyLM base = dpo::load_model(a.base_model);
        dpo::Checkpoint ckpt = dpo::load_checkpoint(a.checkpoint);
        if (ckpt.base_digest != dpo::model_digest(base)) {
            throw DataError("checkpoint " + a.checkpoint + " was trained on a different base model");
        }
        if (checkpoint_id.empty()) checkpoint_id = dpo::checkpoint_id_for_step(ckpt.step);
        subject = std::make_unique<dpo::ToyChatEndpoint>(std::move(base), std::move(ckpt.adapters),
                                                         a.max_new_tokens);
    } else {
        subject_client = std::make_unique<llm::LlmClient>(subject_client_config(g, a.base_url));
        subject = std::make_unique<llm::LlmChatEndpoint>(*subject_client, a.model, a.temperature,
                                                         a.max_tokens);
        if (checkpoint_id.empty()) checkpoint_id = "checkpoint-0";
    }

    std::unique_ptr<llm::LlmClient> judge_client;
    std::unique_ptr<llm::LlmChatEndpoint> judge;
    if (want_probes) {
        if (a.judge_url.empty() || a.judge_model.empty()) {
            throw UsageError("probe scoring needs --judge-url and --judge-model");
        }
        judge_client = std::make_unique<llm::LlmClient>(judge_client_config(g, a.judge_url));
        judge = std::make_unique<llm::LlmChatEndpoint>(*judge_client, a.judge_model,
                                                       llm::kJudgeTemperature, 8);
    }

    manifest::RunManifest m;
    m.subcommand = "eval";
    m.started = started;
    m.config_echo = {{"metric", a.metric},
                     {"checkpoint", a.checkpoint},
                     {"base_model", a.base_model},
                     {"base_url", a.base_url},
                     {"model", a.model},
                     {"temperature", format_double(a.temperature)},
                     {"checkpoint_id", checkpoint_id},
                     {"scoring_table", a.scoring_table},
                     {"probes", a.probes_file},
                     {"judge_url", a.judge_url},
                     {"judge_model", a.judge_model},
                     {"seed", std::to_string(g.seed)}};
    add_input_hash(m, a.checkpoint);
    add_input_hash(m, a.base_model);
    add_input_hash(m, a.scoring_table);
    add_input_hash(m, a.probes_file);

    manifest::OutputStager stager(g.out_dir);

    if (want_compass) {
        evals::ScoringTable table = load_table_or_default(a.scoring_table);
        std::vector<evals::TranscriptEntry> transcript;
        auto compass = evals::run_compass_eval(*subject, table, checkpoint_id, &transcript);
        if (compass.degraded) {
            std::cerr << "warning: compass result degraded (abstention "
                      << format_double(compass.abstain_fraction) << ")\n";
        }
        json cj{{"checkpoint_id", compass.checkpoint_id},
                {"x", compass.x},
                {"y", compass.y},
                {"abstain_fraction", compass.abstain_fraction},
                {"degraded", compass.degraded}};
        atomic_write_file(stager.path_for("compass_result.json"), cj.dump(2) + "\n");
        corpus::write_dataset(transcript, stager.path_for("quiz_transcript.jsonl"),
                              "eval-quiz-transcript", m.config_echo);
        std::vector<evals::CompassResult> one{compass};
        atomic_write_file(stager.path_for("compass_trajectory.csv"),
                          evals::compass_trajectory_csv(evals::compass_trajectory(one)));
        std::cout << "eval compass: x=" << format_double(compass.x)
                  << " y=" << format_double(compass.y) << " abstain="
                  << format_double(compass.abstain_fraction) << "\n";
    }

    if (want_probes) {
        auto probes = load_probes(a.probes_file);
        auto probe = evals::run_probe_eval(*subject, *judge, checkpoint_id, probes);
        for (int prompt_id : probe.failed_prompt_ids) {
            std::cerr << "warning: probe " << prompt_id << " not scored\n";
        }
        corpus::write_dataset(probe.scores, stager.path_for("judge_scores.jsonl"),
                              "eval-judge-scores", m.config_echo);
        std::vector<evals::ProbeEvalResult> one{probe};
        atomic_write_file(stager.path_for("score_trajectory.csv"),
                          evals::score_trajectory_csv(evals::score_trajectory(one)));
        std::cout << "eval probes: average " << format_double(probe.average) << " over "
                  << probe.n_scored << " of " << probes.size() << " probes\n";
    }

    finish_run(stager, m);
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
    std::string compass_csv;
    std::string scores_csv;
    std::string judge_scores;
};

void run_report(const GlobalArgs& g, const ReportArgs& a) {
    auto started = now_iso8601();
    if (a.compass_csv.empty() && a.scores_csv.empty() && a.judge_scores.empty()) {
        throw UsageError("report needs at least one of --compass, --scores, --judge-scores");
    }

    std::vector<evals::CompassTrajectoryRow> compass_rows;
    if (!a.compass_csv.empty()) {
        compass_rows = evals::parse_compass_trajectory_csv(read_file(a.compass_csv));
    }
    std::vector<evals::ScoreTrajectoryRow> score_rows;
    if (!a.scores_csv.empty()) {
        score_rows = evals::parse_score_trajectory_csv(read_file(a.scores_csv));
    }
    std::vector<report::ProbeSeries> probe_rows;
    if (!a.judge_scores.empty()) {
        auto scores = corpus::read_dataset<evals::JudgeScore>(a.judge_scores);
        probe_rows = report::probe_series(scores);
    }

    manifest::RunManifest m;
    m.subcommand = "report";
    m.started = started;
    m.config_echo = {{"compass", a.compass_csv},
                     {"scores", a.scores_csv},
                     {"judge_scores", a.judge_scores},
                     {"seed", std::to_string(g.seed)}};
    add_input_hash(m, a.compass_csv);
    add_input_hash(m, a.scores_csv);
    add_input_hash(m, a.judge_scores);

    manifest::OutputStager stager(g.out_dir);
    if (!a.compass_csv.empty()) {
        if (compass_rows.empty()) std::cerr << "warning: compass trajectory is empty\n";
        atomic_write_file(stager.path_for("compass.svg"), report::compass_svg(compass_rows));
    }
    if (!a.scores_csv.empty() || !a.judge_scores.empty()) {
        if (score_rows.empty() && probe_rows.empty()) {
            std::cerr << "warning: score trajectory is empty\n";
        }
        atomic_write_file(stager.path_for("scores.svg"),
                          report::score_svg(probe_rows, score_rows));
    }
    atomic_write_file(stager.path_for("summary.csv"),
                      report::summary_csv(compass_rows, score_rows));
    finish_run(stager, m);

    std::cout << "report: wrote plots and summary to " << g.out_dir << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"desk-scale ideological fine-tuning pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", manifest::kToolVersion);
    app.set_config("--config", "", "key=value config file; flags override file values");

    GlobalArgs g;
    app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
    app.add_option("--cache-dir", g.cache_dir, "LLM response cache (default <out>/cache)");
    app.add_option("--seed", g.seed, "global random seed")->capture_default_str();

    FilterArgs fa;
    auto* filter_cmd =
        app.add_subcommand("filter", "score posts with the LLM judge, keep on-ideology ones");
    filter_cmd->add_option("--in", fa.in, "posts JSONL")->required();
    filter_cmd->add_option("--ideology", fa.ideology, "left|right")
        ->required()
        ->check(CLI::IsMember({"left", "right"}));
    filter_cmd->add_option("--threshold", fa.threshold, "keep labels >= this (1..3)")
        ->capture_default_str()
        ->check(CLI::Range(1, 3));
    filter_cmd->add_option("--model", fa.model, "judge model name")->required();
    filter_cmd->add_option("--base-url", fa.base_url, "chat completions endpoint")->required();
    filter_cmd->add_option("--format", fa.format, "input format")
        ->capture_default_str()
        ->check(CLI::IsMember({"generic", "truth_social", "reddit_politosphere"}));
    filter_cmd->add_option("--malformed", fa.malformed, "skip|fail on malformed lines")
        ->capture_default_str()
        ->check(CLI::IsMember({"skip", "fail"}));
    filter_cmd->add_option("--examples", fa.examples_file, "few-shot examples text file");
    filter_cmd->callback([&] { run_filter(g, fa); });

    SynthArgs sa;
    auto* synth_cmd = app.add_subcommand("synth", "generate instruction/preference datasets");
    synth_cmd->add_option("--phase", sa.phase, "base|synthetic|preference");
    synth_cmd->add_option("--in", sa.in, "posts JSONL (base) or pairs JSONL (others)");
    synth_cmd->add_option("--ideology", sa.ideology, "left|right")
        ->check(CLI::IsMember({"left", "right"}));
    synth_cmd->add_option("--model", sa.model, "generation model name");
    synth_cmd->add_option("--base-url", sa.base_url, "chat completions endpoint");
    synth_cmd->add_option("--temperature", sa.temperature)->capture_default_str();
    synth_cmd->add_option("--max-tokens", sa.max_tokens)->capture_default_str();
    synth_cmd->add_option("--examples", sa.examples_file, "few-shot examples text file");
    synth_cmd->add_option("--templates-dir", sa.templates_dir, "prompt template overrides");
    synth_cmd->add_option("--format", sa.format, "posts input format (base phase)")
        ->capture_default_str()
        ->check(CLI::IsMember({"generic", "truth_social", "reddit_politosphere"}));
    synth_cmd->add_flag("--dump-templates", sa.dump_templates,
                        "write the default templates to <out>/templates and exit");
    synth_cmd->callback([&] { run_synth(g, sa); });

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "DPO-tune LoRA adapters on the toy model");
    train_cmd->add_option("--triplets", ta.triplets, "preference triplet JSONL")->required();
    train_cmd->add_option("--steps", ta.steps, "optimizer steps")
        ->required()
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", ta.batch)->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--beta", ta.beta)->capture_default_str();
    train_cmd->add_option("--lr", ta.lr)->capture_default_str();
    train_cmd->add_option("--weight-decay", ta.weight_decay)->capture_default_str();
    train_cmd->add_option("--rank", ta.rank)->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--alpha", ta.alpha)->capture_default_str();
    train_cmd->add_option("--eval-every", ta.eval_every)
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--base-model", ta.base_model, "existing toy model JSON");
    train_cmd->add_option("--vocab-size", ta.vocab_size)->capture_default_str();
    train_cmd->add_option("--embed-dim", ta.embed_dim)->capture_default_str();
    train_cmd->add_option("--hidden-dim", ta.hidden_dim)->capture_default_str();
    train_cmd->add_option("--max-new-tokens", ta.max_new_tokens)->capture_default_str();
    train_cmd->add_option("--scoring-table", ta.scoring_table, "compass table JSON");
    train_cmd->add_option("--probes", ta.probes_file, "probe prompts, one per line");
    train_cmd->add_option("--judge-url", ta.judge_url, "judge endpoint for probe scoring");
    train_cmd->add_option("--judge-model", ta.judge_model);
    train_cmd->add_flag("--no-instruct-baseline", ta.no_instruct_baseline,
                        "train plain next-token CE on raw preferred text");
    train_cmd->add_flag("--no-eval", ta.no_eval, "skip checkpoint evals (still saves adapters)");
    train_cmd->callback([&] { run_train(g, ta); });

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "run compass/probe evals against an endpoint");
    eval_cmd->add_option("--metric", ea.metric, "compass|probes|both")
        ->capture_default_str()
        ->check(CLI::IsMember({"compass", "probes", "both"}));
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "adapter checkpoint JSON (toy model)");
    eval_cmd->add_option("--base-model", ea.base_model, "toy model JSON for --checkpoint");
    eval_cmd->add_option("--base-url", ea.base_url, "remote subject endpoint");
    eval_cmd->add_option("--model", ea.model, "remote subject model name");
    eval_cmd->add_option("--temperature", ea.temperature, "remote subject sampling temperature")
        ->capture_default_str();
    eval_cmd->add_option("--max-tokens", ea.max_tokens)->capture_default_str();
    eval_cmd->add_option("--max-new-tokens", ea.max_new_tokens, "toy subject reply budget")
        ->capture_default_str();
    eval_cmd->add_option("--checkpoint-id", ea.checkpoint_id, "label for trajectory rows");
    eval_cmd->add_option("--scoring-table", ea.scoring_table, "compass table JSON");
    eval_cmd->add_option("--probes", ea.probes_file, "probe prompts, one per line");
    eval_cmd->add_option("--judge-url", ea.judge_url);
    eval_cmd->add_option("--judge-model", ea.judge_model);
    eval_cmd->callback([&] { run_eval(g, ea); });

    ReportArgs ra;
    auto* report_cmd = app.add_subcommand("report", "render SVG plots and a summary table");
    report_cmd->add_option("--compass", ra.compass_csv, "compass trajectory CSV");
    report_cmd->add_option("--scores", ra.scores_csv, "score trajectory CSV");
    report_cmd->add_option("--judge-scores", ra.judge_scores, "judge score JSONL");
    report_cmd->callback([&] { run_report(g, ra); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitOk;
}

}  // namespace forge::cli
