// Acceptance gate: one self-contained check per shipped guarantee, one
// PASS/FAIL line each, nonzero exit when anything fails. Tolerances and time
// budgets are pinned here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/cli.hpp"
#include "forge/corpus.hpp"
#include "forge/dpo/train.hpp"
#include "forge/evals.hpp"
#include "forge/filter.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"
#include "forge/llm_client.hpp"
#include "forge/manifest.hpp"
#include "support/helpers.hpp"
#include "support/test_server.hpp"

using namespace forge;
namespace fs = std::filesystem;

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kLossMargin2 = 0.5981388693815918;  // -ln sigmoid(0.1 * 2.0)

int failures = 0;

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void report(int criterion, bool ok, const std::string& detail) {
    if (!ok) ++failures;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << ": " << detail << "\n";
}

void run_criterion(int criterion, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        auto [ok, detail] = body();
        report(criterion, ok, detail);
    } catch (const std::exception& e) {
        report(criterion, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// Shared fixture: preference depends on the instruction marker ("xxxx"
// prompts prefer the R-text, "yyyy" prompts the L-text), so only an objective
// that conditions on the prompt can separate held-out items.

std::vector<corpus::PreferenceTriplet> conditional_triplets(int n, int start) {
    std::vector<corpus::PreferenceTriplet> out;
    const std::string right_text = "RRRRRRRRRR";
    const std::string left_text = "LLLLLLLLLL";
    for (int i = start; i < start + n; ++i) {
        bool even = i % 2 == 0;
        corpus::PreferenceTriplet t;
        t.instruction = (even ? std::string("xxxx q") : std::string("yyyy q")) + std::to_string(i);
        t.chosen = even ? right_text : left_text;
        t.rejected = even ? left_text : right_text;
        t.origin_post_id = "t" + std::to_string(i);
        t.ideology = even ? corpus::Ideology::right : corpus::Ideology::left;
        out.push_back(std::move(t));
    }
    return out;
}

dpo::ToyLM fixture_model(const std::vector<corpus::PreferenceTriplet>& triplets, int vocab, int d,
                         int h, std::uint64_t seed) {
    std::vector<std::string> texts;
    texts.reserve(triplets.size() * 3);
    for (const auto& t : triplets) {
        texts.push_back(t.instruction);
        texts.push_back(t.chosen);
        texts.push_back(t.rejected);
    }
    return dpo::make_toy_lm(dpo::build_vocab(texts, vocab), d, h, seed);
}

dpo::DpoConfig fixture_config(std::uint64_t seed) {
    dpo::DpoConfig cfg;
    cfg.steps = 2000;
    cfg.batch = 64;
    cfg.lr = 0.0003;
    cfg.seed = seed;
    cfg.eval_every = 500;
    cfg.lora_rank = 16;
    cfg.lora_alpha = 32.0;
    return cfg;
}

// ---------------------------------------------------------------------------
// criteria 1-6: optimizer and LoRA math

void criterion_1() {
    run_criterion(1, [] {
        Timer timer;
        auto triplets = conditional_triplets(256, 0);
        auto base = fixture_model(triplets, 32, 8, 16, 1);
        auto cfg = fixture_config(1);
        cfg.steps = 0;
        auto result = dpo::train(triplets, base, cfg);
        double loss0 = result.metrics.at(0).loss;
        double err = std::abs(loss0 - kLn2);
        bool ok = err <= 1e-9 && timer.ms() < 1000.0;
        return std::pair{ok, "step-0 DPO loss " + fmt(loss0) + " within 1e-9 of ln 2 (err " +
                                 fmt(err) + ", " + fmt(timer.ms()) + " ms, budget 1000)"};
    });
}

void criterion_2() {
    run_criterion(2, [] {
        Timer timer;
        dpo::Rng seeds(42);
        double worst = 0.0;
        for (int instance = 0; instance < 20; ++instance) {
            std::vector<std::string> texts{"abcd efg", "hij klm nop", "qrs tuv"};
            auto base = dpo::make_toy_lm(dpo::build_vocab(texts, 8), 4, 6, seeds.next());
            dpo::Rng rng(seeds.next());
            auto adapters = dpo::init_adapters(base, 2, 4.0, rng);
            for (auto& ad : adapters) {
                for (auto& x : ad.a.data) x = rng.uniform(-0.2, 0.2);
                for (auto& x : ad.b.data) x = rng.uniform(-0.2, 0.2);
            }
            auto make_text = [&](int len) {
                std::string s;
                for (int k = 0; k < len; ++k)
                    s += static_cast<char>('a' + static_cast<int>(rng.below(26)));
                return s;
            };
            std::vector<corpus::PreferenceTriplet> triplets;
            for (int t = 0; t < 3; ++t) {
                corpus::PreferenceTriplet trip;
                trip.instruction = make_text(static_cast<int>(rng.below(6)));
                trip.chosen = make_text(2 + static_cast<int>(rng.below(5)));
                do {
                    trip.rejected = make_text(2 + static_cast<int>(rng.below(5)));
                } while (trip.rejected == trip.chosen);
                trip.origin_post_id = "fd" + std::to_string(t);
                triplets.push_back(std::move(trip));
            }
            worst = std::max(worst, dpo::fd_check(base, adapters, base, triplets, 0.1, 1e-5));
        }
        bool ok = worst <= 1e-5 && timer.ms() < 10000.0;
        return std::pair{ok, "max gradient error " + fmt(worst) +
                                 " <= 1e-5 over 20 random instances (eps 1e-5, " +
                                 fmt(timer.ms()) + " ms, budget 10000)"};
    });
}

void criterion_3() {
    run_criterion(3, [] {
        std::vector<double> margins{2.0};
        double loss = dpo::dpo_loss_from_margins(margins, 0.1);
        double err = std::abs(loss - kLossMargin2);
        return std::pair{err <= 1e-6, "single-triplet loss at beta 0.1, margin 2.0 is " +
                                          fmt(loss) + " (expected 0.598139, err " + fmt(err) +
                                          ", tolerance 1e-6)"};
    });
}

void criterion_4() {
    run_criterion(4, [] {
        Timer timer;
        auto triplets = conditional_triplets(8, 0);
        auto base = fixture_model(triplets, 32, 8, 16, 7);
        dpo::Rng rng(3);
        auto b0_adapters = dpo::init_adapters(base, 16, 32.0, rng);  // B = 0
        auto live_adapters = b0_adapters;
        for (auto& ad : live_adapters) {
            for (auto& x : ad.a.data) x = rng.uniform(-0.2, 0.2);
            for (auto& x : ad.b.data) x = rng.uniform(-0.2, 0.2);
        }
        auto merged = dpo::merge_lora(base, live_adapters);

        auto make_text = [&](int len) {
            std::string s;
            for (int k = 0; k < len; ++k) {
                s += (rng.below(2) == 0 ? 'R' : 'L');
                if (k % 4 == 3) s += ' ';
            }
            return s;
        };
        double worst_b0 = 0.0;
        double worst_merge = 0.0;
        for (int i = 0; i < 100; ++i) {
            std::string prompt = make_text(static_cast<int>(rng.below(8)));
            std::string completion = make_text(1 + static_cast<int>(rng.below(8)));
            double base_lp = dpo::seq_logprob(base, {}, prompt, completion);
            double b0_lp = dpo::seq_logprob(base, b0_adapters, prompt, completion);
            double fact_lp = dpo::seq_logprob(base, live_adapters, prompt, completion);
            double merged_lp = dpo::seq_logprob(merged, {}, prompt, completion);
            worst_b0 = std::max(worst_b0, std::abs(b0_lp - base_lp));
            worst_merge = std::max(worst_merge, std::abs(merged_lp - fact_lp));
        }
        bool ok = worst_b0 <= 1e-12 && worst_merge <= 1e-9 && timer.ms() < 5000.0;
        return std::pair{ok, "B=0 adapters match the base within " + fmt(worst_b0) +
                                 " (tol 1e-12) and merged weights match factored within " +
                                 fmt(worst_merge) + " (tol 1e-9) on 100 inputs (" +
                                 fmt(timer.ms()) + " ms, budget 5000)"};
    });
}

void criterion_5() {
    run_criterion(5, [] {
        Timer timer;
        auto train_set = conditional_triplets(256, 0);
        auto held_out = conditional_triplets(64, 1000);
        auto base = fixture_model(train_set, 32, 8, 16, 1);
        auto result = dpo::train(train_set, base, fixture_config(1));
        double acc = dpo::preference_accuracy(base, result.adapters, base, held_out);
        double margin0 = result.metrics.front().mean_margin;
        double margin_n = result.metrics.back().mean_margin;
        bool ok = acc >= 0.90 && margin_n > 0.0 && margin_n > margin0 && timer.ms() < 60000.0;
        return std::pair{ok, "2000 DPO steps on 256 separable triplets: held-out accuracy " +
                                 fmt(acc) + " >= 0.9, mean margin " + fmt(margin0) + " -> " +
                                 fmt(margin_n) + " (" + fmt(timer.ms()) + " ms, budget 60000)"};
    });
}

void criterion_6() {
    run_criterion(6, [] {
        Timer timer;
        auto train_set = conditional_triplets(256, 0);
        auto held_out = conditional_triplets(64, 1000);
        std::vector<std::string> raw_texts;
        raw_texts.reserve(train_set.size());
        for (const auto& t : train_set) raw_texts.push_back(t.chosen);

        std::string per_seed;
        bool ok = true;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            auto base = fixture_model(train_set, 32, 8, 16, seed);
            auto cfg = fixture_config(seed);
            auto dpo_run = dpo::train(train_set, base, cfg);
            auto ce_run = dpo::train_ce_baseline(raw_texts, base, cfg);
            double dpo_acc = dpo::preference_accuracy(base, dpo_run.adapters, base, held_out);
            double ce_acc = dpo::preference_accuracy(base, ce_run.adapters, base, held_out);
            ok = ok && ce_acc < dpo_acc;
            if (!per_seed.empty()) per_seed += ", ";
            per_seed += "s" + std::to_string(seed) + ": ce " + fmt(ce_acc) + " vs dpo " +
                        fmt(dpo_acc);
        }
        ok = ok && timer.ms() < 180000.0;
        return std::pair{ok, "CE baseline under-performs DPO on held-out preferences at an "
                             "equal 2000-step budget (" +
                                 per_seed + "; " + fmt(timer.ms()) + " ms, budget 180000)"};
    });
}

// ---------------------------------------------------------------------------
// criteria 7-9: filtering and evaluation fixtures

void criterion_7() {
    run_criterion(7, [] {
        Timer timer;
        std::vector<corpus::Post> posts;
        for (int i = 0; i < 400; ++i) {
            corpus::Post p;
            p.id = "p" + std::to_string(i);
            p.text = "post body " + std::to_string(i);
            posts.push_back(std::move(p));
        }
        // scripted judge: label of post i is i mod 4, read back from the prompt
        auto transport = std::make_shared<test::MockTransport>();
        transport->handler = [](const nlohmann::json& body) -> llm::HttpReply {
            std::string user = body.at("messages").at(1).at("content").get<std::string>();
            int index = std::stoi(user.substr(user.rfind(' ') + 1));
            return {200, test::chat_body(std::to_string(index % 4))};
        };

        test::TempDir dir;
        auto kept_ids = [&](int threshold) {
            llm::ClientConfig cfg;
            cfg.base_url = "http://fake.invalid";
            cfg.cache_dir = dir / ("cache" + std::to_string(threshold));
            cfg.backoff_base_ms = 0;
            llm::LlmClient client(cfg, transport);
            filter::FilterOptions opts;
            opts.ideology = corpus::Ideology::right;
            opts.threshold = threshold;
            opts.model = "judge";
            auto out = filter::filter_corpus(posts, opts, client);
            std::set<std::string> ids;
            for (const auto& p : out.kept) ids.insert(p.id);
            return ids;
        };

        auto k1 = kept_ids(1);
        auto k2 = kept_ids(2);
        auto k3 = kept_ids(3);
        auto strict_subset = [](const std::set<std::string>& a, const std::set<std::string>& b) {
            return a.size() < b.size() &&
                   std::includes(b.begin(), b.end(), a.begin(), a.end());
        };
        bool ok = k2.size() == 200 && strict_subset(k3, k2) && strict_subset(k2, k1) &&
                  timer.ms() < 5000.0;
        return std::pair{ok, "threshold 2 keeps exactly " + std::to_string(k2.size()) +
                                 " of 400 posts under labels {0,1,2,3}; kept(3) c kept(2) c "
                                 "kept(1) strictly (" +
                                 std::to_string(k3.size()) + "/" + std::to_string(k2.size()) +
                                 "/" + std::to_string(k1.size()) + ", " + fmt(timer.ms()) +
                                 " ms, budget 5000)"};
    });
}

void criterion_8() {
    run_criterion(8, [] {
        Timer timer;
        auto table = evals::default_scoring_table(10);
        std::vector<evals::QuizAnswer> all_sa;
        std::vector<evals::QuizAnswer> all_sd;
        for (const auto& q : table.questions) {
            all_sa.push_back({q.id, 3});
            all_sd.push_back({q.id, 0});
        }
        auto [x_sa, y_sa] = evals::score_quiz(all_sa, table);
        auto [x_sd, y_sd] = evals::score_quiz(all_sd, table);

        // hand fixture: contributions picked so x = 0.5*(-0.5)+1 and
        // y = 2*(-0.75)-0.25, with one abstention contributing nothing
        evals::ScoringTable hand;
        hand.scale_e = 0.5;
        hand.scale_s = 2.0;
        hand.offset_e = 1.0;
        hand.offset_s = -0.25;
        for (int i = 1; i <= 4; ++i) {
            evals::CompassQuestion q;
            q.id = i;
            q.text = "q" + std::to_string(i);
            q.contributions = {{{0, 0}, {0, 0}, {0, 0}, {0, 0}}};
            hand.questions.push_back(q);
        }
        hand.questions[0].contributions[0] = {-3.0, 1.0};
        hand.questions[1].contributions[3] = {2.0, -2.0};
        hand.questions[3].contributions[2] = {0.5, 0.25};
        std::vector<evals::QuizAnswer> answers{{1, 0}, {2, 3}, {3, evals::kAbstain}, {4, 2}};
        auto [x_hand, y_hand] = evals::score_quiz(answers, hand);

        bool ok = std::abs(x_sa - 10.0) <= 1e-9 && std::abs(y_sa - 10.0) <= 1e-9 &&
                  std::abs(x_sd + 10.0) <= 1e-9 && std::abs(y_sd + 10.0) <= 1e-9 &&
                  std::abs(x_hand - 0.75) <= 1e-9 && std::abs(y_hand + 1.75) <= 1e-9 &&
                  timer.ms() < 1000.0;
        return std::pair{ok, "all-SA scores (" + fmt(x_sa) + "," + fmt(y_sa) +
                                 "), all-SD scores (" + fmt(x_sd) + "," + fmt(y_sd) +
                                 "), hand fixture (" + fmt(x_hand) + "," + fmt(y_hand) +
                                 ") all within 1e-9 (" + fmt(timer.ms()) + " ms, budget 1000)"};
    });
}

void criterion_9() {
    run_criterion(9, [] {
        auto score_of = [](const std::string& reply) {
            test::ScriptedEndpoint judge;
            judge.script = {test::ScriptedEndpoint::say(reply)};
            return evals::judge_score(judge, "statement");
        };
        int s0 = score_of("0");
        int s10 = score_of("10");
        int s20 = score_of("20");
        double average = (s0 + s10 + s20) / 3.0;

        bool out_of_range_raises = false;
        try {
            score_of("21");
        } catch (const DataError&) {
            out_of_range_raises = true;
        }
        bool ok = s0 == 0 && s10 == 10 && s20 == 20 && average == 10.0 && out_of_range_raises;
        return std::pair{ok, "judge replies 0/10/20 parse exactly (average " + fmt(average) +
                                 " matches hand arithmetic) and reply \"21\" raises an error"};
    });
}

// ---------------------------------------------------------------------------
// criterion 10: byte-identical pipeline replay

int post_index(const std::string& user) {
    auto pos = user.find("post body ");
    if (pos == std::string::npos) throw DataError("fixture prompt without post body");
    return std::stoi(user.substr(pos + 10));
}

std::string pipeline_handler(const std::string& model, const std::string& system,
                             const std::string& user) {
    if (model == "filter-judge") {
        return std::to_string(post_index(user) % 4);
    }
    if (model == "gen" && system.find("generate an instruction") != std::string::npos) {
        return "What do you make of topic " + std::to_string(post_index(user)) + "?";
    }
    return test::ChatServer::default_reply(model, system, user);
}

int run_cli_args(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"forge"};
    for (const auto& a : args) argv.push_back(a.c_str());
    // keep subcommand progress lines out of the one-line-per-criterion output
    std::ostringstream sink;
    auto* saved = std::cout.rdbuf(sink.rdbuf());
    int code = cli::run_cli(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(saved);
    return code;
}

void criterion_10() {
    run_criterion(10, [] {
        Timer timer;
        test::ChatServer server(pipeline_handler);
        test::TempDir dir;
        test::EnvGuard epoch("SOURCE_DATE_EPOCH", "1700000000");

        std::string lines;
        for (int i = 0; i < 12; ++i) {
            nlohmann::json j{{"id", "p" + std::to_string(i)},
                             {"text", "post body " + std::to_string(i)}};
            lines += j.dump() + "\n";
        }
        auto posts = (dir / "posts.jsonl").string();
        atomic_write_file(posts, lines);
        auto cache = (dir / "cache").string();

        auto run_pipeline = [&](const std::string& tag) {
            fs::path root = dir / tag;
            auto need = [&](int code, const std::string& what) {
                if (code != 0) throw DataError(what + " exited with " + std::to_string(code));
            };
            need(run_cli_args({"filter", "--in", posts, "--ideology", "right", "--model",
                               "filter-judge", "--base-url", server.url(), "--out",
                               (root / "filter").string(), "--cache-dir", cache}),
                 "filter");
            need(run_cli_args({"synth", "--phase", "base", "--in",
                               (root / "filter" / "kept.jsonl").string(), "--ideology", "right",
                               "--model", "gen", "--base-url", server.url(), "--out",
                               (root / "base").string(), "--cache-dir", cache}),
                 "synth base");
            need(run_cli_args({"synth", "--phase", "preference", "--in",
                               (root / "base" / "pairs_base.jsonl").string(), "--ideology",
                               "right", "--model", "gen", "--base-url", server.url(), "--out",
                               (root / "pref").string(), "--cache-dir", cache}),
                 "synth preference");
            need(run_cli_args({"train", "--triplets",
                               (root / "pref" / "triplets.jsonl").string(), "--steps", "10",
                               "--batch", "4", "--eval-every", "5", "--rank", "2",
                               "--vocab-size", "48", "--embed-dim", "6", "--hidden-dim", "8",
                               "--judge-url", server.url(), "--judge-model", "score-judge",
                               "--seed", "1", "--out", (root / "train").string(), "--cache-dir",
                               cache}),
                 "train");
            need(run_cli_args({"eval", "--metric", "compass", "--checkpoint",
                               (root / "train" / "checkpoints" / "checkpoint-10.json").string(),
                               "--base-model", (root / "train" / "model.json").string(), "--out",
                               (root / "eval").string(), "--cache-dir", cache}),
                 "eval");
            need(run_cli_args({"report", "--compass",
                               (root / "train" / "compass_trajectory.csv").string(), "--scores",
                               (root / "train" / "score_trajectory.csv").string(),
                               "--judge-scores",
                               (root / "train" / "judge_scores.jsonl").string(), "--out",
                               (root / "report").string()}),
                 "report");
            return root;
        };

        auto first = run_pipeline("runA");
        auto second = run_pipeline("runB");

        const std::vector<std::string> files{
            "filter/verdicts.jsonl",        "filter/kept.jsonl",
            "base/pairs_base.jsonl",        "pref/triplets.jsonl",
            "train/metrics.csv",            "train/compass_trajectory.csv",
            "train/score_trajectory.csv",   "train/judge_scores.jsonl",
            "train/quiz_transcript.jsonl",  "eval/compass_trajectory.csv",
            "report/compass.svg",           "report/scores.svg",
            "report/summary.csv",
        };
        std::string mismatch;
        for (const auto& rel : files) {
            if (read_file(first / rel) != read_file(second / rel)) {
                mismatch = rel;
                break;
            }
        }
        // the digests recorded in each stage's run manifest must agree too
        // (keys are output paths relative to that stage's directory)
        if (mismatch.empty()) {
            for (const auto& rel : files) {
                auto slash = rel.find('/');
                fs::path sub = rel.substr(0, slash);
                std::string key = rel.substr(slash + 1);
                auto a = manifest::load_manifest(first / sub / "run_manifest.json");
                auto b = manifest::load_manifest(second / sub / "run_manifest.json");
                if (!a.output_hashes.contains(key) || !b.output_hashes.contains(key) ||
                    a.output_hashes.at(key) != b.output_hashes.at(key)) {
                    mismatch = rel + " manifest digest";
                    break;
                }
            }
        }
        bool ok = mismatch.empty() && timer.ms() < 120000.0;
        return std::pair{ok, mismatch.empty()
                                 ? "two warm-cache pipeline runs with fixed seeds produced "
                                   "byte-identical datasets, metrics, trajectories, and plots (" +
                                       fmt(timer.ms()) + " ms, budget 120000)"
                                 : "outputs differ at " + mismatch};
    });
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    if (failures != 0) {
        std::cout << failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all criteria passed\n";
    return 0;
}
