#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "forge/chat_endpoint.hpp"
#include "forge/corpus.hpp"

namespace forge::evals {

inline constexpr int kAbstain = -1;

// Likert choice indices: 0=Strongly Disagree, 1=Disagree, 2=Agree,
// 3=Strongly Agree. Each choice contributes (de, ds) to the economic/social
// sums.
struct CompassQuestion {
    int id = 0;
    std::string text;
    std::array<std::pair<double, double>, 4> contributions{};
};

struct ScoringTable {
    std::vector<CompassQuestion> questions;
    double scale_e = 1.0;
    double scale_s = 1.0;
    double offset_e = 0.0;
    double offset_s = 0.0;
};

void validate(const ScoringTable& table);

// Symmetric test table: every question contributes (v - 1.5, v - 1.5) and the
// scales normalize all-Strongly-Agree to exactly (+10, +10). The official
// quiz weights are proprietary; users supply their own table file for real
// runs.
ScoringTable default_scoring_table(int n_questions = 10);

ScoringTable load_scoring_table(const std::filesystem::path& path);
void save_scoring_table(const ScoringTable& table, const std::filesystem::path& path);

struct QuizAnswer {
    int question_id = 0;
    int choice = kAbstain;
};

// Case-insensitive longest-option-first matching ("Strongly Disagree" wins
// over the "Disagree" inside it). Returns the choice only when exactly one
// distinct option appears in the reply.
std::optional<int> parse_likert(std::string_view reply);

// Fixed instruction wrapped around every quiz question.
extern const char* kQuizInstruction;

struct AskOutcome {
    int choice = kAbstain;
    std::vector<std::string> replies;  // one per attempt
    std::string transport_error;       // last transport failure, if any
};

// Up to 3 attempts (fresh variant each), then abstain.
AskOutcome ask_question(ChatEndpoint& endpoint, const CompassQuestion& question);

// x from the economic contributions, y from the social ones, both clamped to
// [-10, 10]. Abstentions contribute (0, 0). Answers must align with the
// table's questions.
std::pair<double, double> score_quiz(std::span<const QuizAnswer> answers,
                                     const ScoringTable& table);

struct CompassResult {
    std::string checkpoint_id;
    double x = 0.0;
    double y = 0.0;
    std::vector<QuizAnswer> answers;
    double abstain_fraction = 0.0;
    bool degraded = false;  // abstain_fraction > 0.10
};

struct TranscriptEntry {
    std::string checkpoint_id;
    int question_id = 0;
    std::string question;
    std::string reply;  // last attempt
    int choice = kAbstain;
};

void validate(const TranscriptEntry& e);
void to_json(nlohmann::json& j, const TranscriptEntry& e);
void from_json(const nlohmann::json& j, TranscriptEntry& e);

CompassResult run_compass_eval(ChatEndpoint& endpoint, const ScoringTable& table,
                               const std::string& checkpoint_id,
                               std::vector<TranscriptEntry>* transcript = nullptr);

// The five probe prompts, ids 1-5.
std::vector<std::string> probe_prompts();

// 0-20 bias score for one statement. No integer in the reply earns one retry;
// an out-of-range integer is an immediate error.
int judge_score(ChatEndpoint& judge, const std::string& statement);

struct JudgeScore {
    std::string checkpoint_id;
    int prompt_id = 0;
    int score = 0;  // 0..20
    std::string response_text;
};

void validate(const JudgeScore& s);
void to_json(nlohmann::json& j, const JudgeScore& s);
void from_json(const nlohmann::json& j, JudgeScore& s);

struct ProbeEvalResult {
    std::string checkpoint_id;
    std::vector<JudgeScore> scores;  // successfully scored probes only
    std::vector<int> failed_prompt_ids;
    double average = 0.0;  // arithmetic mean over scored probes
    int n_scored = 0;
};

// Asks the subject each probe, scores each reply with the judge. Per-probe
// failures are flagged and excluded from the average.
ProbeEvalResult run_probe_eval(ChatEndpoint& subject, ChatEndpoint& judge,
                               const std::string& checkpoint_id,
                               std::span<const std::string> probes = {});

struct CompassTrajectoryRow {
    long step = 0;
    double x = 0.0;
    double y = 0.0;
    double abstain_fraction = 0.0;
};

struct ScoreTrajectoryRow {
    long step = 0;
    double avg_score = 0.0;
    int n_scored = 0;
};

// Sort by the step embedded in each checkpoint id; duplicate steps are an
// error.
std::vector<CompassTrajectoryRow> compass_trajectory(std::span<const CompassResult> results);
std::vector<ScoreTrajectoryRow> score_trajectory(std::span<const ProbeEvalResult> results);

std::string compass_trajectory_csv(std::span<const CompassTrajectoryRow> rows);
std::string score_trajectory_csv(std::span<const ScoreTrajectoryRow> rows);
std::vector<CompassTrajectoryRow> parse_compass_trajectory_csv(const std::string& text);
std::vector<ScoreTrajectoryRow> parse_score_trajectory_csv(const std::string& text);

}  // namespace forge::evals

namespace forge::corpus {
template <>
struct RecordKind<evals::JudgeScore> {
    static constexpr const char* name = "judge_score";
};
template <>
struct RecordKind<evals::TranscriptEntry> {
    static constexpr const char* name = "quiz_transcript";
};
}  // namespace forge::corpus
