#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "forge/evals.hpp"

namespace forge::report {

// One line per probe prompt on the score chart.
struct ProbeSeries {
    int prompt_id = 0;
    std::vector<std::pair<long, double>> points;  // (step, score), sorted by step
};

// Groups per-checkpoint judge scores into per-probe series. Duplicate
// (prompt, step) pairs are an error.
std::vector<ProbeSeries> probe_series(std::span<const evals::JudgeScore> scores);

// Political-compass trajectory on a [-10,10]^2 grid with quadrant lines: one
// marker per checkpoint and an arrowed segment between consecutive steps.
// Pure function of its input; empty input draws the axes plus a warning.
std::string compass_svg(std::span<const evals::CompassTrajectoryRow> rows);

// Judge-score trajectories: one series per probe plus the average series,
// y fixed to [0, 20]. Same determinism and empty-input behavior.
std::string score_svg(std::span<const ProbeSeries> probes,
                      std::span<const evals::ScoreTrajectoryRow> average);

// Union of both trajectories keyed by step; fields missing on one side stay
// blank.
std::string summary_csv(std::span<const evals::CompassTrajectoryRow> compass,
                        std::span<const evals::ScoreTrajectoryRow> scores);

}  // namespace forge::report
