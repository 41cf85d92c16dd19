#include "forge/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "forge/dpo/checkpoint.hpp"
#include "forge/error.hpp"
#include "forge/io.hpp"

namespace forge::report {

namespace {

// Round to 0.01 px so coordinates serialize short and stay deterministic.
std::string px(double v) { return format_double(std::round(v * 100.0) / 100.0); }

constexpr const char* kPalette[] = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
};
constexpr size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

struct Frame {
    double width, height, left, right, top, bottom;
    double x_min, x_max, y_min, y_max;

    double sx(double x) const {
        return left + (x - x_min) / (x_max - x_min) * (width - left - right);
    }
    // SVG y grows downward.
    double sy(double y) const {
        return top + (y_max - y) / (y_max - y_min) * (height - top - bottom);
    }
};

std::string svg_open(double width, double height) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(width) + "\" height=\"" +
           px(height) + "\" viewBox=\"0 0 " + px(width) + " " + px(height) + "\">\n";
}

std::string text_at(double x, double y, const std::string& cls, const std::string& body,
                    const std::string& anchor = "middle") {
    return "  <text class=\"" + cls + "\" x=\"" + px(x) + "\" y=\"" + px(y) +
           "\" text-anchor=\"" + anchor + "\" font-size=\"12\" font-family=\"sans-serif\">" +
           body + "</text>\n";
}

std::string line_at(double x1, double y1, double x2, double y2, const std::string& cls,
                    const std::string& extra = "") {
    return "  <line class=\"" + cls + "\" x1=\"" + px(x1) + "\" y1=\"" + px(y1) + "\" x2=\"" +
           px(x2) + "\" y2=\"" + px(y2) + "\"" + extra + "/>\n";
}

std::string frame_rect(const Frame& f) {
    return "  <rect x=\"" + px(f.left) + "\" y=\"" + px(f.top) + "\" width=\"" +
           px(f.width - f.left - f.right) + "\" height=\"" + px(f.height - f.top - f.bottom) +
           "\" fill=\"white\" stroke=\"black\" stroke-width=\"1\"/>\n";
}

std::string warning_text(const Frame& f, const std::string& msg) {
    return text_at((f.left + f.width - f.right) / 2.0, (f.top + f.height - f.bottom) / 2.0,
                   "warning", msg);
}

}  // namespace

std::vector<ProbeSeries> probe_series(std::span<const evals::JudgeScore> scores) {
    std::map<int, ProbeSeries> by_prompt;
    for (const auto& s : scores) {
        evals::validate(s);
        auto& series = by_prompt[s.prompt_id];
        series.prompt_id = s.prompt_id;
        series.points.emplace_back(dpo::checkpoint_step(s.checkpoint_id),
                                   static_cast<double>(s.score));
    }
    std::vector<ProbeSeries> out;
    out.reserve(by_prompt.size());
    for (auto& [id, series] : by_prompt) {
        std::sort(series.points.begin(), series.points.end());
        for (size_t i = 1; i < series.points.size(); ++i) {
            if (series.points[i].first == series.points[i - 1].first) {
                throw DataError("probe " + std::to_string(id) + " has duplicate step " +
                                std::to_string(series.points[i].first));
            }
        }
        out.push_back(std::move(series));
    }
    return out;
}

std::string compass_svg(std::span<const evals::CompassTrajectoryRow> rows) {
    Frame f{560, 560, 60, 40, 40, 60, -10, 10, -10, 10};
    std::string svg = svg_open(f.width, f.height);
    svg +=
        "  <defs>\n"
        "    <marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" "
        "markerWidth=\"7\" markerHeight=\"7\" orient=\"auto-start-reverse\">\n"
        "      <path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"#555555\"/>\n"
        "    </marker>\n"
        "  </defs>\n";
    svg += frame_rect(f);
    // Quadrant lines through the origin.
    svg += line_at(f.sx(0), f.sy(f.y_min), f.sx(0), f.sy(f.y_max), "quadrant",
                   " stroke=\"#999999\" stroke-width=\"1\"");
    svg += line_at(f.sx(f.x_min), f.sy(0), f.sx(f.x_max), f.sy(0), "quadrant",
                   " stroke=\"#999999\" stroke-width=\"1\"");
    for (int tick = -10; tick <= 10; tick += 5) {
        svg += text_at(f.sx(tick), f.height - f.bottom + 16, "tick", std::to_string(tick));
        svg += text_at(f.left - 8, f.sy(tick) + 4, "tick", std::to_string(tick), "end");
    }
    svg += text_at(f.sx(0), f.height - f.bottom + 34, "axis",
                   "Economic axis (left &#8592; &#8594; right)");
    svg += text_at(f.sx(-8.5), f.sy(9.3), "axis", "Authoritarian");
    svg += text_at(f.sx(-8.5), f.sy(-9.6), "axis", "Libertarian");

    if (rows.empty()) {
        svg += warning_text(f, "warning: empty trajectory, nothing to plot");
        svg += "</svg>\n";
        return svg;
    }
    for (size_t i = 1; i < rows.size(); ++i) {
        svg += line_at(f.sx(rows[i - 1].x), f.sy(rows[i - 1].y), f.sx(rows[i].x), f.sy(rows[i].y),
                       "seg",
                       " stroke=\"#555555\" stroke-width=\"1.5\" marker-end=\"url(#arrow)\"");
    }
    for (const auto& row : rows) {
        svg += "  <circle class=\"pt\" cx=\"" + px(f.sx(row.x)) + "\" cy=\"" + px(f.sy(row.y)) +
               "\" r=\"4\" fill=\"#d62728\"/>\n";
        svg += text_at(f.sx(row.x) + 8, f.sy(row.y) - 6, "step-label",
                       "step " + std::to_string(row.step), "start");
    }
    svg += "</svg>\n";
    return svg;
}

std::string score_svg(std::span<const ProbeSeries> probes,
                      std::span<const evals::ScoreTrajectoryRow> average) {
    Frame f{640, 400, 60, 150, 30, 50, 0, 1, 0, 20};
    long step_min = 0;
    long step_max = 0;
    bool any = false;
    auto widen = [&](long step) {
        if (!any) {
            step_min = step_max = step;
            any = true;
        } else {
            step_min = std::min(step_min, step);
            step_max = std::max(step_max, step);
        }
    };
    for (const auto& series : probes) {
        for (const auto& [step, score] : series.points) widen(step);
    }
    for (const auto& row : average) widen(row.step);
    if (step_min == step_max) {
        --step_min;  // avoid a zero-width x range for single-checkpoint runs
        ++step_max;
    }
    f.x_min = static_cast<double>(step_min);
    f.x_max = static_cast<double>(step_max);

    std::string svg = svg_open(f.width, f.height);
    svg += frame_rect(f);
    svg += line_at(f.sx(f.x_min), f.sy(10), f.sx(f.x_max), f.sy(10), "midline",
                   " stroke=\"#999999\" stroke-width=\"1\" stroke-dasharray=\"4 4\"");
    for (int tick = 0; tick <= 20; tick += 5) {
        svg += text_at(f.left - 8, f.sy(tick) + 4, "tick", std::to_string(tick), "end");
    }
    for (int i = 0; i <= 4; ++i) {
        double step = f.x_min + (f.x_max - f.x_min) * i / 4.0;
        svg += text_at(f.sx(step), f.height - f.bottom + 16, "tick",
                       std::to_string(static_cast<long>(std::llround(step))));
    }
    svg += text_at((f.left + f.width - f.right) / 2.0, f.height - 14, "axis", "training step");
    svg += text_at(f.left - 44, f.top + 10, "axis", "score", "start");

    if (!any) {
        svg += warning_text(f, "warning: empty trajectory, nothing to plot");
        svg += "</svg>\n";
        return svg;
    }

    double legend_x = f.width - f.right + 12;
    double legend_y = f.top + 10;
    auto draw_series = [&](const std::vector<std::pair<long, double>>& points,
                           const std::string& cls, const std::string& color,
                           const std::string& stroke_width, const std::string& label) {
        if (!points.empty()) {
            std::string attr;
            for (const auto& [step, value] : points) {
                if (!attr.empty()) attr += ' ';
                attr += px(f.sx(static_cast<double>(step))) + ',' + px(f.sy(value));
            }
            svg += "  <polyline class=\"" + cls + "\" points=\"" + attr +
                   "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + stroke_width +
                   "\"/>\n";
            for (const auto& [step, value] : points) {
                svg += "  <circle class=\"" + cls + "-pt\" cx=\"" +
                       px(f.sx(static_cast<double>(step))) + "\" cy=\"" + px(f.sy(value)) +
                       "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
            }
        }
        svg += line_at(legend_x, legend_y - 4, legend_x + 18, legend_y - 4, "legend-swatch",
                       " stroke=\"" + color + "\" stroke-width=\"" + stroke_width + "\"");
        svg += text_at(legend_x + 24, legend_y, "legend", label, "start");
        legend_y += 18;
    };

    for (size_t i = 0; i < probes.size(); ++i) {
        draw_series(probes[i].points, "series", kPalette[i % kPaletteSize], "1.5",
                    "probe " + std::to_string(probes[i].prompt_id));
    }
    std::vector<std::pair<long, double>> avg_points;
    avg_points.reserve(average.size());
    for (const auto& row : average) avg_points.emplace_back(row.step, row.avg_score);
    draw_series(avg_points, "series average", "#000000", "2.5", "average");

    svg += "</svg>\n";
    return svg;
}

std::string summary_csv(std::span<const evals::CompassTrajectoryRow> compass,
                        std::span<const evals::ScoreTrajectoryRow> scores) {
    std::map<long, std::pair<const evals::CompassTrajectoryRow*, const evals::ScoreTrajectoryRow*>>
        by_step;
    for (const auto& row : compass) {
        if (by_step[row.step].first != nullptr) {
            throw DataError("duplicate compass step " + std::to_string(row.step));
        }
        by_step[row.step].first = &row;
    }
    for (const auto& row : scores) {
        if (by_step[row.step].second != nullptr) {
            throw DataError("duplicate score step " + std::to_string(row.step));
        }
        by_step[row.step].second = &row;
    }
    std::string out = "step,x,y,abstain_fraction,avg_score,n_scored\n";
    for (const auto& [step, pair] : by_step) {
        out += std::to_string(step) + ',';
        if (pair.first != nullptr) {
            out += format_double(pair.first->x) + ',' + format_double(pair.first->y) +
                   ',' + format_double(pair.first->abstain_fraction);
        } else {
            out += ",,";
        }
        out += ',';
        if (pair.second != nullptr) {
            out += format_double(pair.second->avg_score) + ',' +
                   std::to_string(pair.second->n_scored);
        } else {
            out += ',';
        }
        out += '\n';
    }
    return out;
}

}  // namespace forge::report
