#include "forge/dpo/train.hpp"

#include <charconv>
#include <cmath>
#include <numeric>

#include "forge/dpo/adam.hpp"
#include "forge/error.hpp"
#include "forge/io.hpp"

namespace forge::dpo {

namespace {

// Shuffled drop-last batch supply; reshuffles at each epoch boundary.
class BatchCycler {
public:
    BatchCycler(std::size_t n, std::size_t batch, Rng& rng)
        : order_(n), batch_(batch), pos_(n), rng_(rng) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
    }

    std::span<const std::size_t> next() {
        if (pos_ + batch_ > order_.size()) {
            rng_.shuffle(order_);
            pos_ = 0;
        }
        std::span<const std::size_t> out(order_.data() + pos_, batch_);
        pos_ += batch_;
        return out;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t batch_;
    std::size_t pos_;
    Rng& rng_;
};

double mean_of(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) {
        s += x;
    }
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double positive_fraction(std::span<const double> xs) {
    std::size_t n = 0;
    for (double x : xs) {
        n += x > 0.0 ? 1 : 0;
    }
    return xs.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(xs.size());
}

void check_finite_loss(double loss, long step) {
    if (!std::isfinite(loss)) {
        throw DataError("non-finite loss at step " + std::to_string(step));
    }
}

bool hook_due(long step, const DpoConfig& cfg) {
    return step == 0 || step == cfg.steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
}

struct Optimizer {
    AdamConfig acfg;
    std::vector<AdamState> state_a;
    std::vector<AdamState> state_b;

    Optimizer(const DpoConfig& cfg, std::size_t n_adapters)
        : state_a(n_adapters), state_b(n_adapters) {
        acfg.lr = cfg.lr;
        acfg.weight_decay = cfg.weight_decay;
    }

    void apply(std::vector<LoraAdapter>& adapters, const std::vector<AdapterGrad>& grads,
               long step) {
        for (std::size_t i = 0; i < adapters.size(); ++i) {
            adam_step(adapters[i].a.data, grads[i].a.data, state_a[i], step, acfg);
            adam_step(adapters[i].b.data, grads[i].b.data, state_b[i], step, acfg);
        }
    }
};

}  // namespace

void validate(const DpoConfig& cfg) {
    if (!(cfg.beta > 0.0)) {
        throw UsageError("beta must be positive");
    }
    if (!(cfg.lr > 0.0)) {
        throw UsageError("lr must be positive");
    }
    if (cfg.weight_decay < 0.0) {
        throw UsageError("weight_decay must be >= 0");
    }
    if (cfg.batch < 1) {
        throw UsageError("batch must be >= 1");
    }
    if (cfg.steps < 0) {
        throw UsageError("steps must be >= 0");
    }
    if (cfg.eval_every < 1) {
        throw UsageError("eval_every must be >= 1");
    }
    if (cfg.lora_rank < 1) {
        throw UsageError("lora_rank must be >= 1");
    }
    if (!(cfg.lora_alpha > 0.0)) {
        throw UsageError("lora_alpha must be positive");
    }
}

TrainResult train(const std::vector<PreferenceTriplet>& triplets, const ToyLM& base,
                  const DpoConfig& cfg, const CheckpointHook& hook) {
    validate(cfg);
    validate(base);
    if (triplets.size() < static_cast<std::size_t>(cfg.batch)) {
        throw DataError("need at least " + std::to_string(cfg.batch) +
                        " triplets for one batch (drop-last batching), got " +
                        std::to_string(triplets.size()));
    }
    const auto prepared = prepare_triplets(base, triplets);

    Rng rng(cfg.seed);
    auto adapters = init_adapters(base, cfg.lora_rank, cfg.lora_alpha, rng);
    Optimizer opt(cfg, adapters.size());
    BatchCycler cycler(prepared.size(), static_cast<std::size_t>(cfg.batch), rng);

    std::vector<PreparedTriplet> scratch;
    auto gather = [&](std::span<const std::size_t> idx) {
        scratch.clear();
        scratch.reserve(idx.size());
        for (std::size_t i : idx) {
            scratch.push_back(prepared[i]);
        }
    };

    TrainResult result;
    result.metrics.reserve(static_cast<std::size_t>(cfg.steps) + 1);

    gather(cycler.next());
    BatchEval ev0 = eval_batch(base, adapters, scratch, cfg.beta);
    check_finite_loss(ev0.loss, 0);
    result.metrics.push_back(
        {0, ev0.loss, mean_of(ev0.margins), positive_fraction(ev0.margins)});
    if (hook) {
        hook(0, base, adapters);
    }

    for (long step = 1; step <= cfg.steps; ++step) {
        gather(cycler.next());
        auto grads = zero_grads(adapters);
        BatchEval ev = backprop_batch(base, adapters, scratch, cfg.beta, grads);
        check_finite_loss(ev.loss, step);
        opt.apply(adapters, grads, step);
        result.metrics.push_back(
            {step, ev.loss, mean_of(ev.margins), positive_fraction(ev.margins)});
        if (hook && hook_due(step, cfg) && step != 0) {
            hook(step, base, adapters);
        }
    }
    result.adapters = std::move(adapters);
    return result;
}

TrainResult train_ce_baseline(const std::vector<std::string>& texts, const ToyLM& base,
                              const DpoConfig& cfg, const CheckpointHook& hook) {
    validate(cfg);
    validate(base);
    if (texts.size() < static_cast<std::size_t>(cfg.batch)) {
        throw DataError("need at least " + std::to_string(cfg.batch) +
                        " texts for one batch (drop-last batching), got " +
                        std::to_string(texts.size()));
    }
    std::vector<std::vector<int>> seqs;
    seqs.reserve(texts.size());
    for (const auto& t : texts) {
        if (t.empty()) {
            throw DataError("empty text in baseline corpus");
        }
        seqs.push_back(tokenize(t, base.vocab));
    }

    Rng rng(cfg.seed);
    auto adapters = init_adapters(base, cfg.lora_rank, cfg.lora_alpha, rng);
    Optimizer opt(cfg, adapters.size());
    BatchCycler cycler(seqs.size(), static_cast<std::size_t>(cfg.batch), rng);

    std::vector<std::vector<int>> scratch;
    auto gather = [&](std::span<const std::size_t> idx) {
        scratch.clear();
        scratch.reserve(idx.size());
        for (std::size_t i : idx) {
            scratch.push_back(seqs[i]);
        }
    };

    TrainResult result;
    result.metrics.reserve(static_cast<std::size_t>(cfg.steps) + 1);

    gather(cycler.next());
    double loss0 = ce_batch(base, adapters, scratch, nullptr);
    check_finite_loss(loss0, 0);
    result.metrics.push_back({0, loss0, 0.0, 0.0});
    if (hook) {
        hook(0, base, adapters);
    }

    for (long step = 1; step <= cfg.steps; ++step) {
        gather(cycler.next());
        auto grads = zero_grads(adapters);
        double loss = ce_batch(base, adapters, scratch, &grads);
        check_finite_loss(loss, step);
        opt.apply(adapters, grads, step);
        result.metrics.push_back({step, loss, 0.0, 0.0});
        if (hook && hook_due(step, cfg) && step != 0) {
            hook(step, base, adapters);
        }
    }
    result.adapters = std::move(adapters);
    return result;
}

double preference_accuracy(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                           const ToyLM& reference, std::span<const PreferenceTriplet> triplets) {
    auto prepared = prepare_triplets(reference, triplets);
    std::size_t wins = 0;
    for (const auto& t : prepared) {
        const double lp_c = seq_logprob_ids(policy, adapters, t.prompt, t.chosen);
        const double lp_r = seq_logprob_ids(policy, adapters, t.prompt, t.rejected);
        const double margin = (lp_c - t.ref_chosen) - (lp_r - t.ref_rejected);
        wins += margin > 0.0 ? 1 : 0;
    }
    return prepared.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(prepared.size());
}

std::string metrics_csv(std::span<const TrainMetrics> metrics) {
    std::string out = "step,loss,mean_margin,pref_accuracy\n";
    for (const auto& m : metrics) {
        out += std::to_string(m.step);
        out += ',';
        out += format_double(m.loss);
        out += ',';
        out += format_double(m.mean_margin);
        out += ',';
        out += format_double(m.pref_accuracy);
        out += '\n';
    }
    return out;
}

std::vector<TrainMetrics> parse_metrics_csv(const std::string& text) {
    std::vector<TrainMetrics> out;
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) {
            end = text.size();
        }
        std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        if (line.empty()) {
            continue;
        }
        if (header) {
            if (line != "step,loss,mean_margin,pref_accuracy") {
                throw DataError("unexpected metrics CSV header");
            }
            header = false;
            continue;
        }
        TrainMetrics m;
        const char* p = line.data();
        const char* stop = line.data() + line.size();
        auto field = [&](auto& value) {
            auto [next, ec] = std::from_chars(p, stop, value);
            if (ec != std::errc{}) {
                throw DataError("bad metrics CSV field");
            }
            p = next < stop && *next == ',' ? next + 1 : next;
        };
        field(m.step);
        field(m.loss);
        field(m.mean_margin);
        field(m.pref_accuracy);
        out.push_back(m);
    }
    return out;
}

}  // namespace forge::dpo
