#include "forge/dpo/lora.hpp"

#include <cmath>

#include "forge/error.hpp"

namespace forge::dpo {

namespace {

const LoraAdapter* find_adapter(std::span<const LoraAdapter> adapters, LoraTarget t) {
    for (const auto& a : adapters) {
        if (a.target == t) {
            return &a;
        }
    }
    return nullptr;
}

Vec prompt_context(const ToyLM& m, std::span<const int> prompt) {
    const auto d = static_cast<std::size_t>(m.embed_dim);
    Vec c(d, 0.0);
    if (prompt.empty()) {
        return c;
    }
    for (int id : prompt) {
        const double* row = m.embed.row(static_cast<std::size_t>(id));
        for (std::size_t k = 0; k < d; ++k) {
            c[k] += row[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(prompt.size());
    for (auto& x : c) {
        x *= inv;
    }
    return c;
}

// One decoder step: logits for the token following `prev`, plus activations
// when tracing.
void step_logits(const ToyLM& m, const LoraAdapter* hid, const LoraAdapter* out, int prev,
                 const Vec& context, Vec& u, Vec& z, Vec& logits) {
    const auto d = static_cast<std::size_t>(m.embed_dim);
    const auto h = static_cast<std::size_t>(m.hidden_dim);
    u.resize(2 * d);
    const double* row = m.embed.row(static_cast<std::size_t>(prev));
    for (std::size_t k = 0; k < d; ++k) {
        u[k] = row[k];
        u[d + k] = context[k];
    }
    Vec pre;
    matvec(m.hidden_w, u, pre);
    if (hid != nullptr) {
        Vec q, delta;
        matvec(hid->a, u, q);
        matvec(hid->b, q, delta);
        axpy(pre, delta, hid->scaling());
    }
    z.resize(h);
    for (std::size_t jx = 0; jx < h; ++jx) {
        z[jx] = std::tanh(pre[jx] + m.hidden_b[jx]);
    }
    matvec(m.out_w, z, logits);
    if (out != nullptr) {
        Vec q, delta;
        matvec(out->a, z, q);
        matvec(out->b, q, delta);
        axpy(logits, delta, out->scaling());
    }
    for (std::size_t i = 0; i < logits.size(); ++i) {
        logits[i] += m.out_b[i];
    }
}

double log_sum_exp(const Vec& logits) {
    double mx = logits[0];
    for (double x : logits) {
        mx = x > mx ? x : mx;
    }
    double sum = 0.0;
    for (double x : logits) {
        sum += std::exp(x - mx);
    }
    return mx + std::log(sum);
}

}  // namespace

std::string to_string(LoraTarget t) {
    return t == LoraTarget::hidden ? "hidden" : "output";
}

LoraTarget lora_target_from_string(const std::string& s) {
    if (s == "hidden") return LoraTarget::hidden;
    if (s == "output") return LoraTarget::output;
    throw DataError("unknown adapter target: " + s);
}

void validate(const LoraAdapter& adapter, const ToyLM& base) {
    if (adapter.rank < 1) {
        throw DataError("adapter rank must be >= 1");
    }
    if (!(adapter.alpha > 0.0) || !std::isfinite(adapter.alpha)) {
        throw DataError("adapter alpha must be positive and finite");
    }
    const auto r = static_cast<std::size_t>(adapter.rank);
    const std::size_t n_in =
        adapter.target == LoraTarget::hidden ? base.hidden_w.cols : base.out_w.cols;
    const std::size_t n_out =
        adapter.target == LoraTarget::hidden ? base.hidden_w.rows : base.out_w.rows;
    if (adapter.a.rows != r || adapter.a.cols != n_in) {
        throw DataError("adapter A shape mismatch for target " + to_string(adapter.target));
    }
    if (adapter.b.rows != n_out || adapter.b.cols != r) {
        throw DataError("adapter B shape mismatch for target " + to_string(adapter.target));
    }
    for (double x : adapter.a.data) {
        if (!std::isfinite(x)) {
            throw DataError("non-finite value in adapter A");
        }
    }
    for (double x : adapter.b.data) {
        if (!std::isfinite(x)) {
            throw DataError("non-finite value in adapter B");
        }
    }
}

std::vector<LoraAdapter> init_adapters(const ToyLM& base, int rank, double alpha, Rng& rng) {
    std::vector<LoraAdapter> adapters;
    for (LoraTarget target : {LoraTarget::hidden, LoraTarget::output}) {
        const std::size_t n_in =
            target == LoraTarget::hidden ? base.hidden_w.cols : base.out_w.cols;
        const std::size_t n_out =
            target == LoraTarget::hidden ? base.hidden_w.rows : base.out_w.rows;
        LoraAdapter a;
        a.target = target;
        a.rank = rank;
        a.alpha = alpha;
        a.a = Mat(static_cast<std::size_t>(rank), n_in);
        a.b = Mat(n_out, static_cast<std::size_t>(rank));
        const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
        for (auto& x : a.a.data) {
            x = 0.01 * rng.uniform(-bound, bound);
        }
        validate(a, base);
        adapters.push_back(std::move(a));
    }
    return adapters;
}

ToyLM merge_lora(const ToyLM& base, std::span<const LoraAdapter> adapters) {
    ToyLM merged = base;
    for (const auto& ad : adapters) {
        validate(ad, base);
        Mat& w = ad.target == LoraTarget::hidden ? merged.hidden_w : merged.out_w;
        const double s = ad.scaling();
        for (std::size_t i = 0; i < w.rows; ++i) {
            for (std::size_t k = 0; k < static_cast<std::size_t>(ad.rank); ++k) {
                const double bik = s * ad.b(i, k);
                if (bik == 0.0) {
                    continue;
                }
                const double* arow = ad.a.row(k);
                double* wrow = w.row(i);
                for (std::size_t jx = 0; jx < w.cols; ++jx) {
                    wrow[jx] += bik * arow[jx];
                }
            }
        }
    }
    return merged;
}

double seq_logprob_ids(const ToyLM& m, std::span<const LoraAdapter> adapters,
                       std::span<const int> prompt, std::span<const int> completion,
                       SeqTrace* trace) {
    if (completion.empty()) {
        throw DataError("cannot score an empty completion");
    }
    const LoraAdapter* hid = find_adapter(adapters, LoraTarget::hidden);
    const LoraAdapter* out = find_adapter(adapters, LoraTarget::output);
    const Vec context = prompt_context(m, prompt);
    Vec u, z, logits;
    double total = 0.0;
    if (trace != nullptr) {
        trace->steps.clear();
        trace->steps.reserve(completion.size());
    }
    int prev = kBosId;
    for (std::size_t t = 0; t < completion.size(); ++t) {
        step_logits(m, hid, out, prev, context, u, z, logits);
        const double lse = log_sum_exp(logits);
        const int y = completion[t];
        total += logits[static_cast<std::size_t>(y)] - lse;
        if (trace != nullptr) {
            StepTrace st;
            st.input = u;
            st.hidden = z;
            st.probs.resize(logits.size());
            for (std::size_t i = 0; i < logits.size(); ++i) {
                st.probs[i] = std::exp(logits[i] - lse);
            }
            st.target = y;
            trace->steps.push_back(std::move(st));
        }
        prev = y;
    }
    if (trace != nullptr) {
        trace->logprob = total;
    }
    return total;
}

double seq_logprob(const ToyLM& m, std::span<const LoraAdapter> adapters, std::string_view prompt,
                   std::string_view completion) {
    auto p = tokenize(prompt, m.vocab);
    auto c = tokenize(completion, m.vocab);
    return seq_logprob_ids(m, adapters, p, c);
}

std::string greedy_generate(const ToyLM& m, std::span<const LoraAdapter> adapters,
                            std::string_view prompt, int max_new_tokens) {
    const LoraAdapter* hid = find_adapter(adapters, LoraTarget::hidden);
    const LoraAdapter* out = find_adapter(adapters, LoraTarget::output);
    const auto prompt_ids = tokenize(prompt, m.vocab);
    const Vec context = prompt_context(m, prompt_ids);
    Vec u, z, logits;
    std::string text;
    int prev = kBosId;
    for (int t = 0; t < max_new_tokens; ++t) {
        step_logits(m, hid, out, prev, context, u, z, logits);
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i) {
            if (logits[i] > logits[best]) {
                best = i;
            }
        }
        if (best >= 2) {
            text += m.vocab.tokens[best];
        }
        prev = static_cast<int>(best);
    }
    return text;
}

}  // namespace forge::dpo
