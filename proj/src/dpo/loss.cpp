#include "forge/dpo/loss.hpp"

#include <algorithm>
#include <cmath>

#include "forge/error.hpp"

namespace forge::dpo {

namespace {

const LoraAdapter* find_adapter(std::span<const LoraAdapter> adapters, LoraTarget t,
                                std::size_t* index) {
    for (std::size_t i = 0; i < adapters.size(); ++i) {
        if (adapters[i].target == t) {
            if (index != nullptr) {
                *index = i;
            }
            return &adapters[i];
        }
    }
    return nullptr;
}

// Adds coeff * d(seq logprob)/d(adapter params) for one traced sequence.
// Derivation per step t (u input, z hidden, p softmax, y target):
//   d lp / d logits = onehot(y) - p                      =: g
//   logits = (W2 + s2 B2 A2) z + b2
//     dB2 += s2 g (A2 z)ᵀ ;  dA2 += s2 (B2ᵀ g) zᵀ
//   dz = W2ᵀ g + s2 A2ᵀ (B2ᵀ g)
//   pre-activation a = (W1 + s1 B1 A1) u + b1, z = tanh(a)
//   da = dz ⊙ (1 - z²)
//     dB1 += s1 da (A1 u)ᵀ ;  dA1 += s1 (B1ᵀ da) uᵀ
void accumulate_seq_grads(const ToyLM& m, std::span<const LoraAdapter> adapters,
                          const SeqTrace& trace, double coeff, std::vector<AdapterGrad>& grads) {
    std::size_t hid_idx = 0;
    std::size_t out_idx = 0;
    const LoraAdapter* hid = find_adapter(adapters, LoraTarget::hidden, &hid_idx);
    const LoraAdapter* out = find_adapter(adapters, LoraTarget::output, &out_idx);
    const std::size_t h = static_cast<std::size_t>(m.hidden_dim);

    Vec g, gz, da, q, r2, tmp;
    for (const StepTrace& st : trace.steps) {
        const std::size_t v = st.probs.size();
        g.resize(v);
        for (std::size_t i = 0; i < v; ++i) {
            g[i] = -coeff * st.probs[i];
        }
        g[static_cast<std::size_t>(st.target)] += coeff;

        matvec_t(m.out_w, g, gz);
        if (out != nullptr) {
            matvec(out->a, st.hidden, q);    // A2 z
            matvec_t(out->b, g, r2);         // B2ᵀ g
            add_outer(grads[out_idx].b, g, q, out->scaling());
            add_outer(grads[out_idx].a, r2, st.hidden, out->scaling());
            matvec_t(out->a, r2, tmp);       // A2ᵀ (B2ᵀ g)
            axpy(gz, tmp, out->scaling());
        }
        da.resize(h);
        for (std::size_t jx = 0; jx < h; ++jx) {
            da[jx] = gz[jx] * (1.0 - st.hidden[jx] * st.hidden[jx]);
        }
        if (hid != nullptr) {
            matvec(hid->a, st.input, q);     // A1 u
            matvec_t(hid->b, da, r2);        // B1ᵀ da
            add_outer(grads[hid_idx].b, da, q, hid->scaling());
            add_outer(grads[hid_idx].a, r2, st.input, hid->scaling());
        }
    }
}

}  // namespace

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_neg(double x) {
    if (x > 0.0) {
        return std::log1p(std::exp(-x));
    }
    return -x + std::log1p(std::exp(x));
}

double dpo_loss_from_margins(std::span<const double> margins, double beta) {
    if (margins.empty()) {
        throw DataError("dpo loss needs a non-empty batch");
    }
    if (!(beta > 0.0)) {
        throw UsageError("beta must be positive");
    }
    double total = 0.0;
    for (double m : margins) {
        total += softplus_neg(beta * m);  // -ln sigmoid(beta m)
    }
    return total / static_cast<double>(margins.size());
}

std::vector<PreparedTriplet> prepare_triplets(const ToyLM& reference,
                                              std::span<const PreferenceTriplet> batch) {
    std::vector<PreparedTriplet> out;
    out.reserve(batch.size());
    for (const auto& t : batch) {
        PreparedTriplet p;
        p.prompt = tokenize(t.instruction, reference.vocab);
        p.chosen = tokenize(t.chosen, reference.vocab);
        p.rejected = tokenize(t.rejected, reference.vocab);
        p.ref_chosen = seq_logprob_ids(reference, {}, p.prompt, p.chosen);
        p.ref_rejected = seq_logprob_ids(reference, {}, p.prompt, p.rejected);
        out.push_back(std::move(p));
    }
    return out;
}

BatchEval eval_batch(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                     std::span<const PreparedTriplet> batch, double beta) {
    BatchEval ev;
    ev.margins.reserve(batch.size());
    for (const auto& t : batch) {
        const double lp_c = seq_logprob_ids(policy, adapters, t.prompt, t.chosen);
        const double lp_r = seq_logprob_ids(policy, adapters, t.prompt, t.rejected);
        ev.margins.push_back((lp_c - t.ref_chosen) - (lp_r - t.ref_rejected));
    }
    ev.loss = dpo_loss_from_margins(ev.margins, beta);
    return ev;
}

std::vector<AdapterGrad> zero_grads(std::span<const LoraAdapter> adapters) {
    std::vector<AdapterGrad> grads;
    grads.reserve(adapters.size());
    for (const auto& a : adapters) {
        AdapterGrad g;
        g.a = Mat(a.a.rows, a.a.cols);
        g.b = Mat(a.b.rows, a.b.cols);
        grads.push_back(std::move(g));
    }
    return grads;
}

BatchEval backprop_batch(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                         std::span<const PreparedTriplet> batch, double beta,
                         std::vector<AdapterGrad>& grads) {
    if (batch.empty()) {
        throw DataError("dpo loss needs a non-empty batch");
    }
    BatchEval ev;
    ev.margins.reserve(batch.size());
    const double n = static_cast<double>(batch.size());
    std::vector<SeqTrace> chosen_traces(batch.size());
    std::vector<SeqTrace> rejected_traces(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = batch[i];
        const double lp_c =
            seq_logprob_ids(policy, adapters, t.prompt, t.chosen, &chosen_traces[i]);
        const double lp_r =
            seq_logprob_ids(policy, adapters, t.prompt, t.rejected, &rejected_traces[i]);
        ev.margins.push_back((lp_c - t.ref_chosen) - (lp_r - t.ref_rejected));
    }
    ev.loss = dpo_loss_from_margins(ev.margins, beta);
    // dL/d margin_i = -(beta/n) sigmoid(-beta margin_i); the margin moves +1
    // with the chosen logprob and -1 with the rejected one.
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double dm = -(beta / n) * sigmoid(-beta * ev.margins[i]);
        accumulate_seq_grads(policy, adapters, chosen_traces[i], dm, grads);
        accumulate_seq_grads(policy, adapters, rejected_traces[i], -dm, grads);
    }
    return ev;
}

double ce_batch(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                std::span<const std::vector<int>> seqs, std::vector<AdapterGrad>* grads) {
    if (seqs.empty()) {
        throw DataError("cross-entropy needs a non-empty batch");
    }
    const double n = static_cast<double>(seqs.size());
    double loss = 0.0;
    const std::span<const int> empty_prompt;
    SeqTrace trace;
    for (const auto& seq : seqs) {
        const double lp =
            seq_logprob_ids(policy, adapters, empty_prompt, seq, grads ? &trace : nullptr);
        const double t = static_cast<double>(seq.size());
        loss += -lp / t;
        if (grads != nullptr) {
            accumulate_seq_grads(policy, adapters, trace, -1.0 / (n * t), *grads);
        }
    }
    return loss / n;
}

double dpo_loss(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                const ToyLM& reference, std::span<const PreferenceTriplet> batch, double beta) {
    auto prepared = prepare_triplets(reference, batch);
    return eval_batch(policy, adapters, prepared, beta).loss;
}

std::vector<AdapterGrad> backprop(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                                  const ToyLM& reference,
                                  std::span<const PreferenceTriplet> batch, double beta) {
    auto prepared = prepare_triplets(reference, batch);
    auto grads = zero_grads(adapters);
    backprop_batch(policy, adapters, prepared, beta, grads);
    return grads;
}

double fd_check(const ToyLM& policy, std::span<const LoraAdapter> adapters,
                const ToyLM& reference, std::span<const PreferenceTriplet> batch, double beta,
                double epsilon) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
        throw UsageError("fd_check epsilon must lie in [1e-7, 1e-3]");
    }
    auto prepared = prepare_triplets(reference, batch);
    auto grads = zero_grads(adapters);
    backprop_batch(policy, adapters, prepared, beta, grads);

    std::vector<LoraAdapter> work(adapters.begin(), adapters.end());
    double max_rel = 0.0;
    auto probe = [&](std::size_t ai, bool is_a, std::size_t flat, double analytic) {
        Mat& mat = is_a ? work[ai].a : work[ai].b;
        const double saved = mat.data[flat];
        mat.data[flat] = saved + epsilon;
        const double up = eval_batch(policy, work, prepared, beta).loss;
        mat.data[flat] = saved - epsilon;
        const double down = eval_batch(policy, work, prepared, beta).loss;
        mat.data[flat] = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double rel =
            std::fabs(analytic - numeric) /
            std::max(1e-12, std::fabs(analytic) + std::fabs(numeric));
        max_rel = rel > max_rel ? rel : max_rel;
    };
    for (std::size_t ai = 0; ai < work.size(); ++ai) {
        for (std::size_t k = 0; k < grads[ai].a.data.size(); ++k) {
            probe(ai, true, k, grads[ai].a.data[k]);
        }
        for (std::size_t k = 0; k < grads[ai].b.data.size(); ++k) {
            probe(ai, false, k, grads[ai].b.data[k]);
        }
    }
    return max_rel;
}

}  // namespace forge::dpo
