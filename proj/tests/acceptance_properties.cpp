// Acceptance property suite: exact, fast checks (criteria 1-7).
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/diffusion.hpp"
#include "maskdiff/sampler.hpp"
#include "maskdiff/sources.hpp"
#include "maskdiff/tape.hpp"

using namespace maskdiff;

namespace {

Tensor random_simplex_rows(int rows, int cols, Rng& rng) {
    Tensor t(rows, cols);
    for (int i = 0; i < rows; ++i) {
        double total = 0.0;
        for (int j = 0; j < cols; ++j) {
            t.at(i, j) = -std::log(1.0 - rng.uniform());
            total += t.at(i, j);
        }
        for (int j = 0; j < cols; ++j) t.at(i, j) /= total;
    }
    return t;
}

NoiseSchedule random_schedule(Rng& rng) {
    const int T = rng.uniform_int(2, 64);
    return rng.uniform() < 0.5 ? NoiseSchedule::linear(T) : NoiseSchedule::loglinear(T);
}

// ---------------------------------------------------------------- criterion 1

bool kernel_normalization(std::string& detail) {
    Rng rng(1001);
    double worst_row = 0.0, worst_coeff = 0.0;
    for (int draw = 0; draw < 1000; ++draw) {
        const NoiseSchedule s = random_schedule(rng);
        const int t = rng.uniform_int(1, s.steps());
        const int V = rng.uniform_int(2, 5);
        const int L = rng.uniform_int(1, 8);
        const Vocab vocab(V);

        LatentSeq x_t;
        x_t.t = t;
        for (int i = 0; i < L; ++i) {
            x_t.tokens.push_back(rng.uniform() < 0.5 ? vocab.mask_id()
                                                     : rng.uniform_int(0, V - 1));
        }
        const CleanStateEstimate est =
            CleanStateEstimate::from_probs(random_simplex_rows(L, V, rng));
        const ReverseDistribution rd = reverse_distribution(x_t, t, est, vocab, s);
        for (int i = 0; i < L; ++i) {
            double row = 0.0;
            for (int j = 0; j <= V; ++j) row += rd.probs.at(i, j);
            worst_row = std::max(worst_row, std::abs(row - 1.0));
        }
        const double a_prev = s.alpha(t - 1), a_t = s.alpha(t);
        const double lhs = (1.0 - a_prev) + (a_prev - a_t);
        worst_coeff = std::max(worst_coeff, std::abs(lhs - (1.0 - a_t)));
    }
    detail = "max |row sum - 1| = " + std::to_string(worst_row) +
             ", max coefficient identity error = " + std::to_string(worst_coeff);
    return worst_row <= 1e-9 && worst_coeff <= 1e-12;
}

// ---------------------------------------------------------------- criterion 2

bool absorbing_carry_over(std::string& detail) {
    Rng rng(2002);
    long forward_checked = 0, reverse_checked = 0;
    for (int traj = 0; traj < 10000; ++traj) {
        const NoiseSchedule s =
            rng.uniform() < 0.5 ? NoiseSchedule::linear(rng.uniform_int(1, 8))
                                : NoiseSchedule::loglinear(rng.uniform_int(1, 8));
        const int V = rng.uniform_int(2, 4);
        const int L = rng.uniform_int(1, 6);
        const Vocab vocab(V);

        // forward: masks are absorbing
        LatentSeq x;
        x.t = 0;
        for (int i = 0; i < L; ++i) x.tokens.push_back(rng.uniform_int(0, V - 1));
        for (int t = 1; t <= s.steps(); ++t) {
            const LatentSeq next = corrupt_stepwise(x, t, vocab, s, rng);
            for (int i = 0; i < L; ++i) {
                ++forward_checked;
                if (x.tokens[i] == vocab.mask_id() &&
                    next.tokens[i] != vocab.mask_id()) {
                    detail = "a masked position unmasked during forward corruption";
                    return false;
                }
                if (x.tokens[i] != vocab.mask_id() &&
                    next.tokens[i] != vocab.mask_id() &&
                    next.tokens[i] != x.tokens[i]) {
                    detail = "a surviving token changed identity during forward corruption";
                    return false;
                }
            }
            x = next;
        }

        // reverse: unmasked tokens carry over unchanged
        LatentSeq y;
        y.t = s.steps();
        y.tokens.assign(L, vocab.mask_id());
        for (int t = s.steps(); t >= 1; --t) {
            const CleanStateEstimate est =
                CleanStateEstimate::from_probs(random_simplex_rows(L, V, rng));
            const LatentSeq next = reverse_sample(y, t, est, vocab, s, rng);
            for (int i = 0; i < L; ++i) {
                ++reverse_checked;
                if (y.tokens[i] != vocab.mask_id() && next.tokens[i] != y.tokens[i]) {
                    detail = "an unmasked position changed during reverse sampling";
                    return false;
                }
            }
            y = next;
        }
        for (int tok : y.tokens) {
            if (tok == vocab.mask_id()) {
                detail = "a position was still masked after the final reverse step";
                return false;
            }
        }
    }
    detail = std::to_string(forward_checked) + " forward and " +
             std::to_string(reverse_checked) + " reverse position checks";
    return true;
}

// ------------------------------------------------- two-pass graph (3 and 4)

struct TwoPassSetup {
    DenoiserModel model;
    LatentSeq x_t;
    std::vector<int> targets;
    std::vector<uint8_t> row_mask;
    double weight = 0.0;
};

TwoPassSetup random_two_pass(Rng& rng) {
    TwoPassSetup s;
    ModelConfig cfg;
    cfg.vocab = rng.uniform_int(2, 3);
    cfg.seq_len = rng.uniform_int(2, 3);
    cfg.hidden = rng.uniform_int(2, 4);
    cfg.blocks = rng.uniform_int(1, 2);
    cfg.steps = 4;
    cfg.time_embed = rng.uniform() < 0.5;
    cfg.fusion = rng.uniform() < 0.5 ? FusionMode::Add : FusionMode::Concat;
    cfg.has_sc = true;
    s.model = make_model(cfg, derive_seed(33, rng.uniform_int(0, 1 << 30)));

    const Vocab vocab(cfg.vocab);
    s.x_t.t = rng.uniform_int(1, cfg.steps);
    const int forced_mask = rng.uniform_int(0, cfg.seq_len - 1);
    for (int i = 0; i < cfg.seq_len; ++i) {
        const bool masked = i == forced_mask || rng.uniform() < 0.5;
        s.x_t.tokens.push_back(masked ? vocab.mask_id()
                                      : rng.uniform_int(0, cfg.vocab - 1));
        s.row_mask.push_back(masked ? 1 : 0);
        s.targets.push_back(rng.uniform_int(0, cfg.vocab - 1));
    }
    s.weight = 0.5 + rng.uniform() * 3.0;
    return s;
}

Tape::NodeId build_two_pass_loss(Tape& tape, const TwoPassSetup& s,
                                 std::vector<Tape::NodeId>& leaves,
                                 bool substitute_constant) {
    leaves = add_param_leaves(tape, s.model);
    const ForwardNodes first = denoiser_forward(tape, leaves, s.model, s.x_t, s.x_t.t, -1);
    const Tape::NodeId detached = substitute_constant
                                      ? tape.constant(tape.value(first.probs))
                                      : tape.stop_gradient(first.probs);
    const ForwardNodes second =
        denoiser_forward(tape, leaves, s.model, s.x_t, s.x_t.t, detached);
    return tape.masked_cross_entropy(second.logits, s.targets, s.row_mask, s.weight);
}

bool gradient_correctness(std::string& detail) {
    Rng rng(3003);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const TwoPassSetup s = random_two_pass(rng);
        Tape tape;
        std::vector<Tape::NodeId> leaves;
        const Tape::NodeId loss = build_two_pass_loss(tape, s, leaves, false);
        const GradCheckReport r = grad_check(tape, loss, 1e-4);
        worst = std::max(worst, r.max_rel_error);
        if (!r.pass) {
            detail = "configuration " + std::to_string(i) + " failed at leaf '" +
                     r.worst_leaf + "' (rel error " + std::to_string(r.max_rel_error) + ")";
            return false;
        }
    }
    detail = "50 configurations, worst relative error " + std::to_string(worst);
    return true;
}

bool stop_gradient_bit_exact(std::string& detail) {
    Rng rng(4004);
    long compared = 0;
    for (int i = 0; i < 20; ++i) {
        const TwoPassSetup s = random_two_pass(rng);

        Tape tape_sg;
        std::vector<Tape::NodeId> leaves_sg;
        const Tape::NodeId loss_sg = build_two_pass_loss(tape_sg, s, leaves_sg, false);
        tape_sg.zero_gradients();
        tape_sg.backward(loss_sg);

        Tape tape_const;
        std::vector<Tape::NodeId> leaves_const;
        const Tape::NodeId loss_const =
            build_two_pass_loss(tape_const, s, leaves_const, true);
        tape_const.zero_gradients();
        tape_const.backward(loss_const);

        if (tape_sg.value(loss_sg).data[0] != tape_const.value(loss_const).data[0]) {
            detail = "loss values differ on configuration " + std::to_string(i);
            return false;
        }
        for (size_t p = 0; p < leaves_sg.size(); ++p) {
            const Tensor ga = tape_sg.gradient(leaves_sg[p]);
            const Tensor gb = tape_const.gradient(leaves_const[p]);
            for (size_t k = 0; k < ga.size(); ++k) {
                ++compared;
                if (ga.data[k] != gb.data[k]) {
                    detail = "gradient mismatch on configuration " + std::to_string(i) +
                             ", parameter '" + s.model.params.names[p] + "'";
                    return false;
                }
            }
        }
    }
    detail = std::to_string(compared) + " gradient entries compared bit-for-bit";
    return true;
}

// ---------------------------------------------------------------- criterion 5

bool call_parity(std::string& detail) {
    ModelConfig cfg;
    cfg.vocab = 3;
    cfg.seq_len = 6;
    cfg.hidden = 8;
    cfg.blocks = 1;
    cfg.steps = 128;
    cfg.has_sc = true;
    const DenoiserModel model = make_model(cfg, 55);
    ModelDenoiser denoiser(model);
    const Vocab vocab(3);
    for (int T : {1, 8, 32, 128}) {
        const NoiseSchedule s = NoiseSchedule::linear(T);
        for (bool sc : {false, true}) {
            Rng rng(derive_seed(5005, T, sc));
            const SampleResult r = sample(denoiser, vocab, s, cfg.seq_len, rng, sc);
            if (r.trace.denoiser_calls != T) {
                detail = "T=" + std::to_string(T) + " sc=" + (sc ? "on" : "off") +
                         " used " + std::to_string(r.trace.denoiser_calls) + " calls";
                return false;
            }
        }
    }
    detail = "denoiser calls = T for T in {1,8,32,128}, sc on and off";
    return true;
}

// ---------------------------------------------------------------- criterion 6

bool neutral_attach(std::string& detail) {
    Rng rng(6006);
    for (FusionMode fusion : {FusionMode::Add, FusionMode::Concat}) {
        ModelConfig cfg;
        cfg.vocab = 3;
        cfg.seq_len = 5;
        cfg.hidden = 6;
        cfg.blocks = 2;
        cfg.steps = 8;
        cfg.has_sc = false;
        const DenoiserModel base = make_model(cfg, 77);
        const DenoiserModel attached = attach_self_conditioning(base, fusion, 11);
        const Vocab vocab(3);

        for (int trial = 0; trial < 20; ++trial) {
            LatentSeq x;
            x.t = rng.uniform_int(1, cfg.steps);
            for (int i = 0; i < cfg.seq_len; ++i) {
                x.tokens.push_back(rng.uniform() < 0.5 ? vocab.mask_id()
                                                       : rng.uniform_int(0, 2));
            }
            const CleanStateEstimate sc = CleanStateEstimate::from_probs(
                random_simplex_rows(cfg.seq_len, cfg.vocab, rng));
            const CleanStateEstimate a = denoise(base, x, x.t, CleanStateEstimate::null());
            const CleanStateEstimate b = denoise(attached, x, x.t, sc);
            if (a.probs.data != b.probs.data) {
                detail = std::string("forward mismatch after neutral attach (") +
                         fusion_name(fusion) + " fusion)";
                return false;
            }
        }

        ModelDenoiser denoiser(attached);
        const NoiseSchedule s = NoiseSchedule::linear(8);
        for (uint64_t seed = 0; seed < 10; ++seed) {
            Rng on(derive_seed(66, seed)), off(derive_seed(66, seed));
            if (sample(denoiser, vocab, s, cfg.seq_len, on, true).tokens !=
                sample(denoiser, vocab, s, cfg.seq_len, off, false).tokens) {
                detail = std::string("sc-on/off sampling diverged after neutral attach (") +
                         fusion_name(fusion) + " fusion)";
                return false;
            }
        }
    }
    detail = "bit-exact forward and paired sampling for both fusion modes";
    return true;
}

// ---------------------------------------------------------------- criterion 7

bool oracle_end_to_end(std::string& detail) {
    const MarkovSource source = tiny_markov_source();
    OracleDenoiser oracle(source);
    const Vocab vocab(2);
    const NoiseSchedule s = NoiseSchedule::linear(4);
    const int L = 4, n = 200000;

    std::vector<double> counts(16, 0.0);
    const auto samples = batch_sample(oracle, vocab, s, L, n, 700700, false);
    for (const SampleResult& r : samples) {
        int code = 0;
        for (int tok : r.tokens) code = code * 2 + tok;
        counts[code] += 1.0;
    }
    const std::vector<double> exact = source.exact_kmer_probs(L);
    double tv = 0.0;
    for (int code = 0; code < 16; ++code) {
        tv += std::abs(counts[code] / n - exact[code]);
    }
    tv *= 0.5;
    detail = "total variation " + std::to_string(tv) + " over " + std::to_string(n) +
             " samples";
    return tv <= 0.02;
}

}  // namespace

int main() {
    struct Criterion {
        int number;
        const char* title;
        std::function<bool(std::string&)> fn;
    };
    const std::vector<Criterion> criteria = {
        {1, "reverse kernel rows normalize; coefficient identity holds", kernel_normalization},
        {2, "masks absorb forward; unmasked tokens carry over in reverse", absorbing_carry_over},
        {3, "two-pass loss gradients match finite differences (50 configs)", gradient_correctness},
        {4, "stop-gradient equals constant substitution bit-for-bit (20 configs)", stop_gradient_bit_exact},
        {5, "self-conditioned sampling keeps denoiser call parity", call_parity},
        {6, "neutral SC attach leaves the base model bit-identical", neutral_attach},
        {7, "oracle-denoiser samples match the source within TV 0.02", oracle_end_to_end},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        const bool ok = c.fn(detail);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %d: %s — %s (%.1fs)\n", ok ? "PASS" : "FAIL", c.number,
                    c.title, detail.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
