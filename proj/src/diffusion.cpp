#include "maskdiff/diffusion.hpp"

#include <cmath>

#include "maskdiff/errors.hpp"

namespace maskdiff {

Vocab::Vocab(int v) : size(v) {
    if (v < 2) throw ConfigError("vocab size must be at least 2");
}

CleanStateEstimate CleanStateEstimate::from_probs(Tensor p) {
    CleanStateEstimate e;
    e.probs = std::move(p);
    e.is_null = false;
    return e;
}

NoiseSchedule NoiseSchedule::linear(int T) {
    if (T < 1) throw ConfigError("schedule needs at least one step");
    NoiseSchedule s;
    s.alphas.resize(T + 1);
    for (int t = 0; t <= T; ++t) s.alphas[t] = 1.0 - static_cast<double>(t) / T;
    s.alphas[T] = 0.0;
    s.validate();
    return s;
}

NoiseSchedule NoiseSchedule::loglinear(int T, double lambda) {
    if (T < 1) throw ConfigError("schedule needs at least one step");
    if (lambda <= 0.0) throw ConfigError("loglinear schedule needs lambda > 0");
    NoiseSchedule s;
    s.alphas.resize(T + 1);
    const double floor = std::exp(-lambda);
    for (int t = 0; t <= T; ++t) {
        const double u = static_cast<double>(t) / T;
        s.alphas[t] = (std::exp(-lambda * u) - floor) / (1.0 - floor);
    }
    s.alphas[0] = 1.0;
    s.alphas[T] = 0.0;
    s.validate();
    return s;
}

NoiseSchedule NoiseSchedule::make(const std::string& family, int T) {
    if (family == "linear") return linear(T);
    if (family == "loglinear") return loglinear(T);
    throw ConfigError("unknown schedule family '" + family + "'");
}

void NoiseSchedule::validate() const {
    if (alphas.size() < 2) throw ConfigError("schedule must have alpha_0 and alpha_T");
    if (alphas.front() != 1.0) throw ConfigError("schedule requires alpha_0 = 1");
    if (alphas.back() != 0.0) throw ConfigError("schedule requires alpha_T = 0");
    for (size_t t = 1; t < alphas.size(); ++t) {
        if (!(alphas[t] < alphas[t - 1]))
            throw ConfigError("schedule must be strictly decreasing");
        if (alphas[t] < 0.0 || alphas[t] > 1.0)
            throw ConfigError("schedule values must lie in [0,1]");
    }
}

double alpha_ratio(const NoiseSchedule& schedule, int t) {
    if (t < 1 || t > schedule.steps()) throw UsageError("alpha_ratio: t out of range");
    const double prev = schedule.alpha(t - 1);
    if (prev <= 0.0) throw NumericError("alpha_ratio: alpha_{t-1} is zero");
    return schedule.alpha(t) / prev;
}

LatentSeq corrupt_marginal(const TokenSeq& x0, int t, const Vocab& vocab,
                           const NoiseSchedule& schedule, Rng& rng) {
    if (t < 0 || t > schedule.steps()) throw UsageError("corrupt_marginal: t out of range");
    for (int tok : x0) {
        if (tok < 0 || tok >= vocab.size)
            throw UsageError("corrupt_marginal: input contains a non-clean token");
    }
    const double keep = schedule.alpha(t);
    LatentSeq out;
    out.t = t;
    out.tokens.reserve(x0.size());
    for (int tok : x0) {
        out.tokens.push_back(rng.uniform() < keep ? tok : vocab.mask_id());
    }
    return out;
}

LatentSeq corrupt_stepwise(const LatentSeq& x_prev, int t, const Vocab& vocab,
                           const NoiseSchedule& schedule, Rng& rng) {
    if (t < 1 || t > schedule.steps()) throw UsageError("corrupt_stepwise: t out of range");
    if (x_prev.t != t - 1) throw UsageError("corrupt_stepwise: latent is not at t-1");
    const double keep = alpha_ratio(schedule, t);
    LatentSeq out;
    out.t = t;
    out.tokens.reserve(x_prev.tokens.size());
    for (int tok : x_prev.tokens) {
        if (tok == vocab.mask_id()) {
            out.tokens.push_back(tok);  // absorbing
        } else {
            out.tokens.push_back(rng.uniform() < keep ? tok : vocab.mask_id());
        }
    }
    return out;
}

ReverseDistribution reverse_distribution(const LatentSeq& x_t, int t,
                                         const CleanStateEstimate& clean_est,
                                         const Vocab& vocab,
                                         const NoiseSchedule& schedule) {
    if (clean_est.is_null) throw UsageError("reverse_distribution: clean estimate is null");
    if (t < 1 || t > schedule.steps()) throw UsageError("reverse_distribution: t out of range");
    const int L = static_cast<int>(x_t.tokens.size());
    const int V = vocab.size;
    if (clean_est.probs.rows != L || clean_est.probs.cols != V) {
        throw UsageError("reverse_distribution: estimate shape mismatch");
    }
    const double a_prev = schedule.alpha(t - 1);
    const double a_cur = schedule.alpha(t);
    const double denom = 1.0 - a_cur;
    // alpha_t = 1 is impossible for t >= 1 on a valid schedule.
    if (denom <= 0.0) throw NumericError("reverse_distribution: 1 - alpha_t is zero");
    const double mask_mass = (1.0 - a_prev) / denom;
    const double token_coef = (a_prev - a_cur) / denom;

    ReverseDistribution rd;
    rd.probs = Tensor::zeros(L, V + 1);
    for (int i = 0; i < L; ++i) {
        if (x_t.tokens[i] != vocab.mask_id()) {
            rd.probs.at(i, x_t.tokens[i]) = 1.0;  // carry-over point mass
        } else {
            for (int v = 0; v < V; ++v)
                rd.probs.at(i, v) = token_coef * clean_est.probs.at(i, v);
            rd.probs.at(i, V) = mask_mass;
        }
    }
    return rd;
}

LatentSeq reverse_sample(const LatentSeq& x_t, int t,
                         const CleanStateEstimate& clean_est, const Vocab& vocab,
                         const NoiseSchedule& schedule, Rng& rng) {
    const ReverseDistribution rd = reverse_distribution(x_t, t, clean_est, vocab, schedule);
    const int L = static_cast<int>(x_t.tokens.size());
    LatentSeq out;
    out.t = t - 1;
    out.tokens.resize(L);
    for (int i = 0; i < L; ++i) {
        if (x_t.tokens[i] != vocab.mask_id()) {
            out.tokens[i] = x_t.tokens[i];
        } else {
            std::span<const double> row(&rd.probs.data[static_cast<size_t>(i) * (vocab.size + 1)],
                                        static_cast<size_t>(vocab.size) + 1);
            out.tokens[i] = rng.categorical(row);
        }
    }
    return out;
}

}  // namespace maskdiff
