#pragma once

// Boundary-optimizing training: a classifier D trained on real points plus
// the outputs of K generator networks, where a generator only learns from
// synthetic points that D misclassifies. The bonpp mode adds a per-epoch
// importance-weighted anchor on generator parameters so generators keep what
// they learned on points that stopped triggering updates.

#include "datasets.hpp"
#include "error.hpp"
#include "loss.hpp"
#include "nn.hpp"
#include "optim.hpp"
#include "parallel.hpp"
#include "random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bon {

enum class Mode { bon, bonpp, baseline };

inline std::string to_string(Mode m) {
    switch (m) {
    case Mode::bon: return "bon";
    case Mode::bonpp: return "bonpp";
    case Mode::baseline: return "baseline";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "bon") return Mode::bon;
    if (s == "bonpp" || s == "bon++") return Mode::bonpp;
    if (s == "baseline") return Mode::baseline;
    throw ConfigError("unknown mode '" + s + "' (expected bon, bonpp or baseline)");
}

// How the anchoring penalty enters a generator update. `sgd` adds its
// gradient to the step; `proximal` solves the quadratic exactly, so a large
// multiplier pins parameters to the snapshot instead of overshooting it.
enum class PenaltyStep { proximal, sgd };

inline std::string to_string(PenaltyStep p) { return p == PenaltyStep::proximal ? "proximal" : "sgd"; }

inline PenaltyStep parse_penalty_step(const std::string& s) {
    if (s == "proximal") return PenaltyStep::proximal;
    if (s == "sgd") return PenaltyStep::sgd;
    throw ConfigError("unknown penalty step '" + s + "' (expected proximal or sgd)");
}

struct BonConfig {
    std::size_t K = 10;
    double alpha = 1.0;
    double beta = 1.025;
    double lr_d = 0.001;
    double lr_g = 0.0001;
    std::size_t batch_size = 10;
    std::size_t epochs = 100;
    Mode mode = Mode::bon;
    std::uint64_t seed = 1;

    // Scale the synthetic CE terms of the classifier loss by 1/K.
    bool normalize_by_k = false;
    // Gate on predictions taken before the classifier update instead of after.
    bool gate_before_update = false;
    double momentum = 0.0;
    std::size_t threads = 1;
    PenaltyStep penalty_step = PenaltyStep::proximal;

    void validate() const {
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (epochs == 0) throw ConfigError("epochs must be positive");
        if (!(lr_d > 0.0) || !std::isfinite(lr_d)) throw ConfigError("lr_d must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
        if (mode == Mode::baseline) return;
        if (K == 0) throw ConfigError("K must be at least 1");
        if (!(lr_g > 0.0) || !std::isfinite(lr_g)) throw ConfigError("lr_g must be positive");
        if (mode == Mode::bon && alpha != 1.0) throw ConfigError("bon mode uses alpha = 1");
        if (mode == Mode::bonpp) {
            if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be non-negative");
            if (!(beta > 1.0) || !std::isfinite(beta)) throw ConfigError("beta must be greater than 1");
        }
    }
};

struct Prediction {
    std::vector<double> probs;
    std::size_t predicted_class = 0;
};

// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::size_t argmax_column(const Matrix& m, Eigen::Index col) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < m.rows(); ++r)
        if (m(r, col) > m(best, col)) best = r;
    return static_cast<std::size_t>(best);
}

inline Prediction predict(const MlpNetwork& d, std::span<const double> x) {
    Prediction p;
    p.probs = forward(d, x).output_column();
    p.predicted_class = argmax(p.probs);
    return p;
}

struct SyntheticPoint {
    std::vector<double> values;
    std::size_t source_index = 0;
    std::size_t generator_index = 0;
    std::optional<bool> misclassified;  // unset until gated
};

inline SyntheticPoint generate(const MlpNetwork& g, std::span<const double> x, std::size_t source_index = 0,
                               std::size_t generator_index = 0) {
    if (g.output_dim() != g.input_dim()) throw ShapeError("generator output dim must equal its input dim");
    if (x.size() != g.input_dim()) throw ShapeError("sample does not match generator input dim");
    return {forward(g, x).output_column(), source_index, generator_index, std::nullopt};
}

struct ClassifierLoss {
    double loss = 0.0;
    GradVector grad;
};

namespace detail {

inline Matrix columns_of(const Dataset& ds, std::span<const std::size_t> idx) {
    Matrix m(static_cast<Eigen::Index>(ds.feature_dim), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
        for (std::size_t f = 0; f < ds.feature_dim; ++f) m(f, j) = ds.samples[idx[j]].features[f];
    return m;
}

inline Matrix all_columns(const Dataset& ds) {
    Matrix m(static_cast<Eigen::Index>(ds.feature_dim), static_cast<Eigen::Index>(ds.size()));
    for (std::size_t j = 0; j < ds.size(); ++j)
        for (std::size_t f = 0; f < ds.feature_dim; ++f) m(f, j) = ds.samples[j].features[f];
    return m;
}

inline std::vector<double> column(const Matrix& m, Eigen::Index j) {
    std::vector<double> v(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) v[r] = m(r, j);
    return v;
}

// Sum of CE over the columns of a forward trace; d_logits is filled with the
// per-column CE gradient times weights[j].
inline double ce_columns(const ForwardTrace& t, std::span<const std::size_t> labels, std::span<const double> weights,
                         Matrix& d_logits) {
    const Matrix& probs = t.output;
    d_logits = probs;
    double total = 0.0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        const auto y = labels[j];
        if (y >= static_cast<std::size_t>(probs.rows()))
            throw LabelError("label " + std::to_string(y) + " out of range for " + std::to_string(probs.rows()) +
                             " classes");
        total += weights[j] * -std::log(probs(y, j) + kCrossEntropyFloor);
        d_logits(y, j) -= 1.0;
        d_logits.col(j) *= weights[j];
    }
    return total;
}

} // namespace detail

// Sum_k CE(D(x_k_hat), y) + CE(D(x), y), with the gradient of the whole sum.
// normalize_by_k scales the synthetic terms by 1/K.
inline ClassifierLoss classifier_loss(const MlpNetwork& d, const Sample& x, std::span<const SyntheticPoint> synths,
                                      bool normalize_by_k = false) {
    if (d.output_mode != OutputMode::softmax) throw ConfigError("classifier needs a softmax output");
    const auto n = static_cast<Eigen::Index>(synths.size() + 1);
    Matrix in(static_cast<Eigen::Index>(x.features.size()), n);
    in.col(0) = to_column(x.features);
    for (std::size_t k = 0; k < synths.size(); ++k) {
        if (synths[k].values.size() != x.features.size()) throw ShapeError("synthetic point dim differs from sample");
        in.col(static_cast<Eigen::Index>(k) + 1) = to_column(synths[k].values);
    }
    const ForwardTrace t = forward(d, in);
    std::vector<std::size_t> labels(static_cast<std::size_t>(n), x.label);
    std::vector<double> weights(static_cast<std::size_t>(n), 1.0);
    if (normalize_by_k && !synths.empty())
        std::fill(weights.begin() + 1, weights.end(), 1.0 / static_cast<double>(synths.size()));
    Matrix d_logits;
    ClassifierLoss out;
    out.loss = detail::ce_columns(t, labels, weights, d_logits);
    out.grad = backward_logits(d, t, d_logits);
    return out;
}

inline SyntheticPoint gate(const MlpNetwork& d, SyntheticPoint synth, std::size_t y) {
    synth.misclassified = predict(d, synth.values).predicted_class != y;
    return synth;
}

// Gradient of ||G(x)||_2 w.r.t. the generator parameters; zero where the
// output is exactly zero.
inline GradVector importance_sample(const MlpNetwork& g, std::span<const double> x) {
    const ForwardTrace t = forward(g, x);
    const double norm = t.output.norm();
    if (!std::isfinite(norm)) throw NumericError("generator output is not finite");
    if (norm == 0.0) return GradVector(g.params.size());
    return backward(g, t, Matrix(t.output / norm));
}

// Running mean of |g| over every absorbed importance sample.
struct OmegaStore {
    std::vector<double> omega;
    std::size_t count = 0;

    OmegaStore() = default;
    explicit OmegaStore(std::size_t n) : omega(n, 0.0) {}

    void absorb(const GradVector& g) {
        if (g.size() != omega.size()) throw ShapeError("importance sample length differs from omega");
        const double c = static_cast<double>(count);
        for (std::size_t i = 0; i < omega.size(); ++i) omega[i] = (c * omega[i] + std::abs(g[i])) / (c + 1.0);
        ++count;
    }
};

inline OmegaStore omega_update(OmegaStore store, const GradVector& g) {
    store.absorb(g);
    return store;
}

struct ParamSnapshot {
    std::vector<double> theta_star;
};

struct GeneratorPopulation {
    std::vector<MlpNetwork> generators;
    std::vector<OmegaStore> omegas;
    std::vector<ParamSnapshot> snapshots;

    std::size_t size() const { return generators.size(); }

    static GeneratorPopulation from_networks(std::vector<MlpNetwork> nets) {
        GeneratorPopulation pop;
        pop.generators = std::move(nets);
        for (const auto& g : pop.generators) {
            pop.omegas.emplace_back(g.params.size());
            pop.snapshots.push_back({g.params});
        }
        pop.validate();
        return pop;
    }

    // K generators with dims (in, hidden..., in), each from its own seed stream.
    static GeneratorPopulation make(std::size_t K, const std::vector<std::size_t>& dims, std::uint64_t seed) {
        std::vector<MlpNetwork> nets;
        for (std::size_t k = 0; k < K; ++k) {
            Rng rng(derive_seed(seed, {200, k}));
            nets.push_back(make_mlp(dims, OutputMode::linear, rng));
        }
        return from_networks(std::move(nets));
    }

    void validate() const {
        if (generators.empty()) return;
        const auto& dims = generators.front().layer_dims;
        for (const auto& g : generators) {
            g.validate();
            if (g.layer_dims != dims) throw ShapeError("generators must share layer dims");
            if (g.output_mode != OutputMode::linear) throw ConfigError("generators use a linear output");
            if (g.dropout_p != 0.0) throw ConfigError("generators do not use dropout");
            if (g.input_dim() != g.output_dim()) throw ShapeError("generator output dim must equal input dim");
        }
        if (omegas.size() != generators.size() || snapshots.size() != generators.size())
            throw ShapeError("population stores are not aligned with generators");
    }
};

inline constexpr double kMaxMasMultiplier = 1e300;

// beta^n evaluated in log space and capped at 1e300.
inline double mas_multiplier(double beta, std::size_t n) {
    if (n == 0) return 1.0;
    const double log_m = static_cast<double>(n) * std::log(beta);
    return log_m >= std::log(kMaxMasMultiplier) ? kMaxMasMultiplier : std::exp(log_m);
}

struct MasPenalty {
    double penalty = 0.0;
    GradVector grad;
};

// beta^n * sum Omega (theta - theta*)^2 and its gradient.
inline MasPenalty mas_penalty(const MlpNetwork& g, const ParamSnapshot& snap, const OmegaStore& store, double beta,
                              std::size_t n) {
    const auto& theta = g.params;
    if (snap.theta_star.size() != theta.size() || store.omega.size() != theta.size())
        throw ShapeError("snapshot or omega is not aligned with generator params");
    const double mult = mas_multiplier(beta, n);
    MasPenalty out{0.0, GradVector(theta.size())};
    double raw = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double diff = theta[i] - snap.theta_star[i];
        raw += store.omega[i] * diff * diff;
        out.grad[i] = mult * 2.0 * store.omega[i] * diff;
    }
    out.penalty = mult * raw;
    return out;
}

struct EpochMetrics {
    std::size_t epoch = 0;  // completed epochs, 1-based
    double acc_real = 0.0;
    double acc_synth = 0.0;
    double mean_synth_mse = 0.0;
    double mean_mas_penalty = 0.0;
    double gated_fraction = 0.0;
};

struct TrainState {
    std::size_t epoch = 0;  // n, 0-based index of the next epoch
    std::vector<EpochMetrics> history;
    std::vector<double> d_velocity;
    std::vector<std::vector<double>> g_velocity;
};

struct GeneratorStepResult {
    double mse = 0.0;
    double mas_penalty = 0.0;  // before the step
};

// One SGD step of a generator on a misclassified synthetic point:
// bon:   mse(G(x), x)
// bonpp: alpha * mse(G(x), x) + beta^n * sum Omega (theta - theta*)^2
inline GeneratorStepResult generator_step(MlpNetwork& g, const SyntheticPoint& synth, std::span<const double> x,
                                          const BonConfig& cfg, const TrainState& state, const ParamSnapshot& snap,
                                          const OmegaStore& store, std::vector<double>* velocity = nullptr) {
    if (!synth.misclassified.has_value() || !*synth.misclassified)
        throw ContractError("generator_step requires a misclassified synthetic point");
    if (cfg.mode == Mode::baseline) throw ContractError("baseline mode has no generators");
    const ForwardTrace t = forward(g, x);
    const auto out = t.output_column();
    LossGrad fit = mse(out, x);
    GeneratorStepResult res;
    res.mse = fit.loss;
    const double scale = cfg.mode == Mode::bonpp ? cfg.alpha : 1.0;
    for (auto& v : fit.grad) v *= scale;
    GradVector grad = backward(g, t, fit.grad);
    std::vector<double> scratch;
    auto& vel = velocity ? *velocity : scratch;
    if (cfg.mode != Mode::bonpp) {
        sgd_step(g.params, grad, cfg.lr_g, cfg.momentum, vel);
        return res;
    }
    const MasPenalty mas = mas_penalty(g, snap, store, cfg.beta, state.epoch);
    res.mas_penalty = mas.penalty;
    if (cfg.penalty_step == PenaltyStep::sgd) {
        grad += mas.grad;
        sgd_step(g.params, grad, cfg.lr_g, cfg.momentum, vel);
        return res;
    }
    // Data step first, then the exact minimizer of
    // |theta - v|^2 / (2 lr) + mult * sum omega (theta - theta*)^2.
    sgd_step(g.params, grad, cfg.lr_g, cfg.momentum, vel);
    const double c = 2.0 * cfg.lr_g * mas_multiplier(cfg.beta, state.epoch);
    for (std::size_t i = 0; i < g.params.size(); ++i) {
        const double star = snap.theta_star[i];
        g.params[i] = star + (g.params[i] - star) / (1.0 + c * store.omega[i]);
    }
    return res;
}

struct Evaluation {
    double accuracy = 0.0;
    std::vector<std::size_t> correct_per_class;
    std::vector<std::size_t> total_per_class;
};

inline Evaluation evaluate(const MlpNetwork& d, const Dataset& ds) {
    if (ds.empty()) throw ConfigError("cannot evaluate on an empty dataset");
    const ForwardTrace t = forward(d, detail::all_columns(ds));
    Evaluation ev;
    ev.correct_per_class.assign(d.output_dim(), 0);
    ev.total_per_class.assign(d.output_dim(), 0);
    std::size_t correct = 0;
    for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto y = ds.samples[j].label;
        if (y >= d.output_dim()) throw LabelError("dataset label exceeds classifier outputs");
        ++ev.total_per_class[y];
        if (argmax_column(t.output, static_cast<Eigen::Index>(j)) == y) {
            ++ev.correct_per_class[y];
            ++correct;
        }
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
    return ev;
}

struct AbsorbEvent {
    std::size_t epoch;
    std::size_t sample;
    std::size_t generator;
    const MlpNetwork& network;
    std::span<const double> x;
    const GradVector& importance;
};

struct GateEvent {
    std::size_t epoch;
    std::size_t sample;
    std::size_t generator;
    bool misclassified;
    double mas_penalty;         // current penalty of this generator, before any step at this point
    bool first_in_epoch;        // first gate evaluation of the epoch, any generator
    bool first_for_generator;   // first gate evaluation of this generator in the epoch
};

// Optional hooks. When any hook is set the generator loop runs on one thread,
// so events arrive in a fixed order.
struct EngineObserver {
    std::function<void(const AbsorbEvent&)> on_absorb;
    std::function<void(const GateEvent&)> on_gate;

    bool active() const { return static_cast<bool>(on_absorb) || static_cast<bool>(on_gate); }
};

inline constexpr std::uint64_t kShuffleStream = 1;
inline constexpr std::uint64_t kDropoutStream = 2;

// Synthetic cloud statistics of the current population on a dataset.
struct CloudStats {
    double acc_synth = 0.0;
    double mean_synth_mse = 0.0;
};

inline CloudStats cloud_stats(const MlpNetwork& d, const GeneratorPopulation& pop, const Dataset& ds) {
    if (pop.size() == 0) return {};
    const Matrix real = detail::all_columns(ds);
    std::size_t correct = 0;
    double mse_sum = 0.0;
    for (std::size_t k = 0; k < pop.size(); ++k) {
        const Matrix synth = forward(pop.generators[k], real).output;
        const Matrix probs = forward(d, synth).output;
        for (std::size_t j = 0; j < ds.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            if (argmax_column(probs, jj) == ds.samples[j].label) ++correct;
            mse_sum += (synth.col(jj) - real.col(jj)).squaredNorm() / static_cast<double>(ds.feature_dim);
        }
    }
    const double pairs = static_cast<double>(pop.size() * ds.size());
    return {static_cast<double>(correct) / pairs, mse_sum / pairs};
}

namespace detail {

struct GeneratorTally {
    std::size_t gated = 0;
    std::size_t steps = 0;
    double penalty_sum = 0.0;
};

inline void check_inputs(const MlpNetwork& d, const GeneratorPopulation& pop, const Dataset& ds, const BonConfig& cfg) {
    cfg.validate();
    if (ds.empty()) throw ConfigError("dataset is empty");
    d.validate();
    if (d.output_mode != OutputMode::softmax) throw ConfigError("classifier needs a softmax output");
    if (d.input_dim() != ds.feature_dim) throw ShapeError("classifier input dim differs from dataset features");
    if (d.output_dim() < ds.class_count) throw ShapeError("classifier has fewer outputs than classes");
    if (cfg.mode == Mode::baseline) return;
    pop.validate();
    if (pop.size() != cfg.K) throw ConfigError("population size differs from K");
    if (pop.generators.front().input_dim() != ds.feature_dim)
        throw ShapeError("generator input dim differs from dataset features");
}

inline void train_epoch(MlpNetwork& d, GeneratorPopulation& pop, const Dataset& ds, const BonConfig& cfg,
                        TrainState& state, const EngineObserver* obs) {
    check_inputs(d, pop, ds, cfg);
    const bool with_generators = cfg.mode != Mode::baseline;
    const std::size_t K = with_generators ? pop.size() : 0;
    const std::size_t n = state.epoch;
    const auto dim = static_cast<Eigen::Index>(ds.feature_dim);
    const bool observed = obs != nullptr && obs->active();
    const std::size_t threads = observed ? 1 : cfg.threads;

    if (cfg.mode == Mode::bonpp)
        for (std::size_t k = 0; k < K; ++k) pop.snapshots[k].theta_star = pop.generators[k].params;
    if (state.g_velocity.size() != K) state.g_velocity.assign(K, {});

    std::vector<GeneratorTally> tally(K);
    Rng dropout_rng(derive_seed(cfg.seed, {n, kDropoutStream}));
    bool first_in_epoch = true;
    std::vector<char> first_for_generator(K, 1);

    for (const Batch& batch : batch_iter(ds, cfg.batch_size, derive_seed(cfg.seed, {n, kShuffleStream}))) {
        const auto B = static_cast<Eigen::Index>(batch.size());
        const Matrix real = columns_of(ds, batch);

        std::vector<Matrix> synth(K);
        parallel_for(K, threads, [&](std::size_t k) { synth[k] = forward(pop.generators[k], real).output; });

        // Column layout per sample s: real, then generators 0..K-1.
        const auto stride = static_cast<Eigen::Index>(K + 1);
        Matrix joint(dim, B * stride);
        std::vector<std::size_t> labels(static_cast<std::size_t>(B * stride));
        // Summed over the real point and its K synthetics, averaged over the batch.
        const double per_sample = 1.0 / static_cast<double>(B);
        std::vector<double> weights(labels.size(), per_sample);
        const double synth_weight =
            (cfg.normalize_by_k && K > 0 ? 1.0 / static_cast<double>(K) : 1.0) * per_sample;
        for (Eigen::Index s = 0; s < B; ++s) {
            const auto y = ds.samples[batch[s]].label;
            joint.col(s * stride) = real.col(s);
            labels[s * stride] = y;
            for (std::size_t k = 0; k < K; ++k) {
                const auto c = s * stride + 1 + static_cast<Eigen::Index>(k);
                joint.col(c) = synth[k].col(s);
                labels[c] = y;
                weights[c] = synth_weight;
            }
        }

        // Gate matrix: misclassified[k * B + s].
        std::vector<char> misclassified(K * batch.size(), 0);
        auto compute_gates = [&] {
            if (K == 0) return;
            Matrix all_synth(dim, B * static_cast<Eigen::Index>(K));
            for (std::size_t k = 0; k < K; ++k) all_synth.middleCols(static_cast<Eigen::Index>(k) * B, B) = synth[k];
            const Matrix probs = forward(d, all_synth).output;
            for (std::size_t k = 0; k < K; ++k)
                for (Eigen::Index s = 0; s < B; ++s) {
                    const auto c = static_cast<Eigen::Index>(k) * B + s;
                    misclassified[static_cast<std::size_t>(c)] = argmax_column(probs, c) != ds.samples[batch[s]].label;
                }
        };

        if (cfg.gate_before_update) compute_gates();

        const ForwardTrace t = forward(d, joint, true, &dropout_rng);
        Matrix d_logits;
        ce_columns(t, labels, weights, d_logits);
        const GradVector d_grad = backward_logits(d, t, d_logits);
        sgd_step(d.params, d_grad, cfg.lr_d, cfg.momentum, state.d_velocity);

        if (!with_generators) continue;
        if (!cfg.gate_before_update) compute_gates();

        parallel_for(K, threads, [&](std::size_t k) {
            MlpNetwork& g = pop.generators[k];
            for (Eigen::Index s = 0; s < B; ++s) {
                const auto& sample = ds.samples[batch[s]];
                const std::span<const double> x = sample.features;
                if (cfg.mode == Mode::bonpp) {
                    const GradVector imp = importance_sample(g, x);
                    pop.omegas[k].absorb(imp);
                    if (obs && obs->on_absorb) obs->on_absorb({n, batch[s], k, g, x, imp});
                }
                const bool wrong = misclassified[k * batch.size() + static_cast<std::size_t>(s)] != 0;
                if (obs && obs->on_gate) {
                    const double pen = cfg.mode == Mode::bonpp
                                           ? mas_penalty(g, pop.snapshots[k], pop.omegas[k], cfg.beta, n).penalty
                                           : 0.0;
                    obs->on_gate({n, batch[s], k, wrong, pen, first_in_epoch, first_for_generator[k] != 0});
                    first_in_epoch = false;
                    first_for_generator[k] = 0;
                }
                if (!wrong) continue;
                ++tally[k].gated;
                SyntheticPoint sp{column(synth[k], s), batch[s], k, true};
                const auto res =
                    generator_step(g, sp, x, cfg, state, pop.snapshots[k], pop.omegas[k], &state.g_velocity[k]);
                ++tally[k].steps;
                tally[k].penalty_sum += res.mas_penalty;
            }
        });
    }

    EpochMetrics row;
    row.epoch = n + 1;
    row.acc_real = evaluate(d, ds).accuracy;
    if (with_generators) {
        const CloudStats cs = cloud_stats(d, pop, ds);
        row.acc_synth = cs.acc_synth;
        row.mean_synth_mse = cs.mean_synth_mse;
        std::size_t gated = 0, steps = 0;
        double penalty = 0.0;
        for (const auto& t : tally) {
            gated += t.gated;
            steps += t.steps;
            penalty += t.penalty_sum;
        }
        row.mean_mas_penalty = steps ? penalty / static_cast<double>(steps) : 0.0;
        row.gated_fraction = static_cast<double>(gated) / static_cast<double>(K * ds.size());
    }
    for (double v : {row.acc_real, row.acc_synth, row.mean_synth_mse, row.mean_mas_penalty})
        if (!std::isfinite(v)) throw NumericError("non-finite metric in epoch " + std::to_string(row.epoch));
    state.history.push_back(row);
    ++state.epoch;
}

} // namespace detail

inline void bon_epoch(MlpNetwork& d, GeneratorPopulation& pop, const Dataset& ds, const BonConfig& cfg,
                      TrainState& state, const EngineObserver* obs = nullptr) {
    if (cfg.mode != Mode::bon) throw ConfigError("bon_epoch needs mode bon");
    detail::train_epoch(d, pop, ds, cfg, state, obs);
}

inline void bonpp_epoch(MlpNetwork& d, GeneratorPopulation& pop, const Dataset& ds, const BonConfig& cfg,
                        TrainState& state, const EngineObserver* obs = nullptr) {
    if (cfg.mode != Mode::bonpp) throw ConfigError("bonpp_epoch needs mode bonpp");
    detail::train_epoch(d, pop, ds, cfg, state, obs);
}

// Classifier alone (with its own dropout), same batching and step rule.
inline void baseline_epoch(MlpNetwork& d, const Dataset& ds, const BonConfig& cfg, TrainState& state) {
    if (cfg.mode != Mode::baseline) throw ConfigError("baseline_epoch needs mode baseline");
    GeneratorPopulation none;
    detail::train_epoch(d, none, ds, cfg, state, nullptr);
}

inline void run_epoch(MlpNetwork& d, GeneratorPopulation& pop, const Dataset& ds, const BonConfig& cfg,
                      TrainState& state, const EngineObserver* obs = nullptr) {
    switch (cfg.mode) {
    case Mode::bon: bon_epoch(d, pop, ds, cfg, state, obs); break;
    case Mode::bonpp: bonpp_epoch(d, pop, ds, cfg, state, obs); break;
    case Mode::baseline: baseline_epoch(d, ds, cfg, state); break;
    }
}

} // namespace bon
