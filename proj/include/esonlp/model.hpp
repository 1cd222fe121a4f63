#pragma once

#include "esonlp/error.hpp"
#include "esonlp/features.hpp"
#include "esonlp/rng.hpp"
#include "esonlp/task.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace esonlp {

enum class Loss { Logistic, Hinge };
enum class ClassWeighting { None, InverseFrequency };

struct Hyperparams {
    Loss loss = Loss::Logistic;
    double l2_lambda = 1e-4;
    std::size_t epochs = 50;
    double eta0 = 0.1;
    std::uint64_t seed = 0;
    ClassWeighting class_weighting = ClassWeighting::None;

    void validate() const {
        if (!(l2_lambda >= 0.0) || !std::isfinite(l2_lambda)) {
            throw UsageError("l2_lambda must be a finite value >= 0");
        }
        if (epochs < 1) {
            throw UsageError("epochs must be at least 1");
        }
        if (!(eta0 > 0.0) || !std::isfinite(eta0)) {
            throw UsageError("eta0 must be positive");
        }
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["loss"] = loss == Loss::Logistic ? "logistic" : "hinge";
        j["l2_lambda"] = l2_lambda;
        j["epochs"] = epochs;
        j["eta0"] = eta0;
        j["seed"] = seed;
        j["class_weighting"] = class_weighting == ClassWeighting::None ? "none" : "inverse_frequency";
        return j;
    }

    static Hyperparams from_json(const nlohmann::json& j) {
        Hyperparams hp;
        const auto loss = j.at("loss").get<std::string>();
        if (loss != "logistic" && loss != "hinge") {
            throw DataError("unknown loss '" + loss + "'");
        }
        hp.loss = loss == "logistic" ? Loss::Logistic : Loss::Hinge;
        hp.l2_lambda = j.at("l2_lambda").get<double>();
        hp.epochs = j.at("epochs").get<std::size_t>();
        hp.eta0 = j.at("eta0").get<double>();
        hp.seed = j.at("seed").get<std::uint64_t>();
        const auto cw = j.at("class_weighting").get<std::string>();
        if (cw != "none" && cw != "inverse_frequency") {
            throw DataError("unknown class_weighting '" + cw + "'");
        }
        hp.class_weighting = cw == "none" ? ClassWeighting::None : ClassWeighting::InverseFrequency;
        return hp;
    }
};

/**
 * Linear classifier over TF-IDF features.
 *
 * Binary tasks hold a single (w, b) pair scoring the positive class. Task 3
 * holds one one-vs-rest pair per class.
 */
struct LinearModel {
    Task task = Task::Task1;
    std::vector<std::vector<double>> weights;
    std::vector<double> biases;
    std::string vocab_fingerprint;
    Hyperparams hp;

    std::size_t dim() const { return weights.empty() ? 0 : weights.front().size(); }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["task"] = task_number(task);
        j["vocab_fingerprint"] = vocab_fingerprint;
        auto classes = nlohmann::ordered_json::array();
        for (std::size_t c = 0; c < weights.size(); ++c) {
            nlohmann::ordered_json cls;
            cls["w"] = weights[c];
            cls["b"] = biases[c];
            classes.push_back(std::move(cls));
        }
        j["classes"] = std::move(classes);
        j["hp"] = hp.to_json();
        return j;
    }

    static LinearModel from_json(const nlohmann::json& j) {
        try {
            LinearModel m;
            m.task = task_from_int(j.at("task").get<int>());
            m.vocab_fingerprint = j.at("vocab_fingerprint").get<std::string>();
            for (const auto& cls : j.at("classes")) {
                m.weights.push_back(cls.at("w").get<std::vector<double>>());
                m.biases.push_back(cls.at("b").get<double>());
            }
            m.hp = Hyperparams::from_json(j.at("hp"));
            const std::size_t expected = is_binary(m.task) ? 1 : class_count(m.task);
            if (m.weights.size() != expected) {
                throw DataError("model has " + std::to_string(m.weights.size()) + " weight vectors, expected " +
                                std::to_string(expected));
            }
            for (const auto& w : m.weights) {
                if (w.size() != m.dim()) {
                    throw DataError("model weight vectors differ in length");
                }
            }
            return m;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed model: ") + e.what());
        } catch (const UsageError& e) {
            throw DataError(std::string("malformed model: ") + e.what());
        }
    }
};

inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Per-example loss for a label y in {-1, +1} and margin z.
inline double loss_value(Loss loss, double y, double z) {
    const double m = y * z;
    if (loss == Loss::Hinge) {
        return std::max(0.0, 1.0 - m);
    }
    // log(1 + exp(-m)), stable for large |m|
    return m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

/// d loss / d z. For hinge this is the subgradient, 0 at the kink.
inline double loss_derivative(Loss loss, double y, double z) {
    const double m = y * z;
    if (loss == Loss::Hinge) {
        return m < 1.0 ? -y : 0.0;
    }
    return -y * sigmoid(-m);
}

/// Dense view of a binary problem, used by the objective and its gradient.
struct BinaryProblem {
    std::span<const SparseVector> x;
    std::span<const double> y;             // +1 / -1
    std::span<const double> sample_weight; // empty = all ones
    double l2_lambda = 0.0;
    Loss loss = Loss::Logistic;
};

/// (1/n) sum_i s_i * loss(y_i, w.x_i + b) + lambda * ||w||^2. The bias is not regularized.
inline double binary_objective(const BinaryProblem& p, std::span<const double> w, double b) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        const double s = p.sample_weight.empty() ? 1.0 : p.sample_weight[i];
        total += s * loss_value(p.loss, p.y[i], p.x[i].dot(w) + b);
    }
    const double sq = std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
    return total / static_cast<double>(p.x.size()) + p.l2_lambda * sq;
}

/// Analytic gradient of binary_objective. Returns {dw..., db}.
inline std::vector<double> binary_objective_gradient(const BinaryProblem& p, std::span<const double> w, double b) {
    std::vector<double> g(w.size() + 1, 0.0);
    const double n = static_cast<double>(p.x.size());
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        const double s = p.sample_weight.empty() ? 1.0 : p.sample_weight[i];
        const double d = s * loss_derivative(p.loss, p.y[i], p.x[i].dot(w) + b) / n;
        for (const auto& [j, v] : p.x[i].entries) {
            g[j] += d * v;
        }
        g.back() += d;
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
        g[j] += 2.0 * p.l2_lambda * w[j];
    }
    return g;
}

namespace detail {

/**
 * Plain SGD on one binary objective, learning rate eta0 / (1 + eta0 * lambda * t).
 * Weights are kept as scale * v so the L2 shrink is O(1) per step.
 */
inline void sgd_binary(const BinaryProblem& p, std::size_t dim, const Hyperparams& hp, std::vector<double>& w_out,
                       double& b_out) {
    std::vector<double> v(dim, 0.0);
    double scale = 1.0;
    double b = 0.0;
    std::vector<std::size_t> order(p.x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(hp.seed);
    std::uint64_t t = 0;
    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            const double eta = hp.eta0 / (1.0 + hp.eta0 * hp.l2_lambda * static_cast<double>(t));
            const auto& x = p.x[i];
            const double z = scale * x.dot(v) + b;
            const double s = p.sample_weight.empty() ? 1.0 : p.sample_weight[i];
            const double g = s * loss_derivative(p.loss, p.y[i], z);

            const double shrink = 1.0 - 2.0 * eta * hp.l2_lambda;
            if (shrink <= 0.0) {
                // step overshoots the L2 minimum; land on it
                std::fill(v.begin(), v.end(), 0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if (g != 0.0) {
                const double step = -eta * g / scale;
                for (const auto& [j, val] : x.entries) {
                    v[j] += step * val;
                }
                b -= eta * g;
            }
            if (scale < 1e-9) {
                for (auto& val : v) {
                    val *= scale;
                }
                scale = 1.0;
            }
            ++t;
        }
    }
    w_out.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        w_out[j] = scale * v[j];
    }
    b_out = b;
}

} // namespace detail

/**
 * Trains the linear classifier with SGD.
 *
 * Binary tasks fit one logistic (or hinge) model for the positive class.
 * Task 3 fits one-vs-rest models per class. Each binary fit reshuffles the
 * examples every epoch from the same seed, so training is deterministic.
 */
inline LinearModel train_sgd(std::span<const SparseVector> features, std::span<const std::size_t> labels, Task task,
                             const Hyperparams& hp, std::string vocab_fingerprint = {}) {
    hp.validate();
    if (features.empty() || features.size() != labels.size()) {
        throw UsageError("train_sgd needs equally many features and labels (and at least one)");
    }
    const std::size_t k = class_count(task);
    const std::size_t dim = features.front().dim;
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= k) {
            throw UsageError("label " + std::to_string(labels[i]) + " out of range for task");
        }
        if (features[i].dim != dim) {
            throw UsageError("feature vectors have inconsistent dimensions");
        }
        ++counts[labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) {
            throw DataError("class unrepresented in training data: " + class_names(task)[c]);
        }
    }

    std::vector<double> sample_weight;
    if (hp.class_weighting == ClassWeighting::InverseFrequency) {
        const double n = static_cast<double>(labels.size());
        for (std::size_t l : labels) {
            sample_weight.push_back(n / (static_cast<double>(k) * static_cast<double>(counts[l])));
        }
    }

    LinearModel model;
    model.task = task;
    model.hp = hp;
    model.vocab_fingerprint = std::move(vocab_fingerprint);
    const std::size_t n_fits = is_binary(task) ? 1 : k;
    model.weights.resize(n_fits);
    model.biases.resize(n_fits);
    std::vector<double> y(labels.size());
    for (std::size_t f = 0; f < n_fits; ++f) {
        const std::size_t positive = is_binary(task) ? 1 : f;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            y[i] = labels[i] == positive ? 1.0 : -1.0;
        }
        BinaryProblem p{features, y, sample_weight, hp.l2_lambda, hp.loss};
        detail::sgd_binary(p, dim, hp, model.weights[f], model.biases[f]);
    }
    return model;
}

/**
 * Class probabilities. Binary: (1 - p, p) with p = sigmoid(w.x + b).
 * Task 3: softmax over the one-vs-rest margins. Hinge models go through the
 * same squashing, which ranks correctly but is not calibrated.
 */
inline std::vector<double> predict_scores(const LinearModel& model, const SparseVector& x) {
    if (x.dim != model.dim()) {
        throw DataError("feature dimension " + std::to_string(x.dim) + " does not match model dimension " +
                        std::to_string(model.dim()));
    }
    if (is_binary(model.task)) {
        const double p = sigmoid(x.dot(model.weights[0]) + model.biases[0]);
        return {1.0 - p, p};
    }
    std::vector<double> margins(model.weights.size());
    for (std::size_t c = 0; c < margins.size(); ++c) {
        margins[c] = x.dot(model.weights[c]) + model.biases[c];
    }
    const double top = *std::max_element(margins.begin(), margins.end());
    double sum = 0.0;
    for (auto& m : margins) {
        m = std::exp(m - top);
        sum += m;
    }
    for (auto& m : margins) {
        m /= sum;
    }
    return margins;
}

/// Argmax; ties resolve to the less severe (lower) class.
inline std::size_t predict_class(std::span<const double> probs) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
        if (probs[c] > probs[best]) {
            best = c;
        }
    }
    return best;
}

} // namespace esonlp
