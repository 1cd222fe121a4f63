#include "support.hpp"

#include <cmath>

using namespace esonlp;

namespace {

SparseVector dense(std::vector<double> v) {
    SparseVector x;
    x.dim = v.size();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] != 0.0) {
            x.entries.emplace_back(static_cast<std::uint32_t>(i), v[i]);
        }
    }
    return x;
}

double norm(const std::vector<double>& w) { return std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0)); }

double accuracy(const LinearModel& m, const std::vector<SparseVector>& x, const std::vector<std::size_t>& y) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ok += predict_class(predict_scores(m, x[i])) == y[i];
    }
    return static_cast<double>(ok) / static_cast<double>(x.size());
}

} // namespace

TEST(TaskMapping, Examples) {
    EXPECT_EQ(map_grade_to_task_label(Grade::G1, Task::Task1), 1u);
    EXPECT_EQ(map_grade_to_task_label(Grade::G1, Task::Task2), 0u);
    EXPECT_EQ(map_grade_to_task_label(Grade::G3, Task::Task3), 2u);
    const std::array<std::array<std::size_t, 4>, 3> table{{{0, 1, 1, 1}, {0, 0, 1, 1}, {0, 1, 2, 2}}};
    for (std::size_t t = 0; t < 3; ++t) {
        for (std::size_t g = 0; g < 4; ++g) {
            EXPECT_EQ(map_grade_to_task_label(kAllGrades[g], kAllTasks[t]), table[t][g]);
        }
    }
}

TEST(TaskMapping, MonotoneAndInRange) {
    for (auto t : kAllTasks) {
        for (auto a : kAllGrades) {
            EXPECT_LT(map_grade_to_task_label(a, t), class_count(t));
            for (auto b : kAllGrades) {
                if (to_int(a) <= to_int(b)) {
                    EXPECT_LE(map_grade_to_task_label(a, t), map_grade_to_task_label(b, t));
                }
            }
        }
    }
    EXPECT_THROW(grade_from_int(4), DataError);
    EXPECT_THROW(task_from_int(0), UsageError);
}

TEST(Sgd, SeparableToyReachesFullAccuracy) {
    const std::vector<SparseVector> x{dense({1.0, 0.0}), dense({0.9, 0.2}), dense({0.0, 1.0}), dense({0.2, 0.8})};
    const std::vector<std::size_t> y{1, 1, 0, 0};

    // grid oracle: some (w1, w2, b) on a coarse grid separates the four points
    bool separable = false;
    for (int i = -20; i <= 20 && !separable; ++i) {
        for (int j = -20; j <= 20 && !separable; ++j) {
            for (int k = -20; k <= 20 && !separable; ++k) {
                const double w1 = i / 10.0, w2 = j / 10.0, b = k / 10.0;
                bool all = true;
                for (std::size_t n = 0; n < 4; ++n) {
                    const double z = w1 * x[n].dot(std::vector{1.0, 0.0}) + w2 * x[n].dot(std::vector{0.0, 1.0}) + b;
                    all = all && ((z > 0) == (y[n] == 1));
                }
                separable = all;
            }
        }
    }
    ASSERT_TRUE(separable);

    Hyperparams hp;
    hp.epochs = 200;
    const auto m = train_sgd(x, y, Task::Task1, hp);
    EXPECT_EQ(accuracy(m, x, y), 1.0);
}

TEST(Sgd, StrongerPenaltyShrinksWeights) {
    const std::vector<SparseVector> x{dense({1.0, 0.0, 0.3}), dense({0.9, 0.2, 0.0}), dense({0.0, 1.0, 0.1}),
                                      dense({0.2, 0.8, 0.5}), dense({0.7, 0.1, 0.2}), dense({0.1, 0.6, 0.6})};
    const std::vector<std::size_t> y{1, 1, 0, 0, 1, 0};
    double previous = std::numeric_limits<double>::infinity();
    for (double lambda : {1e-4, 1.0, 1e3}) {
        Hyperparams hp;
        hp.l2_lambda = lambda;
        hp.seed = 5;
        const double n = norm(train_sgd(x, y, Task::Task1, hp).weights[0]);
        EXPECT_LT(n, previous) << lambda;
        previous = n;
    }
}

TEST(Sgd, DeterministicAndSeedSensitive) {
    Rng rng(12);
    std::vector<SparseVector> x;
    std::vector<std::size_t> y;
    for (int i = 0; i < 40; ++i) {
        x.push_back(dense({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()}));
        y.push_back(static_cast<std::size_t>(i % 3));
    }
    Hyperparams hp;
    hp.seed = 77;
    const auto a = train_sgd(x, y, Task::Task3, hp);
    const auto b = train_sgd(x, y, Task::Task3, hp);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.biases, b.biases);
    hp.seed = 78;
    EXPECT_NE(train_sgd(x, y, Task::Task3, hp).weights, a.weights);
    EXPECT_EQ(a.weights.size(), 3u);
}

TEST(Sgd, TokenOrderDoesNotChangeTheModel) {
    SynthSpec spec;
    spec.n_patients = 30;
    spec.seed = 13;
    const auto corpus = generate_corpus(spec);
    std::vector<TokenSeq> docs, shuffled;
    std::vector<std::size_t> y;
    Rng rng(1);
    for (const auto& n : corpus.notes) {
        docs.push_back(assemble_input(n, {}, SectionPolicy::ap_ih()));
        auto copy = docs.back();
        rng.shuffle(copy.tokens);
        shuffled.push_back(copy);
        y.push_back(map_grade_to_task_label(*n.gold_grade, Task::Task3));
    }
    const auto train = [&](const std::vector<TokenSeq>& d) {
        const auto v = fit_vocabulary(d);
        std::vector<SparseVector> x;
        for (const auto& t : d) {
            x.push_back(tfidf_vector(t, v));
        }
        return train_sgd(x, y, Task::Task3, Hyperparams{}, v.fingerprint());
    };
    const auto a = train(docs), b = train(shuffled);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.biases, b.biases);
    EXPECT_EQ(a.vocab_fingerprint, b.vocab_fingerprint);
}

TEST(Sgd, Errors) {
    const std::vector<SparseVector> x{dense({1.0}), dense({0.5})};
    try {
        train_sgd(x, std::vector<std::size_t>{0, 0}, Task::Task1, Hyperparams{});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("class unrepresented"), std::string::npos);
    }
    EXPECT_THROW(train_sgd(x, std::vector<std::size_t>{0, 1, 1}, Task::Task1, Hyperparams{}), UsageError);
    Hyperparams bad;
    bad.eta0 = 0.0;
    EXPECT_THROW(train_sgd(x, std::vector<std::size_t>{0, 1}, Task::Task1, bad), UsageError);
    bad = {};
    bad.epochs = 0;
    EXPECT_THROW(bad.validate(), UsageError);
    bad = {};
    bad.l2_lambda = -1;
    EXPECT_THROW(bad.validate(), UsageError);
}

TEST(Sgd, HingeAndClassWeightsTrain) {
    Rng rng(4);
    std::vector<SparseVector> x;
    std::vector<std::size_t> y;
    for (int i = 0; i < 60; ++i) {
        const bool pos = i % 6 == 0;
        x.push_back(dense({pos ? 1.0 : 0.1, pos ? 0.1 : 1.0, rng.uniform() * 0.1}));
        y.push_back(pos);
    }
    Hyperparams hp;
    hp.loss = Loss::Hinge;
    EXPECT_EQ(accuracy(train_sgd(x, y, Task::Task1, hp), x, y), 1.0);
    hp.loss = Loss::Logistic;
    hp.class_weighting = ClassWeighting::InverseFrequency;
    EXPECT_EQ(accuracy(train_sgd(x, y, Task::Task1, hp), x, y), 1.0);
}

TEST(Gradient, MatchesCentralDifferences) {
    Rng rng(2718);
    for (int trial = 0; trial < 100; ++trial) {
        const auto dim = static_cast<std::size_t>(rng.between(1, 6));
        const auto n = static_cast<std::size_t>(rng.between(1, 8));
        std::vector<SparseVector> x;
        std::vector<double> y, s;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> v(dim);
            for (auto& e : v) {
                e = rng.bernoulli(0.3) ? 0.0 : rng.uniform() * 4.0 - 2.0;
            }
            x.push_back(dense(v));
            y.push_back(rng.bernoulli(0.5) ? 1.0 : -1.0);
            s.push_back(0.5 + rng.uniform());
        }
        std::vector<double> w(dim);
        for (auto& e : w) {
            e = rng.uniform() * 2.0 - 1.0;
        }
        const double b = rng.uniform() - 0.5;
        BinaryProblem p{x, y, trial % 2 ? std::span<const double>(s) : std::span<const double>{},
                        rng.uniform() * 0.5, Loss::Logistic};

        const auto analytic = binary_objective_gradient(p, w, b);
        std::vector<double> numeric(dim + 1);
        const double h = 1e-6;
        for (std::size_t j = 0; j <= dim; ++j) {
            auto wp = w, wm = w;
            double bp = b, bm = b;
            if (j < dim) {
                wp[j] += h;
                wm[j] -= h;
            } else {
                bp += h;
                bm -= h;
            }
            numeric[j] = (binary_objective(p, wp, bp) - binary_objective(p, wm, bm)) / (2 * h);
        }
        double diff = 0.0, scale = 0.0;
        for (std::size_t j = 0; j <= dim; ++j) {
            diff += (analytic[j] - numeric[j]) * (analytic[j] - numeric[j]);
            scale += analytic[j] * analytic[j];
        }
        EXPECT_LT(std::sqrt(diff) / std::max(std::sqrt(scale), 1e-12), 1e-5) << "trial " << trial;
    }
}

TEST(PredictScores, ZeroModels) {
    LinearModel bin{Task::Task1, {std::vector<double>(3, 0.0)}, {0.0}, "", {}};
    EXPECT_EQ(predict_scores(bin, dense({1, 2, 3})), (std::vector<double>{0.5, 0.5}));
    LinearModel tri{Task::Task3, {std::vector<double>(2, 0.0), std::vector<double>(2, 0.0),
                                  std::vector<double>(2, 0.0)},
                    {0.0, 0.0, 0.0}, "", {}};
    for (double p : predict_scores(tri, dense({1, 1}))) {
        EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
    }
    EXPECT_THROW(predict_scores(bin, dense({1, 2})), DataError);
}

TEST(PredictScores, LargeMarginApproachesOneMonotonically) {
    LinearModel m{Task::Task1, {{1.0}}, {0.0}, "", {}};
    double last = 0.0;
    for (double z : {0.5, 2.0, 10.0, 50.0, 800.0}) {
        const auto p = predict_scores(m, dense({z}));
        EXPECT_GE(p[1], last);
        last = p[1];
    }
    EXPECT_DOUBLE_EQ(last, 1.0);
}

TEST(PredictScores, AlwaysADistribution) {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        LinearModel m{Task::Task3, {}, {}, "", {}};
        for (int c = 0; c < 3; ++c) {
            m.weights.push_back({rng.uniform() * 400 - 200, rng.uniform() * 400 - 200});
            m.biases.push_back(rng.uniform() * 10 - 5);
        }
        const auto p = predict_scores(m, dense({rng.uniform(), rng.uniform()}));
        EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-9);
        for (double v : p) {
            EXPECT_GE(v, 0.0);
        }
    }
}

TEST(PredictClass, ArgmaxWithLowTieBreak) {
    EXPECT_EQ(predict_class(std::vector{0.2, 0.8}), 1u);
    EXPECT_EQ(predict_class(std::vector{0.5, 0.5}), 0u);
    EXPECT_EQ(predict_class(std::vector{0.2, 0.5, 0.3}), 1u);
    EXPECT_EQ(predict_class(std::vector{0.2, 0.4, 0.4}), 1u);
}

TEST(LinearModelJson, RoundTrip) {
    const std::vector<SparseVector> x{dense({1.0, 0.0}), dense({0.0, 1.0}), dense({0.5, 0.5})};
    const auto m = train_sgd(x, std::vector<std::size_t>{0, 1, 2}, Task::Task3, Hyperparams{}, "abc");
    const auto back = LinearModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    EXPECT_EQ(back.weights, m.weights);
    EXPECT_EQ(back.biases, m.biases);
    EXPECT_EQ(back.vocab_fingerprint, "abc");
    EXPECT_EQ(back.hp.to_json(), m.hp.to_json());
    auto j = m.to_json();
    j["task"] = 1;
    EXPECT_THROW(LinearModel::from_json(j), DataError);
}
