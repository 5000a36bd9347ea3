#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "softq/adam.hpp"
#include "softq/checkpoint.hpp"
#include "softq/mlp.hpp"

using namespace softq;

namespace {

MlpParams single_linear(double w, double b) {
    MlpParams p;
    p.layers.push_back({Matrix::Constant(1, 1, w), Vector::Constant(1, b)});
    return p;
}

// Forward pass written out per sample and per unit.
Matrix straight_line_forward(const MlpParams& p, const Matrix& input) {
    Matrix out(input.rows(), p.output_dim());
    for (Eigen::Index r = 0; r < input.rows(); ++r) {
        std::vector<double> x;
        for (Eigen::Index c = 0; c < input.cols(); ++c) x.push_back(input(r, c));
        for (std::size_t k = 0; k < p.layers.size(); ++k) {
            const auto& l = p.layers[k];
            std::vector<double> y(static_cast<std::size_t>(l.weight.rows()));
            for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
                double z = l.bias(i);
                for (Eigen::Index j = 0; j < l.weight.cols(); ++j) z += l.weight(i, j) * x[static_cast<std::size_t>(j)];
                if (k + 1 < p.layers.size())
                    z = z > 0 ? z : 0;
                else if (p.output == OutputActivation::Tanh)
                    z = std::tanh(z);
                y[static_cast<std::size_t>(i)] = z;
            }
            x = y;
        }
        for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = x[static_cast<std::size_t>(c)];
    }
    return out;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

double contracted(const MlpParams& p, const Matrix& x, const Matrix& cot) {
    return mlp_forward(p, x).cwiseProduct(cot).sum();
}

// Largest relative error between reverse-mode and central differences (h = 1e-5).
double worst_fd_error(MlpParams p, const Matrix& x, const Matrix& cot) {
    const MlpGradients g = mlp_backward(p, x, cot);
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        auto probe = [&](double& slot, double analytic) {
            const double keep = slot;
            slot = keep + h;
            const double up = contracted(p, x, cot);
            slot = keep - h;
            const double down = contracted(p, x, cot);
            slot = keep;
            worst = std::max(worst, rel_err(analytic, (up - down) / (2 * h)));
        };
        for (Eigen::Index i = 0; i < p.layers[k].weight.size(); ++i)
            probe(p.layers[k].weight.data()[i], g.params.layers[k].weight.data()[i]);
        for (Eigen::Index i = 0; i < p.layers[k].bias.size(); ++i) probe(p.layers[k].bias(i), g.params.layers[k].bias(i));
    }
    Matrix xx = x;
    for (Eigen::Index i = 0; i < xx.size(); ++i) {
        const double keep = xx.data()[i];
        xx.data()[i] = keep + h;
        const double up = contracted(p, xx, cot);
        xx.data()[i] = keep - h;
        const double down = contracted(p, xx, cot);
        xx.data()[i] = keep;
        worst = std::max(worst, rel_err(g.input.data()[i], (up - down) / (2 * h)));
    }
    return worst;
}

}  // namespace

TEST(MlpForward, ZeroNetworkGivesZero) {
    Rng rng(1);
    MlpParams p = make_mlp(3, {4, 5}, 2, OutputActivation::Identity, rng);
    p *= 0.0;
    EXPECT_TRUE(mlp_forward(p, standard_normal(6, 3, rng)).isZero(0.0));
}

TEST(MlpForward, SingleAffineLayer) {
    const Matrix out = mlp_forward(single_linear(2.0, 1.0), Matrix::Constant(1, 1, 3.0));
    EXPECT_DOUBLE_EQ(out(0, 0), 7.0);
}

TEST(MlpForward, MatchesStraightLineEvaluation) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const auto act = seed % 2 ? OutputActivation::Tanh : OutputActivation::Identity;
        const MlpParams p = make_mlp(4, {7, 6}, 3, act, rng);
        const Matrix x = standard_normal(5, 4, rng);
        EXPECT_LT((mlp_forward(p, x) - straight_line_forward(p, x)).cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(MlpForward, TapeAndPlainPassAgree) {
    Rng rng(4);
    const MlpParams p = make_mlp(3, {8, 8}, 2, OutputActivation::Tanh, rng);
    const Matrix x = standard_normal(10, 3, rng);
    MlpTape tape;
    EXPECT_EQ(mlp_forward(p, x, tape), mlp_forward(p, x));
}

TEST(MlpForward, ShapeMismatchThrows) {
    Rng rng(0);
    const MlpParams p = make_mlp(3, {4}, 1, OutputActivation::Identity, rng);
    EXPECT_THROW(mlp_forward(p, Matrix::Zero(2, 4)), InvalidInput);
    MlpTape tape;
    mlp_forward(p, Matrix::Zero(2, 3), tape);
    EXPECT_THROW(mlp_backward(p, tape, Matrix::Zero(3, 1)), InvalidInput);
    EXPECT_THROW(mlp_backward(p, tape, Matrix::Zero(2, 2)), InvalidInput);
}

TEST(MlpForward, InitWithinFanInBounds) {
    Rng rng(3);
    const MlpParams p = make_mlp(16, {200, 200}, 2, OutputActivation::Identity, rng);
    EXPECT_LE(p.layers[0].weight.cwiseAbs().maxCoeff(), 0.25);
    EXPECT_LE(p.layers[1].weight.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(200.0));
    EXPECT_EQ(p.parameter_count(), 16u * 200 + 200 + 200 * 200 + 200 + 200 * 2 + 2);
}

TEST(MlpBackward, LinearNetGradient) {
    MlpParams p;
    p.layers.push_back({Matrix::Constant(1, 1, 1.5), Vector::Zero(1)});
    const Matrix x = Matrix::Constant(1, 1, -2.0);
    const MlpGradients g = mlp_backward(p, x, Matrix::Ones(1, 1));
    EXPECT_DOUBLE_EQ(g.params.layers[0].weight(0, 0), -2.0);
    EXPECT_DOUBLE_EQ(g.input(0, 0), 1.5);
}

TEST(MlpBackward, FiniteDifferencesTwentyNets) {
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(100 + seed);
        const auto act = seed % 2 ? OutputActivation::Tanh : OutputActivation::Identity;
        const MlpParams p = make_mlp(3, {6, 5}, 2, act, rng);
        worst = std::max(worst, worst_fd_error(p, standard_normal(4, 3, rng), standard_normal(4, 2, rng)));
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(MlpBackward, TanhSaturation) {
    MlpParams p;
    p.output = OutputActivation::Tanh;
    p.layers.push_back({Matrix::Constant(1, 1, 30.0), Vector::Zero(1)});
    const MlpGradients g = mlp_backward(p, Matrix::Constant(1, 1, 1.0), Matrix::Ones(1, 1));
    EXPECT_LT(std::abs(g.params.layers[0].weight(0, 0)), 1e-15);
    EXPECT_LT(std::abs(g.input(0, 0)), 1e-15);
}

TEST(MlpBackward, ReluSubgradientAtZeroIsZero) {
    MlpParams p;
    p.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Zero(1)});
    p.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Zero(1)});
    const MlpGradients g = mlp_backward(p, Matrix::Zero(1, 1), Matrix::Ones(1, 1));
    EXPECT_EQ(g.input(0, 0), 0.0);
    EXPECT_EQ(g.params.layers[0].weight(0, 0), 0.0);
}

TEST(MlpBackward, LinearInCotangent) {
    Rng rng(8);
    const MlpParams p = make_mlp(4, {9, 9}, 3, OutputActivation::Tanh, rng);
    const Matrix x = standard_normal(6, 4, rng);
    const Matrix c1 = standard_normal(6, 3, rng), c2 = standard_normal(6, 3, rng);
    const MlpGradients g1 = mlp_backward(p, x, c1), g2 = mlp_backward(p, x, c2), g12 = mlp_backward(p, x, c1 + c2);
    EXPECT_LT((g12.input - g1.input - g2.input).cwiseAbs().maxCoeff(), 1e-12);
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        EXPECT_LT((g12.params.layers[k].weight - g1.params.layers[k].weight - g2.params.layers[k].weight)
                      .cwiseAbs()
                      .maxCoeff(),
                  1e-12);
        EXPECT_LT((g12.params.layers[k].bias - g1.params.layers[k].bias - g2.params.layers[k].bias).cwiseAbs().maxCoeff(),
                  1e-12);
    }
}

TEST(MlpBackward, DeterministicGivenSeed) {
    auto run = [] {
        Rng rng(55);
        const MlpParams p = make_mlp(3, {20, 20}, 2, OutputActivation::Tanh, rng);
        const Matrix x = standard_normal(7, 3, rng);
        return mlp_backward(p, x, standard_normal(7, 2, rng));
    };
    const MlpGradients a = run(), b = run();
    EXPECT_EQ(a.input, b.input);
    EXPECT_TRUE(a.params == b.params);
}

TEST(MlpBackward, SkippingHalvesLeavesOtherIntact) {
    Rng rng(2);
    const MlpParams p = make_mlp(3, {5}, 2, OutputActivation::Identity, rng);
    const Matrix x = standard_normal(4, 3, rng), c = standard_normal(4, 2, rng);
    const MlpGradients full = mlp_backward(p, x, c);
    EXPECT_EQ(mlp_backward(p, x, c, true, false).params, full.params);
    const MlpGradients input_only = mlp_backward(p, x, c, false, true);
    EXPECT_TRUE(input_only.params.layers.empty());
    EXPECT_EQ(input_only.input, full.input);
}

TEST(MlpJvp, MatchesFiniteDifferences) {
    Rng rng(12);
    const MlpParams p = make_mlp(4, {10, 10}, 2, OutputActivation::Tanh, rng);
    const Matrix x = standard_normal(5, 4, rng), t = standard_normal(5, 4, rng);
    MlpTape tape;
    mlp_forward(p, x, tape);
    const Matrix fd = (mlp_forward(p, x + 1e-6 * t) - mlp_forward(p, x - 1e-6 * t)) / 2e-6;
    EXPECT_LT((mlp_jvp(p, tape, t) - fd).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
    MlpParams p = single_linear(1.0, -1.0);
    MlpParams g = single_linear(3.0, -0.02);
    AdamState opt(p, 0.1);
    adam_step(opt, p, g);
    EXPECT_NEAR(p.layers[0].weight(0, 0), 1.0 - 0.1, 1e-6);
    EXPECT_NEAR(p.layers[0].bias(0), -1.0 + 0.1, 1e-5);
    EXPECT_EQ(opt.step, 1);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    MlpParams p = single_linear(0.3, 0.4);
    const MlpParams before = p;
    AdamState opt(p, 0.5);
    for (int i = 0; i < 100; ++i) adam_step(opt, p, p.zeros_like());
    EXPECT_EQ(p, before);
}

TEST(Adam, DescendsParabola) {
    MlpParams p = single_linear(1.0, 0.0);
    AdamState opt(p, 0.05);
    for (int i = 0; i < 200; ++i) {
        MlpParams g = p.zeros_like();
        g.layers[0].weight(0, 0) = 2 * p.layers[0].weight(0, 0);
        adam_step(opt, p, g);
    }
    EXPECT_LT(std::abs(p.layers[0].weight(0, 0)), 0.1);
}

TEST(Adam, ShapeMismatchThrows) {
    MlpParams p = single_linear(1, 1);
    AdamState opt(p, 0.1);
    Rng rng(0);
    EXPECT_THROW(adam_step(opt, p, make_mlp(2, {}, 1, OutputActivation::Identity, rng)), InvalidInput);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng(31);
    Checkpoint c;
    c.epoch = 42;
    c.nets.emplace("q", make_mlp(4, {7, 7}, 1, OutputActivation::Identity, rng));
    c.nets.emplace("policy", make_mlp(4, {7, 7}, 2, OutputActivation::Tanh, rng));
    c.nets.at("q").layers[0].weight(0, 0) = 0.1 + 0.2;
    c.nets.at("q").layers[0].bias(0) = -std::numeric_limits<double>::denorm_min();
    std::stringstream ss;
    write_checkpoint(ss, c);
    const Checkpoint back = read_checkpoint(ss);
    EXPECT_TRUE(back == c);
    EXPECT_EQ(back.at("policy").output, OutputActivation::Tanh);
    EXPECT_THROW(back.at("missing"), InvalidInput);
}

TEST(Checkpoint, RejectsCorruptStreams) {
    std::stringstream junk("not a checkpoint at all");
    EXPECT_THROW(read_checkpoint(junk), InvalidInput);
    Rng rng(1);
    Checkpoint c;
    c.nets.emplace("q", make_mlp(2, {3}, 1, OutputActivation::Identity, rng));
    std::stringstream ss;
    write_checkpoint(ss, c);
    std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 5));
    EXPECT_THROW(read_checkpoint(cut), InvalidInput);
}
