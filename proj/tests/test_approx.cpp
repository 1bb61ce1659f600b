#include "ctrliter/approx.hpp"
#include "ctrliter/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace ctrliter;

namespace {

std::vector<Vector> random_points(int count, int dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vector> xs;
    for (int i = 0; i < count; ++i) {
        Vector x(dim);
        for (int j = 0; j < dim; ++j) x(j) = u(rng);
        xs.push_back(x);
    }
    return xs;
}

Vector scalars(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) out(i++) = d;
    return out;
}

BasisFamily polynomial_basis() {
    return BasisFamily({[](const Vector&) { return 1.0; }, [](const Vector& x) { return x(0); },
                        [](const Vector& x) { return x(0) * x(0); }});
}

double ridge_objective(const Matrix& design, const Vector& y, const Vector& theta, double gamma) {
    return gamma * theta.squaredNorm() + (design * theta - y).squaredNorm();
}

}  // namespace

TEST(FitParametric, ConstantInterpolation) {
    const BasisFamily one({[](const Vector&) { return 1.0; }});
    const auto m = fit_parametric(one, {Vector::Zero(1)}, scalars({2.0}), 0.0);
    EXPECT_NEAR(m.coefficients()(0, 0), 2.0, 1e-14);
    EXPECT_NEAR(m.predict_scalar(Vector::Constant(1, 17.0)), 2.0, 1e-14);
}

TEST(FitParametric, RidgeShrinks) {
    const BasisFamily one({[](const Vector&) { return 1.0; }});
    const auto m = fit_parametric(one, {Vector::Zero(1)}, scalars({2.0}), 1.0);
    EXPECT_NEAR(m.coefficients()(0, 0), 1.0, 1e-14);
}

TEST(FitParametric, RealizableTarget) {
    const auto xs = random_points(20, 1, 1);
    Vector y(20);
    for (int i = 0; i < 20; ++i) y(i) = 1.0 - 2.0 * xs[i](0) + 0.5 * xs[i](0) * xs[i](0);
    const auto m = fit_parametric(polynomial_basis(), xs, y, 0.0);
    EXPECT_LT(m.diagnostics().residual_norm, 1e-10);
    EXPECT_NEAR(m.coefficients()(1, 0), -2.0, 1e-10);
}

TEST(FitParametric, RankDeficientNeedsGamma) {
    const BasisFamily twice({[](const Vector&) { return 1.0; }, [](const Vector&) { return 1.0; }});
    const auto xs = random_points(5, 1, 2);
    EXPECT_THROW(fit_parametric(twice, xs, Vector(Vector::Ones(5)), 0.0), InputError);
    EXPECT_NO_THROW(fit_parametric(twice, xs, Vector(Vector::Ones(5)), 1e-3));
}

TEST(FitParametric, RidgeOptimality) {
    const auto xs = random_points(15, 1, 3);
    Vector y(15);
    for (int i = 0; i < 15; ++i) y(i) = std::sin(3 * xs[i](0));
    const double gamma = 0.1;
    const BasisFamily basis = polynomial_basis();
    const auto m = fit_parametric(basis, xs, y, gamma);
    const Vector theta = m.coefficients().col(0);
    const Matrix design = basis.design(xs);
    const double best = ridge_objective(design, y, theta, gamma);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        Vector dir(theta.size());
        for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = n(rng);
        dir *= 1e-3 / dir.norm();
        EXPECT_GT(ridge_objective(design, y, theta + dir, gamma), best);
    }
}

TEST(FitParametric, GammaMonotonicity) {
    const auto xs = random_points(15, 1, 5);
    Vector y(15);
    for (int i = 0; i < 15; ++i) y(i) = std::cos(2 * xs[i](0)) + xs[i](0);
    double last_res = -1.0, last_norm = 1e300;
    for (double g : {0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0}) {
        const auto m = fit_parametric(polynomial_basis(), xs, y, g);
        EXPECT_GE(m.diagnostics().residual_norm, last_res - 1e-12);
        EXPECT_LE(m.coefficients().norm(), last_norm + 1e-12);
        last_res = m.diagnostics().residual_norm;
        last_norm = m.coefficients().norm();
    }
}

TEST(FitParametric, VectorTargetsEqualStackedScalarFits) {
    const auto xs = random_points(12, 1, 6);
    Matrix ys(12, 2);
    for (int i = 0; i < 12; ++i) ys.row(i) << std::exp(xs[i](0)), xs[i](0) * 3.0;
    const auto joint = fit_parametric(polynomial_basis(), xs, ys, 0.05);
    for (int c = 0; c < 2; ++c) {
        const auto single = fit_parametric(polynomial_basis(), xs, Vector(ys.col(c)), 0.05);
        EXPECT_EQ(joint.coefficients().col(c), single.coefficients().col(0));
    }
}

TEST(SingleLayer, Relu) {
    Vector x(2);
    x << 1.0, -1.0;
    const Vector f = single_layer_features(Matrix::Identity(2, 2), Vector::Zero(2), Activation::relu, x);
    EXPECT_EQ(f(0), 1.0);
    EXPECT_EQ(f(1), 0.0);
}

TEST(SingleLayer, TanhZeroWeights) {
    const Vector f = single_layer_features(Matrix::Zero(3, 2), Vector::Zero(3), Activation::tanh, Vector(Vector::Ones(2)));
    EXPECT_EQ(f, Vector::Zero(3));
}

TEST(SingleLayer, SigmoidZeroWeights) {
    const Vector f = single_layer_features(Matrix::Zero(3, 2), Vector::Zero(3), Activation::sigmoid, Vector(Vector::Ones(2)));
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(f(i), 0.5);
}

TEST(SingleLayer, ParseTags) {
    EXPECT_EQ(parse_activation("relu"), Activation::relu);
    EXPECT_EQ(parse_activation("tanh"), Activation::tanh);
    EXPECT_EQ(parse_activation("sigmoid"), Activation::sigmoid);
    EXPECT_THROW(parse_activation("softplus"), InputError);
}

TEST(SingleLayer, HiddenLayerBasisFits) {
    Matrix W(3, 1);
    W << 1.0, -2.0, 0.5;
    const Vector b = scalars({0.1, 0.0, -0.3});
    const auto basis = BasisFamily::hidden_layer(W, b, Activation::tanh);
    const auto xs = random_points(10, 1, 7);
    Vector y(10);
    for (int i = 0; i < 10; ++i) y(i) = 2.0 * std::tanh(xs[i](0) + 0.1) - std::tanh(0.5 * xs[i](0) - 0.3);
    const auto m = fit_parametric(basis, xs, y, 0.0);
    EXPECT_LT(m.diagnostics().residual_norm, 1e-10);
}

TEST(FitKernel, SinglePointByHand) {
    KernelSpec spec;
    spec.bandwidth = 1.0;
    spec.gamma = 1.0;
    const auto m = fit_kernel(spec, {Vector::Zero(1)}, scalars({1.0}));
    EXPECT_NEAR(m.coefficients()(0, 0), 0.5, 1e-14);
    EXPECT_NEAR(m.predict_scalar(Vector::Zero(1)), 0.5, 1e-14);
}

TEST(FitKernel, Interpolates) {
    const auto xs = random_points(25, 2, 8);
    Vector y(25);
    for (int i = 0; i < 25; ++i) y(i) = std::sin(xs[i](0)) * std::cos(xs[i](1));
    KernelSpec spec;
    const auto m = fit_kernel(spec, xs, y);
    for (int i = 0; i < 25; ++i) EXPECT_NEAR(m.predict_scalar(xs[i]), y(i), 1e-8);
}

TEST(FitKernel, LargeGammaShrinks) {
    const auto xs = random_points(10, 1, 9);
    Vector y(10);
    for (int i = 0; i < 10; ++i) y(i) = 1.0 + xs[i](0);
    KernelSpec spec;
    spec.bandwidth = 0.5;
    spec.gamma = 1e6;
    const auto m = fit_kernel(spec, xs, y);
    Matrix K(10, 10);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) K(i, j) = std::exp(-(xs[i] - xs[j]).squaredNorm() / (2 * 0.25));
    const double knorm = Eigen::SelfAdjointEigenSolver<Matrix>(K).eigenvalues().maxCoeff();
    for (int i = 0; i < 10; ++i) EXPECT_LE(std::abs(m.predict_scalar(xs[i])), y.norm() * knorm / 1e6 + 1e-12);
}

TEST(FitKernel, DecaysFarAway) {
    KernelSpec spec;
    spec.bandwidth = 0.3;
    const auto xs = random_points(8, 1, 10);
    const auto m = fit_kernel(spec, xs, Vector(Vector::Ones(8)));
    EXPECT_LT(std::abs(m.predict_scalar(Vector::Constant(1, 1.0 + 10 * 0.3 + 3.0))), 1e-6);
}

TEST(FitKernel, MedianBandwidth) {
    std::vector<Vector> xs = {Vector::Constant(1, 0.0), Vector::Constant(1, 1.0), Vector::Constant(1, 3.0)};
    EXPECT_DOUBLE_EQ(median_pairwise_distance(xs), 2.0);  // distances 1, 2, 3
    const auto m = fit_kernel(KernelSpec{}, xs, Vector(Vector::Ones(3)));
    EXPECT_DOUBLE_EQ(m.bandwidth(), 2.0);
}

TEST(FitKernel, DuplicatesNeedGamma) {
    std::vector<Vector> xs = {Vector::Zero(1), Vector::Zero(1)};
    EXPECT_THROW(fit_kernel(KernelSpec{}, xs, Vector(Vector::Ones(2))), StepError);
    KernelSpec spec;
    spec.gamma = 0.1;
    EXPECT_NO_THROW(fit_kernel(spec, xs, Vector(Vector::Ones(2))));
}

TEST(FitKernel, LinearTailReproducesAffine) {
    const auto xs = random_points(20, 2, 11);
    Vector y(20);
    for (int i = 0; i < 20; ++i) y(i) = 0.5 - xs[i](0) + 2.0 * xs[i](1);
    KernelSpec spec;
    spec.gamma = 1e-10;
    spec.tail = PolynomialTail::linear;
    const auto m = fit_kernel(spec, xs, y);
    Vector q(2);
    q << 3.0, -4.0;  // far outside the data
    EXPECT_NEAR(m.predict_scalar(q), 0.5 - 3.0 - 8.0, 1e-8);
}

TEST(FitKernel, GammaMonotonicity) {
    const auto xs = random_points(15, 1, 12);
    Vector y(15);
    for (int i = 0; i < 15; ++i) y(i) = std::sin(4 * xs[i](0));
    double last_res = -1.0, last_energy = 1e300;
    for (double g : {1e-6, 1e-3, 0.1, 1.0, 10.0}) {
        KernelSpec spec;
        spec.bandwidth = 0.4;
        spec.gamma = g;
        const auto m = fit_kernel(spec, xs, y);
        Matrix K(15, 15);
        for (int i = 0; i < 15; ++i)
            for (int j = 0; j < 15; ++j) K(i, j) = kernel_value(spec, 0.4, xs[i], xs[j]);
        const Vector c = m.coefficients().col(0);
        const double energy = c.dot(K * c);
        EXPECT_GE(m.diagnostics().residual_norm, last_res - 1e-12);
        EXPECT_LE(energy, last_energy + 1e-12);
        last_res = m.diagnostics().residual_norm;
        last_energy = energy;
    }
}

TEST(FitKernel, DimensionMismatch) {
    const auto m = fit_kernel(KernelSpec{}, random_points(4, 2, 13), Vector(Vector::Ones(4)));
    EXPECT_THROW(m.predict(Vector::Zero(3)), InputError);
}
