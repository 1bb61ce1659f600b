#pragma once

#include "ctrliter/types.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace ctrliter {

enum class Activation { relu, tanh, sigmoid };

/// Parses "relu" | "tanh" | "sigmoid"; anything else throws InputError.
Activation parse_activation(std::string_view tag);
std::string_view activation_name(Activation a);

double activate(Activation a, double z);
/// dσ/dz; ReLU uses 0 at the kink.
double activate_derivative(Activation a, double z);

/// σ(Wx + b) elementwise.
Vector single_layer_features(const Matrix& W, const Vector& b, Activation activation,
                             const Vector& x);

/// Fixed features φ_i: ℝ^d → ℝ, either arbitrary callables or one hidden layer
/// σ(Wx + b).
class BasisFamily {
public:
    explicit BasisFamily(std::vector<ScalarField> features);
    static BasisFamily hidden_layer(Matrix W, Vector b, Activation activation);

    std::size_t size() const;
    Vector evaluate(const Vector& x) const;
    /// Rows are φ(x^m)*.
    Matrix design(const std::vector<Vector>& xs) const;

private:
    BasisFamily() = default;
    std::vector<ScalarField> features_;
    struct Layer {
        Matrix W;
        Vector b;
        Activation activation;
    };
    std::optional<Layer> layer_;
};

enum class KernelFamily { gaussian };

/// Polynomial part fitted alongside the kernel expansion (unpenalized).
enum class PolynomialTail { none, linear };

struct KernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    /// Gaussian width h in exp(-|x-x'|²/(2h²)); <= 0 selects the median
    /// pairwise training distance.
    double bandwidth = 0.0;
    double gamma = 0.0;  // ridge weight
    PolynomialTail tail = PolynomialTail::none;
};

double kernel_value(const KernelSpec& spec, double bandwidth, const Vector& a, const Vector& b);

struct FitDiagnostics {
    double residual_norm = 0.0;      // ‖prediction - y‖_F over training points
    double condition_estimate = 0.0; // reciprocal condition of the solved system
};

/// Fitted parametric or kernel model. Targets may be vector-valued; each
/// column is fitted independently with the same system matrix.
class FittedModel {
public:
    enum class Kind { parametric, kernel };

    Kind kind() const { return kind_; }
    int output_dim() const { return static_cast<int>(coefficients_.cols()); }
    const Matrix& coefficients() const { return coefficients_; }
    const FitDiagnostics& diagnostics() const { return diagnostics_; }
    double bandwidth() const { return bandwidth_; }
    const Matrix& tail_coefficients() const { return tail_; }

    Vector predict(const Vector& x) const;
    double predict_scalar(const Vector& x) const;

private:
    friend FittedModel fit_parametric(const BasisFamily&, const std::vector<Vector>&, const Matrix&,
                                      double);
    friend FittedModel fit_kernel(const KernelSpec&, const std::vector<Vector>&, const Matrix&);
    friend FittedModel fit_linear_design(const Matrix&, const Matrix&, double);

    Kind kind_ = Kind::parametric;
    Matrix coefficients_;  // θ (I×k) or dual c (M×k)
    Matrix tail_;          // (d+1)×k polynomial coefficients, empty without a tail
    FitDiagnostics diagnostics_;
    std::optional<BasisFamily> basis_;
    std::vector<Vector> centers_;
    KernelSpec kernel_;
    double bandwidth_ = 0.0;
};

/// Ridge solution of  min γ|θ|² + Σ_m |Φ(x^m)θ - y^m|²  with ys one row per
/// sample. γ = 0 requires a full column rank design (InputError otherwise).
FittedModel fit_parametric(const BasisFamily& basis, const std::vector<Vector>& xs, const Matrix& ys,
                           double gamma);
FittedModel fit_parametric(const BasisFamily& basis, const std::vector<Vector>& xs, const Vector& ys,
                           double gamma);

/// Ridge solve on an explicit design matrix (rows = collocation conditions).
/// The returned model has no basis attached; use coefficients().
FittedModel fit_linear_design(const Matrix& design, const Matrix& ys, double gamma);

/// Representer solution (γI + K)c = y, u(x) = Σ c_m k(x, x^m). With a linear
/// tail the saddle system [[K+γI, P],[P*, 0]] is solved instead, so affine
/// targets are reproduced exactly.
FittedModel fit_kernel(const KernelSpec& spec, const std::vector<Vector>& xs, const Matrix& ys);
FittedModel fit_kernel(const KernelSpec& spec, const std::vector<Vector>& xs, const Vector& ys);

double median_pairwise_distance(const std::vector<Vector>& xs);

}  // namespace ctrliter
