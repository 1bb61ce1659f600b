#include "ctrliter/approx.hpp"

#include "ctrliter/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ctrliter {

Activation parse_activation(std::string_view tag) {
    if (tag == "relu") return Activation::relu;
    if (tag == "tanh") return Activation::tanh;
    if (tag == "sigmoid") return Activation::sigmoid;
    throw InputError("unknown activation '" + std::string(tag) + "'");
}

std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "?";
}

double activate(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    }
    return z;
}

double activate_derivative(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-z));
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

Vector single_layer_features(const Matrix& W, const Vector& b, Activation activation,
                             const Vector& x) {
    if (W.cols() != x.size() || W.rows() != b.size()) {
        throw InputError("single_layer_features: dimension mismatch");
    }
    Vector z = W * x + b;
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = activate(activation, z(i));
    return z;
}

BasisFamily::BasisFamily(std::vector<ScalarField> features) : features_(std::move(features)) {
    if (features_.empty()) throw InputError("BasisFamily: need at least one feature");
}

BasisFamily BasisFamily::hidden_layer(Matrix W, Vector b, Activation activation) {
    if (W.rows() < 1 || W.rows() != b.size()) throw InputError("BasisFamily: bad hidden layer shape");
    BasisFamily basis;
    basis.layer_ = Layer{std::move(W), std::move(b), activation};
    return basis;
}

std::size_t BasisFamily::size() const {
    return layer_ ? static_cast<std::size_t>(layer_->W.rows()) : features_.size();
}

Vector BasisFamily::evaluate(const Vector& x) const {
    if (layer_) return single_layer_features(layer_->W, layer_->b, layer_->activation, x);
    Vector v(static_cast<Eigen::Index>(features_.size()));
    for (std::size_t i = 0; i < features_.size(); ++i) v(static_cast<Eigen::Index>(i)) = features_[i](x);
    return v;
}

Matrix BasisFamily::design(const std::vector<Vector>& xs) const {
    Matrix phi(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(size()));
    for (std::size_t m = 0; m < xs.size(); ++m) phi.row(static_cast<Eigen::Index>(m)) = evaluate(xs[m]).transpose();
    if (!phi.allFinite()) throw InputError("BasisFamily: non-finite feature values");
    return phi;
}

double kernel_value(const KernelSpec&, double bandwidth, const Vector& a, const Vector& b) {
    const double r2 = (a - b).squaredNorm();
    return std::exp(-r2 / (2.0 * bandwidth * bandwidth));
}

double median_pairwise_distance(const std::vector<Vector>& xs) {
    std::vector<double> d;
    d.reserve(xs.size() * (xs.size() - 1) / 2);
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = i + 1; j < xs.size(); ++j) d.push_back((xs[i] - xs[j]).norm());
    if (d.empty()) return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0.0 ? *mid : 1.0;
}

namespace {

Matrix targets_from(const Vector& y) { return Matrix(y); }

void check_targets(std::size_t n_points, const Matrix& ys, const char* who) {
    if (n_points == 0) throw InputError(std::string(who) + ": no training points");
    if (static_cast<std::size_t>(ys.rows()) != n_points) {
        throw InputError(std::string(who) + ": one target row per point required");
    }
    if (!ys.allFinite()) throw InputError(std::string(who) + ": non-finite targets");
}

}  // namespace

FittedModel fit_linear_design(const Matrix& design, const Matrix& ys, double gamma) {
    if (!(gamma >= 0.0)) throw InputError("fit_parametric: gamma must be >= 0");
    if (design.rows() != ys.rows()) throw InputError("fit_parametric: design/targets row mismatch");
    const auto cols = design.cols();
    FittedModel model;
    model.kind_ = FittedModel::Kind::parametric;
    if (gamma == 0.0) {
        Eigen::ColPivHouseholderQR<Matrix> qr(design);
        qr.setThreshold(1e-12);
        if (qr.rank() < cols) {
            throw InputError("fit_parametric: design matrix is rank deficient (rank " +
                             std::to_string(qr.rank()) + " < " + std::to_string(cols) +
                             "); use gamma > 0");
        }
        model.coefficients_ = qr.solve(ys);
        const double amax = qr.maxPivot();
        const double amin = std::abs(qr.matrixR()(cols - 1, cols - 1));
        model.diagnostics_.condition_estimate = amax > 0.0 ? amin / amax : 0.0;
    } else {
        const Matrix normal = design.transpose() * design + gamma * Matrix::Identity(cols, cols);
        Eigen::LLT<Matrix> llt(normal);
        if (llt.info() != Eigen::Success) throw StepError("fit_parametric: normal equations not SPD");
        model.coefficients_ = llt.solve(design.transpose() * ys);
        model.diagnostics_.condition_estimate = llt.rcond();
    }
    model.diagnostics_.residual_norm = (design * model.coefficients_ - ys).norm();
    return model;
}

FittedModel fit_parametric(const BasisFamily& basis, const std::vector<Vector>& xs, const Matrix& ys,
                           double gamma) {
    check_targets(xs.size(), ys, "fit_parametric");
    FittedModel model = fit_linear_design(basis.design(xs), ys, gamma);
    model.basis_ = basis;
    return model;
}

FittedModel fit_parametric(const BasisFamily& basis, const std::vector<Vector>& xs, const Vector& ys,
                           double gamma) {
    return fit_parametric(basis, xs, targets_from(ys), gamma);
}

FittedModel fit_kernel(const KernelSpec& spec, const std::vector<Vector>& xs, const Matrix& ys) {
    check_targets(xs.size(), ys, "fit_kernel");
    if (!(spec.gamma >= 0.0)) throw InputError("fit_kernel: gamma must be >= 0");
    const auto m = static_cast<Eigen::Index>(xs.size());
    const auto dim = xs.front().size();
    for (const auto& x : xs) {
        if (x.size() != dim) throw InputError("fit_kernel: inconsistent point dimensions");
    }

    FittedModel model;
    model.kind_ = FittedModel::Kind::kernel;
    model.kernel_ = spec;
    model.bandwidth_ = spec.bandwidth > 0.0 ? spec.bandwidth : median_pairwise_distance(xs);
    model.centers_ = xs;

    Matrix gram(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        gram(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < m; ++j) {
            gram(i, j) = gram(j, i) = kernel_value(spec, model.bandwidth_, xs[i], xs[j]);
        }
    }

    if (spec.gamma == 0.0) {
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = i + 1; j < m; ++j)
                if ((xs[i] - xs[j]).squaredNorm() == 0.0) {
                    throw StepError("fit_kernel: duplicate training points with gamma = 0 make the "
                                    "Gram system singular");
                }
    }

    Matrix system = gram;
    system.diagonal().array() += spec.gamma;

    if (spec.tail == PolynomialTail::none) {
        Eigen::LLT<Matrix> llt(system);
        if (llt.info() != Eigen::Success && spec.gamma == 0.0) {
            system.diagonal().array() += 1e-12 * gram.trace() / static_cast<double>(m);
            llt.compute(system);
        }
        if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
            throw StepError("fit_kernel: (gamma I + K) is numerically singular");
        }
        model.coefficients_ = llt.solve(ys);
        model.diagnostics_.condition_estimate = llt.rcond();
    } else {
        // [[K + γI, P], [P*, 0]] [c; d] = [y; 0] with P = [1, x*].
        const Eigen::Index q = dim + 1;
        Matrix saddle = Matrix::Zero(m + q, m + q);
        saddle.topLeftCorner(m, m) = system;
        for (Eigen::Index i = 0; i < m; ++i) {
            saddle(i, m) = saddle(m, i) = 1.0;
            for (Eigen::Index k = 0; k < dim; ++k) saddle(i, m + 1 + k) = saddle(m + 1 + k, i) = xs[i](k);
        }
        Matrix rhs = Matrix::Zero(m + q, ys.cols());
        rhs.topRows(m) = ys;
        Eigen::PartialPivLU<Matrix> lu(saddle);
        const double rcond = lu.rcond();
        if (!(rcond > 1e-16)) throw StepError("fit_kernel: kernel saddle system is singular");
        const Matrix sol = lu.solve(rhs);
        model.coefficients_ = sol.topRows(m);
        model.tail_ = sol.bottomRows(q);
        model.diagnostics_.condition_estimate = rcond;
    }

    Matrix fitted(m, ys.cols());
    for (Eigen::Index i = 0; i < m; ++i) fitted.row(i) = model.predict(xs[i]).transpose();
    model.diagnostics_.residual_norm = (fitted - ys).norm();
    return model;
}

FittedModel fit_kernel(const KernelSpec& spec, const std::vector<Vector>& xs, const Vector& ys) {
    return fit_kernel(spec, xs, targets_from(ys));
}

Vector FittedModel::predict(const Vector& x) const {
    if (kind_ == Kind::parametric) {
        if (!basis_) throw InputError("predict: model fitted on a raw design has no basis");
        const Vector phi = basis_->evaluate(x);
        if (phi.size() != coefficients_.rows()) throw InputError("predict: dimension mismatch");
        return coefficients_.transpose() * phi;
    }
    if (!centers_.empty() && x.size() != centers_.front().size()) {
        throw InputError("predict: dimension mismatch");
    }
    const double inv = 1.0 / (2.0 * bandwidth_ * bandwidth_);
    Vector out = Vector::Zero(coefficients_.cols());
    for (std::size_t m = 0; m < centers_.size(); ++m) {
        const double w = std::exp(-(x - centers_[m]).squaredNorm() * inv);
        out.noalias() += w * coefficients_.row(static_cast<Eigen::Index>(m)).transpose();
    }
    if (tail_.size() > 0) {
        out += tail_.row(0).transpose();
        out.noalias() += tail_.bottomRows(tail_.rows() - 1).transpose() * x;
    }
    return out;
}

double FittedModel::predict_scalar(const Vector& x) const { return predict(x)(0); }

}  // namespace ctrliter
