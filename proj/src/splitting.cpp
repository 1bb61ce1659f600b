#include "ctrliter/splitting.hpp"

#include "ctrliter/errors.hpp"

#include <cmath>
#include <sstream>

namespace ctrliter {

namespace {

// φ1(κ) = (e^κ - 1)/κ and ψ(κ) = (e^κ(κ - 1) + 1)/κ², the weights of the
// exact integral of e^{κ(1-s)} against a linear function on [0, 1].
void kernel_weights(double kappa, double& phi1, double& psi) {
    if (std::abs(kappa) < 1e-2) {
        const double k2 = kappa * kappa;
        phi1 = 1.0 + kappa / 2.0 + k2 / 6.0 + k2 * kappa / 24.0 + k2 * k2 / 120.0;
        psi = 0.5 + kappa / 3.0 + k2 / 8.0 + k2 * kappa / 30.0 + k2 * k2 / 144.0;
        return;
    }
    phi1 = std::expm1(kappa) / kappa;
    psi = (std::exp(kappa) * (kappa - 1.0) + 1.0) / (kappa * kappa);
}

}  // namespace

SplittingSolver::SplittingSolver(const TransportProblem& p)
    : axes_(p.axes), alpha_(p.alpha), g_min_(p.g_min) {
    if (static_cast<int>(p.axes.size()) != p.dim || p.dim < 1) {
        throw InputError("TransportProblem: one axis per dimension required");
    }
    if (p.components < 1) throw InputError("TransportProblem: components must be >= 1");
    if (!p.drift || !p.source) throw InputError("TransportProblem: drift and source are required");

    Eigen::Index nodes = 1;
    for (const auto& a : axes_) {
        if (a.count < 2 || !(a.hi > a.lo)) throw InputError("TransportProblem: bad grid axis");
        nodes *= a.count;
    }
    strides_.resize(axes_.size());
    Eigen::Index s = 1;
    for (std::size_t l = 0; l < axes_.size(); ++l) {
        strides_[l] = s;
        s *= axes_[l].count;
    }

    drift_.resize(nodes, p.dim);
    source_.resize(nodes, p.components);
    if (p.inflow_value) inflow_ = Matrix(nodes, p.components);
    for (Eigen::Index i = 0; i < nodes; ++i) {
        const Vector x = node(i);
        const Vector g = p.drift(x);
        const Vector f = p.source(x);
        if (g.size() != p.dim || f.size() != p.components) {
            throw InputError("TransportProblem: drift/source returned the wrong dimension");
        }
        drift_.row(i) = g.transpose();
        source_.row(i) = f.transpose();
        if (inflow_) inflow_->row(i) = (*p.inflow_value)(x).transpose();
    }
    check_shapes();
}

SplittingSolver::SplittingSolver(std::vector<GridAxis> axes, double alpha, Matrix drift, Matrix source,
                                 std::optional<Matrix> inflow, double g_min)
    : axes_(std::move(axes)),
      alpha_(alpha),
      drift_(std::move(drift)),
      source_(std::move(source)),
      inflow_(std::move(inflow)),
      g_min_(g_min) {
    if (axes_.empty()) throw InputError("SplittingSolver: at least one axis required");
    strides_.resize(axes_.size());
    Eigen::Index s = 1;
    for (std::size_t l = 0; l < axes_.size(); ++l) {
        if (axes_[l].count < 2 || !(axes_[l].hi > axes_[l].lo)) {
            throw InputError("SplittingSolver: bad grid axis");
        }
        strides_[l] = s;
        s *= axes_[l].count;
    }
    if (drift_.rows() != s || source_.rows() != s) throw InputError("SplittingSolver: node count mismatch");
    check_shapes();
}

void SplittingSolver::check_shapes() const {
    if (!(alpha_ > 0.0)) throw InputError("TransportProblem: alpha must be positive");
    if (drift_.cols() != dim()) throw InputError("SplittingSolver: drift must have d columns");
    if (inflow_ && (inflow_->rows() != source_.rows() || inflow_->cols() != source_.cols())) {
        throw InputError("SplittingSolver: inflow shape mismatch");
    }
    if (!drift_.allFinite() || !source_.allFinite()) {
        throw InputError("SplittingSolver: non-finite drift or source samples");
    }
}

Vector SplittingSolver::node(Eigen::Index index) const {
    Vector x(dim());
    for (int l = 0; l < dim(); ++l) {
        const int i = static_cast<int>((index / strides_[l]) % axes_[l].count);
        x(l) = axes_[l].node(i);
    }
    return x;
}

std::vector<int> SplittingSolver::multi_index(Eigen::Index index) const {
    std::vector<int> idx(axes_.size());
    for (std::size_t l = 0; l < axes_.size(); ++l) {
        idx[l] = static_cast<int>((index / strides_[l]) % axes_[l].count);
    }
    return idx;
}

bool SplittingSolver::is_interior(Eigen::Index index, int margin) const {
    const auto idx = multi_index(index);
    for (std::size_t l = 0; l < axes_.size(); ++l) {
        if (idx[l] < margin || idx[l] > axes_[l].count - 1 - margin) return false;
    }
    return true;
}

SplitIterate SplittingSolver::zero_iterate() const {
    return SplitIterate{Matrix::Zero(node_count(), components()), 0};
}

SplitIterate SplittingSolver::sample(const VectorField& fn) const {
    SplitIterate it{Matrix(node_count(), components()), 0};
    for (Eigen::Index i = 0; i < node_count(); ++i) it.values.row(i) = fn(node(i)).transpose();
    return it;
}

Matrix SplittingSolver::partial(const Matrix& values, int axis) const {
    const auto& ax = axes_[static_cast<std::size_t>(axis)];
    const Eigen::Index stride = strides_[static_cast<std::size_t>(axis)];
    const double h = ax.step();
    Matrix d(values.rows(), values.cols());
    for (Eigen::Index n = 0; n < values.rows(); ++n) {
        const int i = static_cast<int>((n / stride) % ax.count);
        if (ax.count == 2) {
            const Eigen::Index base = n - i * stride;
            d.row(n) = (values.row(base + stride) - values.row(base)) / h;
        } else if (i == 0) {
            d.row(n) = (-3.0 * values.row(n) + 4.0 * values.row(n + stride) - values.row(n + 2 * stride)) /
                       (2.0 * h);
        } else if (i == ax.count - 1) {
            d.row(n) = (3.0 * values.row(n) - 4.0 * values.row(n - stride) + values.row(n - 2 * stride)) /
                       (2.0 * h);
        } else {
            d.row(n) = (values.row(n + stride) - values.row(n - stride)) / (2.0 * h);
        }
    }
    return d;
}

Matrix SplittingSolver::directional_solve(const SplitIterate& lam, int axis) const {
    if (axis < 0 || axis >= dim()) throw InputError("directional_solve: axis out of range");
    if (lam.values.rows() != node_count() || lam.values.cols() != components()) {
        throw InputError("directional_solve: iterate shape mismatch");
    }
    const auto l = static_cast<std::size_t>(axis);
    for (Eigen::Index n = 0; n < node_count(); ++n) {
        if (!(std::abs(drift_(n, axis)) >= g_min_)) {
            std::ostringstream msg;
            msg << "directional_solve: |G_" << axis << "| = " << std::abs(drift_(n, axis))
                << " < g_min at node (" << node(n).transpose() << ")";
            throw PreconditionError(msg.str());
        }
    }

    // Z = F + Σ_{h≠l} G_h ∂_h λ^j
    Matrix z = source_;
    for (int h = 0; h < dim(); ++h) {
        if (h == axis) continue;
        const Matrix dh = partial(lam.values, h);
        z.array() += dh.array().colwise() * drift_.col(h).array();
    }

    const auto& ax = axes_[l];
    const Eigen::Index stride = strides_[l];
    const double h = ax.step();
    const int count = ax.count;
    Matrix out(node_count(), components());

    auto inflow_row = [&](Eigen::Index n) -> Eigen::RowVectorXd {
        if (inflow_) return inflow_->row(n);
        return z.row(n) / alpha_;
    };

    // March from `src` to `dst` (adjacent nodes of the same sign run).
    auto march = [&](Eigen::Index src, Eigen::Index dst) {
        const double gs = std::abs(drift_(src, axis));
        const double gd = std::abs(drift_(dst, axis));
        const double rate = 0.5 * (1.0 / gs + 1.0 / gd);
        const double kappa = -alpha_ * rate * h;
        double phi1 = 0.0, psi = 0.0;
        kernel_weights(kappa, phi1, psi);
        const double decay = std::exp(kappa);
        out.row(dst) = decay * out.row(src) + h * ((phi1 - psi) / gd) * z.row(dst) + h * (psi / gs) * z.row(src);
    };

    for (Eigen::Index start = 0; start < node_count(); ++start) {
        if ((start / stride) % count != 0) continue;
        int i = 0;
        while (i < count) {
            const bool negative = drift_(start + i * stride, axis) < 0.0;
            int j = i;
            while (j + 1 < count && (drift_(start + (j + 1) * stride, axis) < 0.0) == negative) ++j;
            if (negative) {
                const Eigen::Index first = start + i * stride;
                out.row(first) = inflow_row(first);
                for (int k = i; k < j; ++k) march(start + k * stride, start + (k + 1) * stride);
            } else {
                const Eigen::Index last = start + j * stride;
                out.row(last) = inflow_row(last);
                for (int k = j; k > i; --k) march(start + k * stride, start + (k - 1) * stride);
            }
            i = j + 1;
        }
    }
    return out;
}

SplitIterate SplittingSolver::sweep(const SplitIterate& lam, std::size_t workers) const {
    std::vector<Matrix> parts(static_cast<std::size_t>(dim()));
    parallel_for(
        parts.size(), [&](std::size_t l) { parts[l] = directional_solve(lam, static_cast<int>(l)); },
        workers);
    SplitIterate next{parts[0], lam.sweep + 1};
    for (std::size_t l = 1; l < parts.size(); ++l) next.values += parts[l];
    next.values /= static_cast<double>(dim());
    return next;
}

SplittingSolver::Result SplittingSolver::solve(const SplitIterate& lam0, double tol, std::size_t max_sweeps,
                                               std::size_t workers) const {
    Result r{lam0, {}};
    r.trace.tolerance = tol;
    for (std::size_t j = 0; j < max_sweeps; ++j) {
        SplitIterate next = sweep(r.iterate, workers);
        const double change = next.values.allFinite() ? (next.values - r.iterate.values).cwiseAbs().maxCoeff()
                                                      : std::numeric_limits<double>::infinity();
        r.trace.record(change);
        if (!(change <= kBlowUpThreshold)) {
            r.trace.blew_up = true;
            break;
        }
        r.iterate = std::move(next);
        if (r.trace.converged) break;
    }
    r.trace.diverged = !r.trace.converged;
    return r;
}

double SplittingSolver::residual(const SplitIterate& lam) const {
    Matrix transport = Matrix::Zero(node_count(), components());
    for (int h = 0; h < dim(); ++h) {
        transport.array() += partial(lam.values, h).array().colwise() * drift_.col(h).array();
    }
    const Matrix r = alpha_ * lam.values - transport - source_;
    double worst = 0.0;
    for (Eigen::Index n = 0; n < node_count(); ++n) {
        if (!is_interior(n)) continue;
        worst = std::max(worst, r.row(n).cwiseAbs().maxCoeff());
    }
    return worst;
}

Matrix directional_solve(const TransportProblem& p, const SplitIterate& lam, int axis) {
    return SplittingSolver(p).directional_solve(lam, axis);
}

SplitIterate splitting_sweep(const TransportProblem& p, const SplitIterate& lam, std::size_t workers) {
    return SplittingSolver(p).sweep(lam, workers);
}

SplittingSolver::Result solve_transport(const TransportProblem& p, const SplitIterate& lam0, double tol,
                                        std::size_t max_sweeps, std::size_t workers) {
    return SplittingSolver(p).solve(lam0, tol, max_sweeps, workers);
}

double residual_check(const TransportProblem& p, const SplitIterate& lam) {
    return SplittingSolver(p).residual(lam);
}

}  // namespace ctrliter
