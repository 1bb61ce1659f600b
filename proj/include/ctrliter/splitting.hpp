#pragma once

#include "ctrliter/iteration_trace.hpp"
#include "ctrliter/parallel.hpp"
#include "ctrliter/types.hpp"

#include <optional>
#include <vector>

namespace ctrliter {

struct GridAxis {
    double lo = 0.0;
    double hi = 1.0;
    int count = 2;

    double step() const { return (hi - lo) / (count - 1); }
    double node(int i) const { return lo + i * step(); }
};

/// αλ(x) - Dλ(x)·G(x) = F(x) on a box, λ: ℝ^d → ℝ^m solved componentwise.
///
/// Every drift component must satisfy |G_l| >= g_min at every node. Without
/// `inflow_value` the inflow nodes of each grid line take the quasi-steady
/// value Z/α of the one-dimensional problem.
struct TransportProblem {
    int dim = 1;
    int components = 1;
    VectorField drift;   // G
    VectorField source;  // F
    double alpha = 1.0;
    std::vector<GridAxis> axes;
    double g_min = 1e-6;
    std::optional<VectorField> inflow_value;
};

/// Grid values of one iterate; row = node (first axis varies fastest),
/// column = component.
struct SplitIterate {
    Matrix values;
    std::size_t sweep = 0;
};

/// Tensor grid with cached drift/source samples. All operations of the
/// splitting scheme run on this.
class SplittingSolver {
public:
    explicit SplittingSolver(const TransportProblem& p);

    /// Node-sampled data variant: drift is nodes×d, source nodes×m, inflow
    /// (optional) nodes×m.
    SplittingSolver(std::vector<GridAxis> axes, double alpha, Matrix drift, Matrix source,
                    std::optional<Matrix> inflow = std::nullopt, double g_min = 1e-6);

    int dim() const { return static_cast<int>(axes_.size()); }
    int components() const { return static_cast<int>(source_.cols()); }
    Eigen::Index node_count() const { return source_.rows(); }
    const std::vector<GridAxis>& axes() const { return axes_; }
    double alpha() const { return alpha_; }

    Vector node(Eigen::Index index) const;
    /// Per-axis integer coordinates of a node.
    std::vector<int> multi_index(Eigen::Index index) const;
    /// Nodes at least `margin` cells away from every face of the box.
    bool is_interior(Eigen::Index index, int margin = 1) const;

    SplitIterate zero_iterate() const;
    /// Samples a function at the nodes.
    SplitIterate sample(const VectorField& fn) const;

    /// Derivative of every component along `axis`: central differences in the
    /// interior, second-order one-sided stencils on the faces.
    Matrix partial(const Matrix& values, int axis) const;

    /// λ^{j+l/d}: the one-dimensional problem along `axis` with the other
    /// directions frozen at λ^j, solved line by line with the exponential
    /// kernel integrated exactly against the piecewise-linear interpolant of
    /// Z/|G_l|. Integration runs from the left face where G_l < 0 and from the
    /// right face where G_l > 0. Throws PreconditionError when |G_l| < g_min.
    Matrix directional_solve(const SplitIterate& lam, int axis) const;

    /// λ^{j+1} = (1/d) Σ_l λ^{j+l/d}, all directions computed from the same
    /// λ^j on up to `workers` threads.
    SplitIterate sweep(const SplitIterate& lam, std::size_t workers = default_worker_count()) const;

    struct Result {
        SplitIterate iterate;
        IterationTrace trace;
    };
    /// Sweeps until the max-norm change over the grid drops below tol.
    Result solve(const SplitIterate& lam0, double tol, std::size_t max_sweeps,
                 std::size_t workers = default_worker_count()) const;

    /// max over interior nodes and components of |αλ - Dλ·G - F|.
    double residual(const SplitIterate& lam) const;

private:
    void check_shapes() const;

    std::vector<GridAxis> axes_;
    std::vector<Eigen::Index> strides_;
    double alpha_;
    Matrix drift_;
    Matrix source_;
    std::optional<Matrix> inflow_;
    double g_min_;
};

Matrix directional_solve(const TransportProblem& p, const SplitIterate& lam, int axis);
SplitIterate splitting_sweep(const TransportProblem& p, const SplitIterate& lam,
                             std::size_t workers = default_worker_count());
SplittingSolver::Result solve_transport(const TransportProblem& p, const SplitIterate& lam0,
                                        double tol, std::size_t max_sweeps,
                                        std::size_t workers = default_worker_count());
double residual_check(const TransportProblem& p, const SplitIterate& lam);

}  // namespace ctrliter
