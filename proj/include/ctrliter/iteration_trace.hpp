#pragma once

#include <string>
#include <vector>

namespace ctrliter {

/// Distances between successive iterates of a fixed-point scheme.
///
/// `distances[k]` is the distance between iterate k and iterate k+1, so
/// `distances.size() == iterations` always holds. `converged` is true exactly
/// when the last recorded distance is below `tolerance`. `diverged` is set when
/// the run ended without converging: either a distance exceeded the blow-up
/// threshold (`blew_up`) or the iteration budget ran out.
struct IterationTrace {
    std::vector<double> distances;
    std::size_t iterations = 0;
    bool converged = false;
    bool diverged = false;
    bool blew_up = false;
    bool aborted = false;  // a step error stopped the run
    std::string abort_reason;
    double tolerance = 0.0;

    void record(double distance) {
        distances.push_back(distance);
        iterations = distances.size();
        converged = distance < tolerance;
    }

    double last() const { return distances.empty() ? 0.0 : distances.back(); }
    /// Number of iterations until the first distance below `tolerance`, or 0.
    std::size_t first_below() const {
        for (std::size_t k = 0; k < distances.size(); ++k)
            if (distances[k] < tolerance) return k + 1;
        return 0;
    }
};

inline constexpr double kBlowUpThreshold = 1e12;

}  // namespace ctrliter
