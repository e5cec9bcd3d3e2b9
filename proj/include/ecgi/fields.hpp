#ifndef ECGI_FIELDS_HPP
#define ECGI_FIELDS_HPP

#include <Eigen/Dense>

#include "ecgi/errors.hpp"

namespace ecgi {

/// Scalar values attached to mesh nodes (mV for potentials/voltages).
using NodalField = Eigen::VectorXd;

/// Node-indexed scalar field sampled at uniform time steps.
/// Column k holds the snapshot at time t0_ms + k * dt_ms.
struct TimeSeriesField {
    Eigen::MatrixXd values; // n_nodes x n_steps
    double dt_ms = 1.0;
    double t0_ms = 0.0;

    TimeSeriesField() = default;
    TimeSeriesField(Eigen::MatrixXd v, double dt, double t0 = 0.0)
        : values(std::move(v)), dt_ms(dt), t0_ms(t0) {
        if (dt_ms <= 0.0) throw ValidationError("time series dt must be positive");
    }

    int node_count() const { return static_cast<int>(values.rows()); }
    int sample_count() const { return static_cast<int>(values.cols()); }
    double time_at(int k) const { return t0_ms + k * dt_ms; }

    NodalField snapshot(int k) const { return values.col(k); }

    void require_samples(int n, const char* what) const {
        if (sample_count() < n)
            throw ValidationError(std::string(what) + " needs at least " +
                                  std::to_string(n) + " time samples, got " +
                                  std::to_string(sample_count()));
    }
};

} // namespace ecgi

#endif
