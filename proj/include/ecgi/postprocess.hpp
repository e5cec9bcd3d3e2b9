#ifndef ECGI_POSTPROCESS_HPP
#define ECGI_POSTPROCESS_HPP

#include <Eigen/Dense>

#include "ecgi/fields.hpp"
#include "ecgi/mesh.hpp"
#include "ecgi/postprocess_types.hpp"

namespace ecgi {

/// Which reconstructed signal an activation detector runs on. The deflection
/// methods look for the maximal positive deflection of V and the maximal
/// negative deflection of U.
enum class SignalKind { V, U };

struct PostprocessConfig {
    double smoothing_std_ms = 10.0;
    int n_thresholds = 11;
    double threshold_center = 2.0 / 3.0;
    double threshold_halfwidth = 1.0 / 6.0;

    void validate() const;
};

/// Per-snapshot additive constants are unobservable to the inverse problem;
/// re-fix them: before the global activation onset t_d each snapshot's spatial
/// minimum is set to 0, afterwards each snapshot's spatial maximum is held at
/// the maximum attained at t_d. t_d is the time of maximal spatial-mean
/// unsigned temporal derivative, computed on the per-step-mean-removed series
/// so the result is invariant to the constants being fixed.
TimeSeriesField adjust_baseline(const TimeSeriesField& v);

/// Zero-phase Gaussian kernel smoothing along time, truncated at 3 sigma and
/// renormalized near the series ends. std_ms = 0 returns the input unchanged.
TimeSeriesField gaussian_smooth_time(const TimeSeriesField& s, double std_ms);

/// Per-node, per-time product of the centered temporal derivative and the
/// magnitude of the length-weighted node-averaged curve gradient. One-sided
/// derivatives at the series ends. If grad_smooth_std_ms > 0 the gradient
/// magnitude is smoothed in time before the product is formed.
Eigen::MatrixXd spatiotemporal_deflection(const TimeSeriesField& s,
                                          const CurveMesh& curve,
                                          double grad_smooth_std_ms = 0.0);

/// Activation at the extremum of the spatio-temporal deflection product:
/// argmax over time for V, argmin for U; ties take the earliest time;
/// parabolic sub-sample refinement (clamped to half a step) at interior
/// extrema. Nodes whose product never takes the searched sign are flagged
/// non-activated.
ActivationMap defl_st_at(const TimeSeriesField& s, const CurveMesh& curve,
                         SignalKind kind, double grad_smooth_std_ms = 0.0);

/// As defl_st_at but on the temporal derivative alone.
ActivationMap defl_t_at(const TimeSeriesField& s, SignalKind kind);

/// Threshold method: per node, levels uniformly spaced over
/// (center +- halfwidth) x per-node max; activation per level at the first
/// upward crossing (linear inter-sample interpolation); a node already at or
/// above a level when the series starts is censored to the first sample time;
/// final time is the mean over the levels actually crossed. Expects a
/// baseline-adjusted, smoothed V.
ActivationMap threshold_at(const TimeSeriesField& v, const PostprocessConfig& config);

/// Transfer an activation map between two curves covering the same geometry:
/// each destination node is projected onto the source polyline and the times
/// are linearly interpolated along arc length. A destination node is flagged
/// non-activated when a bracketing source node is non-activated.
ActivationMap interpolate_activation(const CurveMesh& src, const CurveMesh& dst,
                                     const ActivationMap& map);

} // namespace ecgi

#endif
