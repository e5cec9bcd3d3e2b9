#include "ecgi/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ecgi/errors.hpp"
#include "ecgi/fem.hpp"

namespace ecgi {

void PostprocessConfig::validate() const {
    if (smoothing_std_ms < 0.0)
        throw ValidationError("postprocess.smoothing_std_ms must be non-negative");
    if (n_thresholds < 1) throw ValidationError("postprocess.n_thresholds must be >= 1");
    const double lo = threshold_center - threshold_halfwidth;
    const double hi = threshold_center + threshold_halfwidth;
    if (!(lo > 0.0 && hi < 1.0))
        throw ValidationError(
            "postprocess threshold band center +- halfwidth must lie within (0,1)");
}

namespace {

/// Centered temporal derivative, one-sided at the first and last samples.
Eigen::MatrixXd temporal_derivative(const TimeSeriesField& s) {
    const int n = s.node_count();
    const int m = s.sample_count();
    Eigen::MatrixXd d(n, m);
    d.col(0) = (s.values.col(1) - s.values.col(0)) / s.dt_ms;
    d.col(m - 1) = (s.values.col(m - 1) - s.values.col(m - 2)) / s.dt_ms;
    for (int k = 1; k < m - 1; ++k)
        d.col(k) = (s.values.col(k + 1) - s.values.col(k - 1)) / (2.0 * s.dt_ms);
    return d;
}

/// Parabolic vertex through (t_{k-1}, t_k, t_{k+1}) values around an interior
/// extremum index; returns the sub-sample offset in [-dt/2, dt/2].
double parabolic_offset(double prev, double mid, double next, double dt) {
    const double denom = prev - 2.0 * mid + next;
    if (denom == 0.0) return 0.0;
    double off = 0.5 * (prev - next) / denom * dt;
    return std::clamp(off, -0.5 * dt, 0.5 * dt);
}

/// Shared extremum scan for the deflection detectors. Searches for the maximal
/// positive value (V) or the minimal negative value (U); earliest-time ties.
ActivationMap extremum_map(const Eigen::MatrixXd& w, const TimeSeriesField& s,
                           SignalKind kind, const std::string& method,
                           const std::string& params) {
    const int n = static_cast<int>(w.rows());
    const int m = static_cast<int>(w.cols());
    ActivationMap map;
    map.times_ms = Eigen::VectorXd::Zero(n);
    map.activated.assign(n, false);
    map.method = method;
    map.params = params;

    const double sign = kind == SignalKind::V ? 1.0 : -1.0;
    for (int i = 0; i < n; ++i) {
        int best = -1;
        double best_val = 0.0; // only strictly signed deflections activate
        for (int k = 0; k < m; ++k) {
            const double val = sign * w(i, k);
            if (val > best_val) {
                best_val = val;
                best = k;
            }
        }
        if (best < 0) continue;
        double t = s.time_at(best);
        if (best > 0 && best < m - 1)
            t += parabolic_offset(sign * w(i, best - 1), best_val, sign * w(i, best + 1),
                                  s.dt_ms);
        map.times_ms[i] = t;
        map.activated[i] = true;
    }
    return map;
}

} // namespace

TimeSeriesField adjust_baseline(const TimeSeriesField& v) {
    v.require_samples(3, "baseline adjustment");
    const int m = v.sample_count();

    // Onset marker t_d: maximal spatial-mean |d/dt| of the mean-removed series
    // (removing per-step means first makes t_d invariant to the very constants
    // this routine adjusts).
    TimeSeriesField centered = v;
    for (int k = 0; k < m; ++k) centered.values.col(k).array() -= v.values.col(k).mean();
    const Eigen::MatrixXd deriv = temporal_derivative(centered);
    int t_d = 0;
    double best = -1.0;
    for (int k = 0; k < m; ++k) {
        const double score = deriv.col(k).cwiseAbs().mean();
        if (score > best) {
            best = score;
            t_d = k;
        }
    }

    TimeSeriesField out = v;
    for (int k = 0; k <= t_d; ++k) out.values.col(k).array() -= v.values.col(k).minCoeff();
    const double plateau = out.values.col(t_d).maxCoeff();
    for (int k = t_d + 1; k < m; ++k)
        out.values.col(k).array() += plateau - v.values.col(k).maxCoeff();
    return out;
}

TimeSeriesField gaussian_smooth_time(const TimeSeriesField& s, double std_ms) {
    if (std_ms < 0.0) throw ValidationError("smoothing std must be non-negative");
    if (std_ms == 0.0) return s;
    const int m = s.sample_count();
    const int radius = static_cast<int>(std::ceil(3.0 * std_ms / s.dt_ms));

    Eigen::VectorXd kernel(2 * radius + 1);
    for (int j = -radius; j <= radius; ++j) {
        const double t = j * s.dt_ms;
        kernel[j + radius] = std::exp(-0.5 * t * t / (std_ms * std_ms));
    }

    TimeSeriesField out = s;
    for (int k = 0; k < m; ++k) {
        const int lo = std::max(0, k - radius);
        const int hi = std::min(m - 1, k + radius);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.node_count());
        double wsum = 0.0;
        for (int j = lo; j <= hi; ++j) {
            const double w = kernel[j - k + radius];
            acc += w * s.values.col(j);
            wsum += w;
        }
        out.values.col(k) = acc / wsum;
    }
    return out;
}

Eigen::MatrixXd spatiotemporal_deflection(const TimeSeriesField& s,
                                          const CurveMesh& curve,
                                          double grad_smooth_std_ms) {
    s.require_samples(3, "spatio-temporal deflection");
    const int n = s.node_count();
    const int m = s.sample_count();
    if (n != curve.node_count())
        throw ValidationError("deflection: series has " + std::to_string(n) +
                              " nodes but the curve has " +
                              std::to_string(curve.node_count()));

    // Length-weighted node average of the signed per-segment gradients, then
    // magnitude. On a closed curve every node has two incident segments.
    Eigen::MatrixXd grad_mag(n, m);
    Eigen::VectorXd node_grad = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd node_len = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < m; ++k) {
        const Eigen::VectorXd g = element_gradient(curve, s.values.col(k));
        node_grad.setZero();
        node_len.setZero();
        for (int seg = 0; seg < curve.segment_count(); ++seg) {
            const auto [a, b] = curve.segment(seg);
            const double len = curve.segment_length(seg);
            node_grad[a] += len * g[seg];
            node_grad[b] += len * g[seg];
            node_len[a] += len;
            node_len[b] += len;
        }
        grad_mag.col(k) = (node_grad.array() / node_len.array()).abs();
    }

    if (grad_smooth_std_ms > 0.0) {
        grad_mag = gaussian_smooth_time(TimeSeriesField(grad_mag, s.dt_ms, s.t0_ms),
                                        grad_smooth_std_ms)
                       .values;
    }
    return temporal_derivative(s).cwiseProduct(grad_mag);
}

ActivationMap defl_st_at(const TimeSeriesField& s, const CurveMesh& curve,
                         SignalKind kind, double grad_smooth_std_ms) {
    const Eigen::MatrixXd w = spatiotemporal_deflection(s, curve, grad_smooth_std_ms);
    return extremum_map(w, s, kind,
                        kind == SignalKind::V ? "defl_st_v" : "defl_st_u",
                        "grad_smooth_std_ms=" + std::to_string(grad_smooth_std_ms));
}

ActivationMap defl_t_at(const TimeSeriesField& s, SignalKind kind) {
    s.require_samples(3, "temporal deflection");
    return extremum_map(temporal_derivative(s), s, kind,
                        kind == SignalKind::V ? "defl_t_v" : "defl_t_u", "");
}

ActivationMap threshold_at(const TimeSeriesField& v, const PostprocessConfig& config) {
    config.validate();
    v.require_samples(2, "threshold activation");
    const int n = v.node_count();
    const int m = v.sample_count();

    std::vector<double> fractions(config.n_thresholds);
    if (config.n_thresholds == 1) {
        fractions[0] = config.threshold_center;
    } else {
        const double lo = config.threshold_center - config.threshold_halfwidth;
        const double step = 2.0 * config.threshold_halfwidth / (config.n_thresholds - 1);
        for (int j = 0; j < config.n_thresholds; ++j) fractions[j] = lo + j * step;
    }

    ActivationMap map;
    map.times_ms = Eigen::VectorXd::Zero(n);
    map.activated.assign(n, false);
    map.method = "threshold";
    map.params = "n=" + std::to_string(config.n_thresholds) +
                 ";center=" + std::to_string(config.threshold_center) +
                 ";halfwidth=" + std::to_string(config.threshold_halfwidth);

    for (int i = 0; i < n; ++i) {
        const double vmax = v.values.row(i).maxCoeff();
        if (!(vmax > 0.0)) continue;
        double sum = 0.0;
        int crossed = 0;
        for (double f : fractions) {
            const double theta = f * vmax;
            // Censoring convention: a series already at or above the level
            // when recording starts is treated as crossed at the first sample.
            if (v.values(i, 0) >= theta) {
                sum += v.time_at(0);
                ++crossed;
                continue;
            }
            for (int k = 1; k < m; ++k) {
                const double a = v.values(i, k - 1);
                const double b = v.values(i, k);
                if (a < theta && b >= theta) {
                    sum += v.time_at(k - 1) + (theta - a) / (b - a) * v.dt_ms;
                    ++crossed;
                    break;
                }
            }
        }
        if (crossed == 0) continue;
        map.times_ms[i] = sum / crossed;
        map.activated[i] = true;
    }
    return map;
}

ActivationMap interpolate_activation(const CurveMesh& src, const CurveMesh& dst,
                                     const ActivationMap& map) {
    if (map.node_count() != src.node_count())
        throw ValidationError("activation map size does not match the source curve");
    const std::vector<double> arcs = project_onto_curve(src, dst);

    ActivationMap out;
    out.times_ms = Eigen::VectorXd::Zero(dst.node_count());
    out.activated.assign(dst.node_count(), false);
    out.method = map.method;
    out.params = map.params;

    const double total = src.total_length();
    for (int i = 0; i < dst.node_count(); ++i) {
        double a = arcs[i];
        if (src.closed()) a = std::fmod(std::fmod(a, total) + total, total);
        // locate the source segment containing arc coordinate a
        int seg = src.segment_count() - 1;
        for (int s = 0; s < src.segment_count(); ++s) {
            const double lo = src.arc_coordinate(s);
            if (a >= lo && a <= lo + src.segment_length(s) + 1e-12) {
                seg = s;
                break;
            }
        }
        const auto [p, q] = src.segment(seg);
        const double w =
            std::clamp((a - src.arc_coordinate(seg)) / src.segment_length(seg), 0.0, 1.0);
        const bool use_p = w < 1.0 - 1e-12;
        const bool use_q = w > 1e-12;
        if ((use_p && !map.activated[p]) || (use_q && !map.activated[q])) continue;
        out.times_ms[i] = (1.0 - w) * map.times_ms[p] + w * map.times_ms[q];
        out.activated[i] = true;
    }
    return out;
}

int ActivationMap::activated_count() const {
    int n = 0;
    for (bool a : activated) n += a ? 1 : 0;
    return n;
}

} // namespace ecgi
