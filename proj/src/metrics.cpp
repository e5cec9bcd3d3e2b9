#include "ecgi/metrics.hpp"

#include <cmath>
#include <vector>

#include "ecgi/errors.hpp"

namespace ecgi {

namespace {

void check_same_size(const ActivationMap& a, const ActivationMap& b) {
    if (a.node_count() != b.node_count() ||
        a.node_count() != static_cast<int>(a.activated.size()) ||
        b.node_count() != static_cast<int>(b.activated.size()))
        throw ValidationError("activation maps have mismatched node counts");
}

std::vector<int> common_nodes(const ActivationMap& a, const ActivationMap& b) {
    std::vector<int> idx;
    idx.reserve(a.node_count());
    for (int i = 0; i < a.node_count(); ++i)
        if (a.activated[i] && b.activated[i]) idx.push_back(i);
    return idx;
}

double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const char* what) {
    const double mx = x.mean();
    const double my = y.mean();
    const Eigen::ArrayXd dx = x.array() - mx;
    const Eigen::ArrayXd dy = y.array() - my;
    const double sx = std::sqrt((dx * dx).sum());
    const double sy = std::sqrt((dy * dy).sum());
    if (sx == 0.0 || sy == 0.0)
        throw UndefinedMetricError(std::string(what) +
                                   " undefined: zero variance in one of the inputs");
    return (dx * dy).sum() / (sx * sy);
}

} // namespace

double l2err(const ActivationMap& at, const ActivationMap& at_ref,
             const SparseOperator& mass) {
    check_same_size(at, at_ref);
    if (mass.rows() != at.node_count() || mass.cols() != at.node_count())
        throw ValidationError("mass operator size does not match the activation maps");
    const std::vector<int> idx = common_nodes(at, at_ref);
    if (idx.empty())
        throw UndefinedMetricError("l2err undefined: no commonly activated nodes");

    // Restrict the quadratic form to the common set by zeroing excluded nodes.
    Eigen::VectorXd d = Eigen::VectorXd::Zero(at.node_count());
    Eigen::VectorXd r = Eigen::VectorXd::Zero(at.node_count());
    for (int i : idx) {
        d[i] = at.times_ms[i] - at_ref.times_ms[i];
        r[i] = at_ref.times_ms[i];
    }
    const double ref_norm = r.dot(mass.mat * r);
    if (ref_norm <= 0.0)
        throw UndefinedMetricError("l2err undefined: reference map has zero norm");
    return std::sqrt(d.dot(mass.mat * d) / ref_norm);
}

double pearson_cc(const ActivationMap& at, const ActivationMap& at_ref) {
    check_same_size(at, at_ref);
    const std::vector<int> idx = common_nodes(at, at_ref);
    if (static_cast<int>(idx.size()) < 2)
        throw UndefinedMetricError("pearson_cc undefined: fewer than 2 common nodes");
    Eigen::VectorXd x(idx.size()), y(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        x[static_cast<int>(k)] = at.times_ms[idx[k]];
        y[static_cast<int>(k)] = at_ref.times_ms[idx[k]];
    }
    return pearson(x, y, "pearson_cc");
}

double slowness_coefficient(const ActivationMap& at, const ActivationMap& at_ref,
                            const CurveMesh& curve) {
    check_same_size(at, at_ref);
    if (curve.node_count() != at.node_count())
        throw ValidationError("curve size does not match the activation maps");

    std::vector<double> gx, gy;
    gx.reserve(curve.segment_count());
    gy.reserve(curve.segment_count());
    for (int s = 0; s < curve.segment_count(); ++s) {
        const auto [a, b] = curve.segment(s);
        if (!(at.activated[a] && at.activated[b] && at_ref.activated[a] &&
              at_ref.activated[b]))
            continue;
        const double len = curve.segment_length(s);
        gx.push_back((at.times_ms[b] - at.times_ms[a]) / len);
        gy.push_back((at_ref.times_ms[b] - at_ref.times_ms[a]) / len);
    }
    if (gx.size() < 2)
        throw UndefinedMetricError(
            "slowness_coefficient undefined: fewer than 2 usable segments");
    Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(gx.data(), static_cast<int>(gx.size()));
    Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(gy.data(), static_cast<int>(gy.size()));
    return pearson(x, y, "slowness_coefficient");
}

MapErrors map_errors(const ActivationMap& at, const ActivationMap& at_ref,
                     const CurveMesh& curve) {
    MapErrors e;
    e.l2 = l2err(at, at_ref, assemble_mass(curve));
    e.cc = pearson_cc(at, at_ref);
    e.sc = slowness_coefficient(at, at_ref, curve);
    const std::vector<int> idx = common_nodes(at, at_ref);
    e.excluded_fraction =
        1.0 - static_cast<double>(idx.size()) / static_cast<double>(at.node_count());
    return e;
}

} // namespace ecgi
