#ifndef ECGI_METRICS_HPP
#define ECGI_METRICS_HPP

#include "ecgi/fem.hpp"
#include "ecgi/mesh.hpp"
#include "ecgi/postprocess_types.hpp"

namespace ecgi {

/// The three agreement measures between a computed activation map and the
/// reference, plus the fraction of nodes excluded because either map flagged
/// them non-activated.
struct MapErrors {
    double l2 = 0.0;  // mass-weighted relative L2 error, >= 0
    double cc = 0.0;  // Pearson correlation of the times, in [-1, 1]
    double sc = 0.0;  // Pearson correlation of stacked gradient components
    double excluded_fraction = 0.0;
};

/// sqrt(d' M d / ref' M ref) with d = at - ref, restricted to nodes activated
/// in both maps (the mass operator rows/columns of excluded nodes are
/// dropped). Throws UndefinedMetricError when the reference norm vanishes.
double l2err(const ActivationMap& at, const ActivationMap& at_ref,
             const SparseOperator& mass);

/// Standard Pearson correlation over the commonly activated nodes.
double pearson_cc(const ActivationMap& at, const ActivationMap& at_ref);

/// Pearson correlation between the stacked per-element curve gradients of the
/// two maps. Segments touching a non-activated node are excluded.
double slowness_coefficient(const ActivationMap& at, const ActivationMap& at_ref,
                            const CurveMesh& curve);

/// All three metrics at once; excluded_fraction is the pairwise exclusion rate.
MapErrors map_errors(const ActivationMap& at, const ActivationMap& at_ref,
                     const CurveMesh& curve);

} // namespace ecgi

#endif
