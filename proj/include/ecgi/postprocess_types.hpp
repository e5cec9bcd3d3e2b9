#ifndef ECGI_POSTPROCESS_TYPES_HPP
#define ECGI_POSTPROCESS_TYPES_HPP

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ecgi {

/// Per-node activation time (ms). `activated[i]` is false where no crossing or
/// deflection was found; the corresponding time entry is meaningless. `method`
/// records how the map was produced (threshold, defl_st_v, defl_st_u, defl_t_v,
/// defl_t_u, reference) and `params` the settings used, for provenance.
struct ActivationMap {
    Eigen::VectorXd times_ms;
    std::vector<bool> activated;
    std::string method;
    std::string params;

    int node_count() const { return static_cast<int>(times_ms.size()); }
    int activated_count() const;
};

} // namespace ecgi

#endif
