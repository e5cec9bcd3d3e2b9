#ifndef ECGI_TRANSFER_HPP
#define ECGI_TRANSFER_HPP

#include <cstdint>
#include <optional>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ecgi/fem.hpp"
#include "ecgi/mesh.hpp"
#include "ecgi/propagation.hpp"

namespace ecgi {

/// Material/geometry constants of the averaged epicardial source model.
struct AveragedModelParams {
    double sigma_i = 1.7; // mS/cm
    double sigma_e = 3.0;
    double sigma_t = 2.0;
    double layer_depth_cm = 0.5; // averaging depth h
    double alpha = 0.5;          // Robin coupling coefficient, in (0,1)

    void validate() const;
    static AveragedModelParams from_scenario(const ScenarioConfig& config);
};

/// Inverse-side discretization: torso annulus between the epicardial curve and
/// the body surface. Deliberately distinct from the forward mesh.
struct InverseMeshes {
    Mesh2D mesh;
    CurveMesh epi_curve;  // inner boundary, parent indices into `mesh`
    CurveMesh body_curve; // outer boundary

    static InverseMeshes build(const ScenarioConfig& config);
};

/// Raw weak-form blocks of the coupled averaged model in the unknowns
/// (U, V, U_T). Two residual equations:
///   epicardial:  -(si+se) L U - si L V + se/(alpha h^2) M (P U_T - U) = 0
///   torso:       st K U_T + se/(alpha h) P^T M (P U_T - U)            = 0
/// with L/M the epicardial curve stiffness/mass, K the torso stiffness and P
/// the restriction of torso nodes onto the epicardial curve.
struct AveragedSystem {
    SparseOperator mass_epi;   // M
    SparseOperator stiff_epi;  // L
    SparseOperator stiff_torso; // K (unit coefficient)
    SparseOperator mass_body;
    Eigen::SparseMatrix<double> epi_restriction;  // P: n_epi x n_torso
    Eigen::SparseMatrix<double> body_restriction; // n_body x n_torso
    AveragedModelParams params;

    int n_epi() const { return static_cast<int>(epi_restriction.rows()); }
    int n_body() const { return static_cast<int>(body_restriction.rows()); }
    int n_torso() const { return static_cast<int>(epi_restriction.cols()); }

    Eigen::VectorXd epicardial_residual(const Eigen::VectorXd& u,
                                        const Eigen::VectorXd& v,
                                        const Eigen::VectorXd& u_torso) const;
    Eigen::VectorXd torso_residual(const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& u_torso) const;
};

AveragedSystem assemble_averaged_system(const InverseMeshes& meshes,
                                        const AveragedModelParams& params);

/// Condensed observation operator acting on the stacked unknown x = (U; V):
///   data_block x       ~ body-surface potentials
///   constraint_block x ~ epicardial equilibrium (zero right-hand side)
/// plus the second-order regularizer for the V penalty.
struct TransferOperator {
    Eigen::MatrixXd data_block;       // n_body x 2 n_epi; V columns are zero
    Eigen::MatrixXd constraint_block; // n_epi  x 2 n_epi
    double constraint_weight = 1.0;   // balances constraint rows against data rows
    SparseOperator mass_body;
    SparseOperator mass_epi;
    Eigen::SparseMatrix<double> regularizer; // si^2 L^T Mlump^-1 L on the epi curve
    Eigen::MatrixXd torso_from_epi; // S: n_torso x n_epi, U_T = S U
    CurveMesh epi_curve;
    CurveMesh body_curve;
    AveragedModelParams params;

    int n_epi() const { return static_cast<int>(constraint_block.rows()); }
    int n_body() const { return static_cast<int>(data_block.rows()); }

    /// Predicted body-surface potentials for one (U, V) snapshot.
    Eigen::VectorXd predict(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
};

/// Schur condensation: eliminates U_T by factorizing the torso block
/// st K + se/(alpha h) P^T M P (positive definite thanks to the Robin term; no
/// pinning required) and solving one column per epicardial node, in parallel.
TransferOperator condense_to_transfer(const AveragedSystem& system,
                                      const InverseMeshes& meshes, int workers = 1);

/// Convenience: inverse meshes + assembly + condensation from a scenario.
TransferOperator build_transfer_operator(const ScenarioConfig& config, int workers = 1);

/// Binary cache of a condensed operator, keyed by a caller-supplied hash of
/// (geometry, model params). Loading with a different key misses.
void write_transfer_cache(const TransferOperator& op, const std::string& path,
                          std::uint64_t key);
std::optional<TransferOperator> read_transfer_cache(const std::string& path,
                                                    std::uint64_t key);

} // namespace ecgi

#endif
