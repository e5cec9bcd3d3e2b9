#ifndef ECGI_PROPAGATION_HPP
#define ECGI_PROPAGATION_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "ecgi/fem.hpp"
#include "ecgi/fields.hpp"
#include "ecgi/mesh.hpp"
#include "ecgi/postprocess_types.hpp"

namespace ecgi {

/// Two-variable ionic model parameters (times in ms, diffusivity in cm^2/ms).
struct MSParams {
    double tau_in = 0.3;
    double tau_out = 6.0;
    double tau_open = 120.0;
    double tau_close = 150.0;
    double v_gate = 0.13;
    double diffusivity = 0.008;

    void validate() const;
};

/// Temporally localized stimulation current over a small area of the ring.
struct StimulusSpec {
    double angle_rad = 0.0;  // position on the annulus midline
    double radius_cm = 0.4;
    double start_ms = 1.0;
    double duration_ms = 2.0;
    double amplitude = 0.5;  // 1/ms added to dv/dt while active

    void validate(int index) const;
};

/// Angular sector of reduced conductivity inside the myocardial ring. The
/// blocked region spans the outer radial_fraction of the wall, touching the
/// epicardium; radial_fraction < 1 leaves a conducting channel near the blood
/// pool so the wave detours beneath the blocked sector.
struct BlockRegion {
    double start_rad = 0.0;
    double end_rad = 0.0;
    double scale = 0.01;
    double radial_fraction = 1.0;

    void validate(int index) const;
    bool contains_angle(double theta) const;
};

struct GeometryParams {
    double torso_radius_cm = 10.0;
    double epi_radius_cm = 3.0;
    double layer_depth_cm = 0.5; // myocardial thickness h
    // The inverse mesh is deliberately coarser than the forward mesh: the two
    // grids must be distinct so reconstructions are never evaluated on the
    // discretization that produced the data.
    int forward_angular_nodes = 256;
    int inverse_angular_nodes = 192;
    int myocardium_radial_layers = 4;
    int forward_torso_radial_layers = 20;
    int inverse_torso_radial_layers = 16;
    double torso_grading = 1.4; // radial grading exponent, finer near the heart

    void validate() const;
};

/// Full experiment description: geometry, conductivities, stimuli, blocks,
/// timing, noise seed.
struct ScenarioConfig {
    std::string name = "scenario";
    GeometryParams geometry;
    double sigma_i = 1.7; // mS/cm
    double sigma_e = 3.0;
    double sigma_t = 2.0;
    double alpha = 0.5;
    MSParams membrane;
    std::vector<StimulusSpec> stimuli;
    std::vector<BlockRegion> blocks;
    double dt_sim_ms = 0.05;
    double dt_output_ms = 1.0;
    double t_end_ms = 120.0;
    double noise_fraction = 0.04;
    std::uint64_t rng_seed = 1;
    double at_level = 0.5;   // normalized crossing level for reference maps
    int vtk_stride = 10;     // output-step stride between VTK snapshots; 0 disables

    void validate() const;
    int output_steps() const; // sample count including t = 0
    int sim_substeps() const; // sim steps per output step
};

/// Forward discretization: one conforming mesh from the blood boundary to the
/// body surface, the myocardial sub-mesh the reaction-diffusion model runs on,
/// and the two boundary curves.
struct ForwardMeshes {
    Mesh2D mesh;                 // full annulus (myocardium + torso)
    std::vector<int> myo_elements;
    std::vector<int> torso_elements;
    SubMesh myo;                 // myocardial sub-mesh
    CurveMesh epi_curve;         // closed epicardial polyline (full-mesh indices)
    CurveMesh body_curve;        // closed body-surface polyline (full-mesh indices)
    std::vector<double> block_scale; // per full-mesh element, 1 outside blocks

    static ForwardMeshes build(const ScenarioConfig& config);
};

/// Monodomain state; v is dimensionless (0 rest, ~1 plateau), h_gate in [0,1].
struct MonodomainState {
    Eigen::VectorXd v;
    Eigen::VectorXd h_gate;
    double time_ms = 0.0;
};

/// Semi-implicit monodomain stepper on the myocardial sub-mesh: implicit
/// diffusion, explicit two-variable reaction.
class MonodomainStepper {
public:
    MonodomainStepper(const ForwardMeshes& meshes, const ScenarioConfig& config);

    MonodomainState initial_state() const;
    /// Advance one dt_sim step in place. Throws StabilityError on divergence.
    void step(MonodomainState& state) const;

    const SubMesh& myo() const { return *myo_; }

private:
    const SubMesh* myo_;
    MSParams ms_;
    double dt_;
    std::vector<StimulusSpec> stimuli_;
    std::vector<std::vector<int>> stim_nodes_; // myo-local nodes per stimulus
    Eigen::SparseMatrix<double> mass_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> diffusion_solver_;
};

/// Static elliptic extracardiac problem: piecewise conductivity over the full
/// mesh, source driven by the transmembrane voltage on myocardial elements,
/// zero flux on the blood and body boundaries. Potentials are normalized to
/// zero mass-weighted mean over the body-surface curve. The factorization is
/// immutable after construction; solves may run concurrently.
class ExtracardiacSolver {
public:
    ExtracardiacSolver(const ForwardMeshes& meshes, const ScenarioConfig& config);

    /// Full-mesh potential for one transmembrane snapshot (myo-local indexing).
    Eigen::VectorXd solve(const Eigen::VectorXd& v_myo) const;

    /// Traces on the epicardial and body-surface curves for one snapshot.
    struct Traces {
        NodalField u_epi;
        NodalField z_body;
    };
    Traces solve_traces(const Eigen::VectorXd& v_myo) const;

private:
    const ForwardMeshes* meshes_;
    Eigen::SparseMatrix<double> source_op_; // maps v (myo-local) to -div(sigma_i grad v) rhs
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
    Eigen::VectorXd body_mass_weights_; // full-mesh weights for the zero-mean shift
    double body_mass_total_ = 0.0;
    int pinned_node_ = 0;
};

/// Forward outputs on the output time grid.
struct ForwardResult {
    TimeSeriesField v_heart; // myo-local node indexing
    TimeSeriesField v_epi;   // epicardial curve indexing
    TimeSeriesField u_epi;
    TimeSeriesField z_body;  // body-surface curve indexing
    ActivationMap at_ref;
    bool any_activation = true;
    std::vector<int> vtk_steps; // output steps with a captured full-mesh potential
    Eigen::MatrixXd u_full;     // one column per entry of vtk_steps
};

/// Run the scenario end to end: time stepping, per-output-step extracardiac
/// solves (parallel over steps), reference activation map.
ForwardResult run_forward(const ScenarioConfig& config, const ForwardMeshes& meshes,
                          int workers = 1);
ForwardResult run_forward(const ScenarioConfig& config, int workers = 1);

/// Per-node first upward crossing of `level` (fraction of the node's own
/// amplitude), linearly interpolated between samples. Nodes whose amplitude
/// stays below a quarter of the largest amplitude are flagged non-activated.
ActivationMap compute_reference_at(const TimeSeriesField& v, double level = 0.5);

/// Additive Gaussian noise, std = noise_fraction * max |z| over all nodes and
/// times, independent per sample and per time step. Deterministic under seed.
TimeSeriesField add_noise(const TimeSeriesField& z, double noise_fraction,
                          std::uint64_t rng_seed);

} // namespace ecgi

#endif
