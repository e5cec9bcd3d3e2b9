#include "ecgi/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ecgi/errors.hpp"
#include "ecgi/parallel.hpp"

namespace ecgi {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
    double w = std::fmod(a, 2.0 * kPi);
    if (w < 0.0) w += 2.0 * kPi;
    return w;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

} // namespace

void MSParams::validate() const {
    require(tau_in > 0.0, "membrane.tau_in must be positive");
    require(tau_out > 0.0, "membrane.tau_out must be positive");
    require(tau_open > 0.0, "membrane.tau_open must be positive");
    require(tau_close > 0.0, "membrane.tau_close must be positive");
    require(v_gate > 0.0 && v_gate < 1.0,
            "membrane.v_gate must lie in (0,1), got " + std::to_string(v_gate));
    require(diffusivity > 0.0, "membrane.diffusivity must be positive");
}

void StimulusSpec::validate(int index) const {
    const std::string key = "stimuli[" + std::to_string(index) + "]";
    require(radius_cm > 0.0, key + ".radius_cm must be positive");
    require(start_ms >= 0.0, key + ".start_ms must be non-negative");
    require(duration_ms > 0.0, key + ".duration_ms must be positive");
    require(std::isfinite(amplitude), key + ".amplitude must be finite");
}

void BlockRegion::validate(int index) const {
    const std::string key = "blocks[" + std::to_string(index) + "]";
    require(scale > 0.0 && scale <= 1.0,
            key + ".scale must lie in (0,1], got " + std::to_string(scale));
    require(radial_fraction > 0.0 && radial_fraction <= 1.0,
            key + ".radial_fraction must lie in (0,1]");
    require(std::isfinite(start_rad) && std::isfinite(end_rad),
            key + " angles must be finite");
}

bool BlockRegion::contains_angle(double theta) const {
    const double t = wrap_angle(theta);
    const double s = wrap_angle(start_rad);
    const double e = wrap_angle(end_rad);
    if (s <= e) return t >= s && t <= e;
    return t >= s || t <= e; // sector wraps through angle 0
}

void GeometryParams::validate() const {
    require(layer_depth_cm > 0.0, "geometry.layer_depth_cm must be positive");
    require(epi_radius_cm > layer_depth_cm,
            "geometry.epi_radius_cm must exceed geometry.layer_depth_cm");
    require(torso_radius_cm > epi_radius_cm,
            "geometry.torso_radius_cm must exceed geometry.epi_radius_cm");
    require(forward_angular_nodes >= 16, "geometry.forward_angular_nodes must be >= 16");
    require(inverse_angular_nodes >= 16, "geometry.inverse_angular_nodes must be >= 16");
    require(myocardium_radial_layers >= 1, "geometry.myocardium_radial_layers must be >= 1");
    require(forward_torso_radial_layers >= 1,
            "geometry.forward_torso_radial_layers must be >= 1");
    require(inverse_torso_radial_layers >= 1,
            "geometry.inverse_torso_radial_layers must be >= 1");
    require(torso_grading > 0.0, "geometry.torso_grading must be positive");
}

void ScenarioConfig::validate() const {
    geometry.validate();
    membrane.validate();
    require(sigma_i > 0.0, "sigma_i must be positive");
    require(sigma_e > 0.0, "sigma_e must be positive");
    require(sigma_t > 0.0, "sigma_t must be positive");
    require(alpha > 0.0 && alpha < 1.0,
            "alpha must lie in (0,1), got " + std::to_string(alpha));
    require(dt_sim_ms > 0.0, "dt_sim_ms must be positive");
    require(dt_output_ms >= dt_sim_ms, "dt_output_ms must be >= dt_sim_ms");
    const double sub = dt_output_ms / dt_sim_ms;
    require(std::abs(sub - std::llround(sub)) <= 1e-9 * sub,
            "dt_output_ms must be an integer multiple of dt_sim_ms");
    const double steps = t_end_ms / dt_output_ms;
    require(steps >= 1.0 - 1e-9, "t_end_ms must be at least one output step");
    require(std::abs(steps - std::llround(steps)) <= 1e-9 * steps,
            "t_end_ms must be an integer multiple of dt_output_ms");
    require(noise_fraction >= 0.0, "noise_fraction must be non-negative");
    require(at_level > 0.0 && at_level < 1.0, "at_level must lie in (0,1)");
    require(vtk_stride >= 0, "vtk_stride must be non-negative");
    for (int i = 0; i < static_cast<int>(stimuli.size()); ++i) stimuli[i].validate(i);
    for (int i = 0; i < static_cast<int>(blocks.size()); ++i) blocks[i].validate(i);
}

int ScenarioConfig::output_steps() const {
    return static_cast<int>(std::llround(t_end_ms / dt_output_ms)) + 1;
}

int ScenarioConfig::sim_substeps() const {
    return static_cast<int>(std::llround(dt_output_ms / dt_sim_ms));
}

ForwardMeshes ForwardMeshes::build(const ScenarioConfig& config) {
    config.validate();
    const GeometryParams& g = config.geometry;
    const double r_blood = g.epi_radius_cm - g.layer_depth_cm;

    std::vector<double> radii;
    std::vector<BoundaryTag> ring_tags;
    for (int i = 0; i <= g.myocardium_radial_layers; ++i) {
        const double f = static_cast<double>(i) / g.myocardium_radial_layers;
        radii.push_back(r_blood + f * g.layer_depth_cm);
        ring_tags.push_back(i == 0 ? BoundaryTag::blood
                            : i == g.myocardium_radial_layers ? BoundaryTag::epicardial
                                                              : BoundaryTag::interior);
    }
    const std::vector<double> torso = graded_radii(
        g.epi_radius_cm, g.torso_radius_cm, g.forward_torso_radial_layers, g.torso_grading);
    for (std::size_t i = 1; i < torso.size(); ++i) {
        radii.push_back(torso[i]);
        ring_tags.push_back(i + 1 == torso.size() ? BoundaryTag::body_surface
                                                  : BoundaryTag::interior);
    }

    Mesh2D mesh = generate_ring_mesh(radii, g.forward_angular_nodes, ring_tags);

    std::vector<int> myo_elements, torso_elements;
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        const double rc = mesh.centroid(e).norm();
        (rc < g.epi_radius_cm ? myo_elements : torso_elements).push_back(e);
    }
    SubMesh myo = extract_submesh(mesh, myo_elements);
    CurveMesh epi_curve = extract_tagged_cycle(mesh, BoundaryTag::epicardial);
    CurveMesh body_curve = extract_tagged_cycle(mesh, BoundaryTag::body_surface);

    std::vector<double> block_scale(mesh.triangle_count(), 1.0);
    for (int e : myo_elements) {
        const Eigen::Vector2d c = mesh.centroid(e);
        // Blocks occupy the outer (epicardial-side) part of the wall so the
        // epicardial map sees the line of block; radial_fraction < 1 leaves a
        // conducting channel near the blood pool for the detour.
        const double depth = g.epi_radius_cm - c.norm();
        for (const BlockRegion& b : config.blocks) {
            if (b.contains_angle(std::atan2(c.y(), c.x())) &&
                depth <= b.radial_fraction * g.layer_depth_cm + 1e-12) {
                block_scale[e] = std::min(block_scale[e], b.scale);
            }
        }
    }
    return ForwardMeshes{std::move(mesh),      std::move(myo_elements),
                         std::move(torso_elements), std::move(myo),
                         std::move(epi_curve), std::move(body_curve),
                         std::move(block_scale)};
}

MonodomainStepper::MonodomainStepper(const ForwardMeshes& meshes,
                                     const ScenarioConfig& config)
    : myo_(&meshes.myo), ms_(config.membrane), dt_(config.dt_sim_ms),
      stimuli_(config.stimuli) {
    ms_.validate();
    const Mesh2D& m = myo_->mesh;
    std::vector<double> coeff(m.triangle_count());
    for (int e = 0; e < m.triangle_count(); ++e)
        coeff[e] = ms_.diffusivity * meshes.block_scale[meshes.myo_elements[e]];

    mass_ = assemble_mass(m).mat;
    const SparseOperator stiff = assemble_stiffness(m, coeff);
    Eigen::SparseMatrix<double> system = mass_ + dt_ * stiff.mat;
    diffusion_solver_.compute(system);
    if (diffusion_solver_.info() != Eigen::Success)
        throw NumericsError("monodomain diffusion factorization failed");

    const double r_mid = config.geometry.epi_radius_cm - 0.5 * config.geometry.layer_depth_cm;
    for (int s = 0; s < static_cast<int>(stimuli_.size()); ++s) {
        const StimulusSpec& st = stimuli_[s];
        const Eigen::Vector2d center(r_mid * std::cos(st.angle_rad),
                                     r_mid * std::sin(st.angle_rad));
        std::vector<int> nodes;
        for (int i = 0; i < m.node_count(); ++i)
            if ((m.node(i) - center).norm() <= st.radius_cm) nodes.push_back(i);
        if (nodes.empty())
            throw ValidationError("stimuli[" + std::to_string(s) +
                                  "] covers no myocardial nodes");
        stim_nodes_.push_back(std::move(nodes));
    }
}

MonodomainState MonodomainStepper::initial_state() const {
    MonodomainState st;
    st.v = Eigen::VectorXd::Zero(myo_->mesh.node_count());
    st.h_gate = Eigen::VectorXd::Ones(myo_->mesh.node_count());
    st.time_ms = 0.0;
    return st;
}

void MonodomainStepper::step(MonodomainState& state) const {
    const Eigen::ArrayXd v = state.v.array();
    const Eigen::ArrayXd h = state.h_gate.array();

    Eigen::ArrayXd reaction =
        h * v.square() * (1.0 - v) / ms_.tau_in - v / ms_.tau_out;
    for (std::size_t s = 0; s < stimuli_.size(); ++s) {
        const StimulusSpec& st = stimuli_[s];
        if (state.time_ms >= st.start_ms &&
            state.time_ms < st.start_ms + st.duration_ms) {
            for (int i : stim_nodes_[s]) reaction[i] += st.amplitude;
        }
    }

    const Eigen::VectorXd rhs = mass_ * (state.v + dt_ * reaction.matrix());
    Eigen::VectorXd v_next = diffusion_solver_.solve(rhs);
    if (!v_next.allFinite() || v_next.cwiseAbs().maxCoeff() > 10.0)
        throw StabilityError("monodomain step diverged at t = " +
                             std::to_string(state.time_ms + dt_) + " ms");

    Eigen::ArrayXd h_next(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) {
        h_next[i] = v[i] < ms_.v_gate ? h[i] + dt_ * (1.0 - h[i]) / ms_.tau_open
                                      : h[i] - dt_ * h[i] / ms_.tau_close;
    }
    state.v = std::move(v_next);
    state.h_gate = h_next.min(1.0).max(0.0).matrix();
    state.time_ms += dt_;
}

ExtracardiacSolver::ExtracardiacSolver(const ForwardMeshes& meshes,
                                       const ScenarioConfig& config)
    : meshes_(&meshes) {
    const Mesh2D& m = meshes.mesh;
    std::vector<bool> is_myo(m.triangle_count(), false);
    for (int e : meshes.myo_elements) is_myo[e] = true;

    std::vector<double> bulk(m.triangle_count());
    for (int e = 0; e < m.triangle_count(); ++e) {
        bulk[e] = is_myo[e]
                      ? (config.sigma_i + config.sigma_e) * meshes.block_scale[e]
                      : config.sigma_t;
    }
    const SparseOperator stiff = assemble_stiffness(m, bulk);

    // Pure Neumann problem: pin one node to fix the additive constant, then
    // shift solutions to zero mass-weighted mean over the body surface.
    pinned_node_ = 0;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(stiff.mat.nonZeros() + 1);
    for (int k = 0; k < stiff.mat.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(stiff.mat, k); it; ++it) {
            if (it.row() == pinned_node_ || it.col() == pinned_node_) continue;
            trips.emplace_back(it.row(), it.col(), it.value());
        }
    }
    trips.emplace_back(pinned_node_, pinned_node_, 1.0);
    Eigen::SparseMatrix<double> pinned(m.node_count(), m.node_count());
    pinned.setFromTriplets(trips.begin(), trips.end());
    solver_.compute(pinned);
    if (solver_.info() != Eigen::Success)
        throw NumericsError("extracardiac factorization failed");

    // Source term: -div(sigma_i grad v), assembled on the myocardial sub-mesh
    // and scattered into full-mesh rows.
    const Mesh2D& hm = meshes.myo.mesh;
    std::vector<double> src_coeff(hm.triangle_count());
    for (int e = 0; e < hm.triangle_count(); ++e)
        src_coeff[e] = config.sigma_i * meshes.block_scale[meshes.myo_elements[e]];
    const SparseOperator k_src = assemble_stiffness(hm, src_coeff);
    std::vector<Eigen::Triplet<double>> src_trips;
    src_trips.reserve(k_src.mat.nonZeros());
    for (int k = 0; k < k_src.mat.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(k_src.mat, k); it; ++it) {
            src_trips.emplace_back(meshes.myo.to_parent[it.row()],
                                   static_cast<int>(it.col()), it.value());
        }
    }
    source_op_.resize(m.node_count(), hm.node_count());
    source_op_.setFromTriplets(src_trips.begin(), src_trips.end());

    const Eigen::VectorXd curve_mass =
        assemble_mass(meshes.body_curve).lumped_diagonal();
    body_mass_weights_ = Eigen::VectorXd::Zero(m.node_count());
    for (int i = 0; i < meshes.body_curve.node_count(); ++i)
        body_mass_weights_[meshes.body_curve.parent_index(i)] = curve_mass[i];
    body_mass_total_ = body_mass_weights_.sum();
}

Eigen::VectorXd ExtracardiacSolver::solve(const Eigen::VectorXd& v_myo) const {
    if (v_myo.size() != source_op_.cols())
        throw ValidationError("extracardiac solve: transmembrane field has " +
                              std::to_string(v_myo.size()) + " nodes, expected " +
                              std::to_string(source_op_.cols()));
    Eigen::VectorXd rhs = -(source_op_ * v_myo);
    rhs[pinned_node_] = 0.0;
    Eigen::VectorXd u = solver_.solve(rhs);
    if (!u.allFinite()) throw NumericsError("extracardiac solve produced non-finite values");
    u.array() -= body_mass_weights_.dot(u) / body_mass_total_;
    return u;
}

ExtracardiacSolver::Traces ExtracardiacSolver::solve_traces(
    const Eigen::VectorXd& v_myo) const {
    const Eigen::VectorXd u = solve(v_myo);
    Traces tr;
    tr.u_epi.resize(meshes_->epi_curve.node_count());
    for (int i = 0; i < meshes_->epi_curve.node_count(); ++i)
        tr.u_epi[i] = u[meshes_->epi_curve.parent_index(i)];
    tr.z_body.resize(meshes_->body_curve.node_count());
    for (int i = 0; i < meshes_->body_curve.node_count(); ++i)
        tr.z_body[i] = u[meshes_->body_curve.parent_index(i)];
    return tr;
}

ForwardResult run_forward(const ScenarioConfig& config, const ForwardMeshes& meshes,
                          int workers) {
    config.validate();
    const int n_out = config.output_steps();
    const int sub = config.sim_substeps();

    MonodomainStepper stepper(meshes, config);
    MonodomainState state = stepper.initial_state();

    Eigen::MatrixXd v_heart(meshes.myo.mesh.node_count(), n_out);
    v_heart.col(0) = state.v;
    for (int k = 1; k < n_out; ++k) {
        for (int s = 0; s < sub; ++s) stepper.step(state);
        v_heart.col(k) = state.v;
    }

    std::vector<int> vtk_steps;
    std::vector<int> vtk_slot(n_out, -1);
    if (config.vtk_stride > 0) {
        for (int k = 0; k < n_out; k += config.vtk_stride) {
            vtk_slot[k] = static_cast<int>(vtk_steps.size());
            vtk_steps.push_back(k);
        }
    }

    const ExtracardiacSolver extracardiac(meshes, config);
    Eigen::MatrixXd u_epi(meshes.epi_curve.node_count(), n_out);
    Eigen::MatrixXd z_body(meshes.body_curve.node_count(), n_out);
    Eigen::MatrixXd u_full(meshes.mesh.node_count(),
                           static_cast<int>(vtk_steps.size()));
    parallel_for(n_out, workers, [&](int k) {
        const Eigen::VectorXd u = extracardiac.solve(v_heart.col(k));
        for (int i = 0; i < meshes.epi_curve.node_count(); ++i)
            u_epi(i, k) = u[meshes.epi_curve.parent_index(i)];
        for (int i = 0; i < meshes.body_curve.node_count(); ++i)
            z_body(i, k) = u[meshes.body_curve.parent_index(i)];
        if (vtk_slot[k] >= 0) u_full.col(vtk_slot[k]) = u;
    });

    Eigen::MatrixXd v_epi(meshes.epi_curve.node_count(), n_out);
    for (int i = 0; i < meshes.epi_curve.node_count(); ++i) {
        const int local = meshes.myo.from_parent[meshes.epi_curve.parent_index(i)];
        if (local < 0)
            throw GeometryError("epicardial node missing from the myocardial sub-mesh");
        v_epi.row(i) = v_heart.row(local);
    }

    ForwardResult res;
    res.v_heart = TimeSeriesField(std::move(v_heart), config.dt_output_ms);
    res.v_epi = TimeSeriesField(std::move(v_epi), config.dt_output_ms);
    res.u_epi = TimeSeriesField(std::move(u_epi), config.dt_output_ms);
    res.z_body = TimeSeriesField(std::move(z_body), config.dt_output_ms);
    res.at_ref = compute_reference_at(res.v_epi, config.at_level);
    res.any_activation = res.at_ref.activated_count() > 0;
    res.vtk_steps = std::move(vtk_steps);
    res.u_full = std::move(u_full);
    return res;
}

ForwardResult run_forward(const ScenarioConfig& config, int workers) {
    return run_forward(config, ForwardMeshes::build(config), workers);
}

ActivationMap compute_reference_at(const TimeSeriesField& v, double level) {
    v.require_samples(2, "activation detection");
    if (level <= 0.0 || level >= 1.0)
        throw ValidationError("activation level must lie in (0,1)");
    const int n = v.node_count();
    const int m = v.sample_count();

    Eigen::VectorXd vmin = v.values.rowwise().minCoeff();
    Eigen::VectorXd vmax = v.values.rowwise().maxCoeff();
    Eigen::VectorXd amp = vmax - vmin;
    const double global_amp = amp.maxCoeff();

    ActivationMap map;
    map.times_ms = Eigen::VectorXd::Zero(n);
    map.activated.assign(n, false);
    map.method = "reference";
    map.params = "level=" + std::to_string(level);
    if (global_amp <= 1e-9) return map; // quiescent tissue: nothing activates

    for (int i = 0; i < n; ++i) {
        if (amp[i] < 0.25 * global_amp) continue;
        const double theta = vmin[i] + level * amp[i];
        if (v.values(i, 0) >= theta) {
            map.times_ms[i] = v.time_at(0);
            map.activated[i] = true;
            continue;
        }
        for (int k = 1; k < m; ++k) {
            const double a = v.values(i, k - 1);
            const double b = v.values(i, k);
            if (a < theta && b >= theta) {
                const double frac = (theta - a) / (b - a);
                map.times_ms[i] = v.time_at(k - 1) + frac * v.dt_ms;
                map.activated[i] = true;
                break;
            }
        }
    }
    return map;
}

TimeSeriesField add_noise(const TimeSeriesField& z, double noise_fraction,
                          std::uint64_t rng_seed) {
    if (noise_fraction < 0.0)
        throw ValidationError("noise_fraction must be non-negative");
    TimeSeriesField out = z;
    if (noise_fraction == 0.0 || z.values.size() == 0) return out;
    const double scale = noise_fraction * z.values.cwiseAbs().maxCoeff();
    if (scale == 0.0) return out;

    std::mt19937_64 rng(rng_seed);
    std::normal_distribution<double> normal(0.0, scale);
    // Column-major walk so the noise realization is independent of worker
    // count and identical run to run for a fixed seed.
    for (int k = 0; k < out.sample_count(); ++k)
        for (int i = 0; i < out.node_count(); ++i) out.values(i, k) += normal(rng);
    return out;
}

} // namespace ecgi
