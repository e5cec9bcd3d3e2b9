#include "ecgi/pipeline.hpp"

#include <chrono>
#include <filesystem>

#include "ecgi/errors.hpp"
#include "ecgi/io.hpp"
#include "ecgi/metrics.hpp"
#include "ecgi/parallel.hpp"

namespace ecgi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Key for the condensed-operator cache: geometry and averaged-model fields
/// only, so different seeds/noise levels share one condensation.
std::uint64_t transfer_cache_key(const RunConfig& config) {
    const ScenarioConfig& s = config.scenario;
    const json j = {{"torso_radius_cm", s.geometry.torso_radius_cm},
                    {"epi_radius_cm", s.geometry.epi_radius_cm},
                    {"layer_depth_cm", s.geometry.layer_depth_cm},
                    {"inverse_angular_nodes", s.geometry.inverse_angular_nodes},
                    {"inverse_torso_radial_layers", s.geometry.inverse_torso_radial_layers},
                    {"torso_grading", s.geometry.torso_grading},
                    {"sigma_i", s.sigma_i},
                    {"sigma_e", s.sigma_e},
                    {"sigma_t", s.sigma_t},
                    {"alpha", s.alpha}};
    return fnv1a_hash(j.dump());
}

} // namespace

Pipeline::Pipeline(RunConfig config, RunOptions options)
    : config_(std::move(config)), opt_(std::move(options)), metrics_(json::object()) {
    if (opt_.seed) config_.scenario.rng_seed = *opt_.seed;
    if (opt_.epsilon) config_.inverse.epsilon = *opt_.epsilon;
    config_.validate();
    if (opt_.workers < 0) throw ValidationError("workers must be non-negative");
    hash_ = config_hash(config_);
}

std::string Pipeline::scenario_dir() const {
    return (fs::path(opt_.out_dir) / config_.scenario.name).string();
}

const std::vector<std::string>& Pipeline::method_names() {
    static const std::vector<std::string> names = {"threshold", "defl_st_v", "defl_st_u",
                                                   "defl_t_v", "defl_t_u"};
    return names;
}

void Pipeline::record_output(const std::string& relative_path) {
    for (const std::string& p : outputs_)
        if (p == relative_path) return;
    outputs_.push_back(relative_path);
}

const ForwardMeshes& Pipeline::forward_meshes() {
    if (!fwd_meshes_) fwd_meshes_ = ForwardMeshes::build(config_.scenario);
    return *fwd_meshes_;
}

TimeSeriesField Pipeline::load_series(const std::string& relative_path) const {
    const fs::path p = fs::path(scenario_dir()) / relative_path;
    if (!fs::exists(p))
        throw ValidationError("missing artifact '" + p.string() +
                              "'; run the producing stage first");
    return read_series_csv(p.string());
}

const TransferOperator& Pipeline::transfer() {
    if (transfer_) return *transfer_;
    const std::uint64_t key = transfer_cache_key(config_);
    const fs::path cache = fs::path(opt_.out_dir) / ("transfer_" + hex64(key) + ".bin");
    fs::create_directories(opt_.out_dir);
    if (auto cached = read_transfer_cache(cache.string(), key)) {
        transfer_ = std::move(*cached);
        return *transfer_;
    }
    transfer_ = build_transfer_operator(config_.scenario, opt_.workers);
    write_transfer_cache(*transfer_, cache.string(), key);
    return *transfer_;
}

void Pipeline::simulate() { run_stage("simulate", &Pipeline::simulate_impl); }
void Pipeline::reconstruct() { run_stage("reconstruct", &Pipeline::reconstruct_impl); }
void Pipeline::postprocess() { run_stage("postprocess", &Pipeline::postprocess_impl); }
void Pipeline::evaluate() { run_stage("evaluate", &Pipeline::evaluate_impl); }

void Pipeline::run_stage(const char* name, void (Pipeline::*fn)()) {
    const auto start = std::chrono::steady_clock::now();
    try {
        (this->*fn)();
    } catch (const ValidationError& e) {
        throw ValidationError("stage '" + std::string(name) + "' failed: " + e.what());
    } catch (const NumericsError& e) {
        throw NumericsError("stage '" + std::string(name) + "' failed: " + e.what());
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    timings_.emplace_back(name, elapsed.count());
}

void Pipeline::simulate_impl() {
    const fs::path dir = fs::path(scenario_dir()) / "forward";
    fs::create_directories(dir);

    const ForwardMeshes& meshes = forward_meshes();
    forward_ = run_forward(config_.scenario, meshes, opt_.workers);

    write_json_file((fs::path(scenario_dir()) / "config.json").string(),
                    run_config_to_json(config_));
    record_output("config.json");

    write_series_csv((dir / "v_heart.csv").string(), forward_->v_heart);
    write_series_csv((dir / "v_epi.csv").string(), forward_->v_epi);
    write_series_csv((dir / "u_epi.csv").string(), forward_->u_epi);
    write_series_csv((dir / "z_body.csv").string(), forward_->z_body);
    write_activation_csv((dir / "at_ref.csv").string(), forward_->at_ref);
    for (const char* f : {"forward/v_heart.csv", "forward/v_epi.csv", "forward/u_epi.csv",
                          "forward/z_body.csv", "forward/at_ref.csv"})
        record_output(f);

    write_mesh_file(meshes.mesh, (dir / "mesh.txt").string());
    record_output("forward/mesh.txt");

    // Full-field snapshots: v scattered onto the full mesh (zero outside the
    // myocardium) alongside the extracardiac potential.
    for (std::size_t s = 0; s < forward_->vtk_steps.size(); ++s) {
        const int k = forward_->vtk_steps[s];
        Eigen::VectorXd v_full = Eigen::VectorXd::Zero(meshes.mesh.node_count());
        for (int i = 0; i < meshes.myo.mesh.node_count(); ++i)
            v_full[meshes.myo.to_parent[i]] = forward_->v_heart.values(i, k);
        char name[64];
        std::snprintf(name, sizeof name, "snapshot_%04d.vtk", k);
        write_vtk_snapshot((dir / name).string(), meshes.mesh,
                           {{"v", v_full}, {"u", forward_->u_full.col(s)}});
        record_output(std::string("forward/") + name);
    }
}

void Pipeline::reconstruct_impl() {
    const fs::path dir = fs::path(scenario_dir()) / "reconstruction";
    fs::create_directories(dir);

    const TimeSeriesField z_fwd =
        forward_ ? forward_->z_body : load_series("forward/z_body.csv");
    const TransferOperator& op = transfer();

    // Move the body-surface data onto the inverse mesh's electrode nodes, then
    // corrupt it: noise models measurement error, so it is added after the
    // interpolation.
    const CurveMesh& src_body = forward_meshes().body_curve;
    Eigen::MatrixXd z_interp(op.body_curve.node_count(), z_fwd.sample_count());
    parallel_for(z_fwd.sample_count(), opt_.workers, [&](int k) {
        z_interp.col(k) = interpolate(src_body, op.body_curve, z_fwd.values.col(k));
    });
    const TimeSeriesField z_noisy =
        add_noise(TimeSeriesField(std::move(z_interp), z_fwd.dt_ms, z_fwd.t0_ms),
                  config_.scenario.noise_fraction, config_.scenario.rng_seed);

    recon_ = reconstruct_series(op, z_noisy, config_.inverse, opt_.workers);

    write_series_csv((dir / "z_data.csv").string(), z_noisy);
    write_series_csv((dir / "u_rec.csv").string(), recon_->u_rec);
    write_series_csv((dir / "v_rec.csv").string(), recon_->v_rec);
    json residuals = {{"data_misfit", json::array()},
                      {"normal_residual_rel", json::array()},
                      {"warnings", recon_->warnings}};
    for (int k = 0; k < recon_->data_misfit.size(); ++k) {
        residuals["data_misfit"].push_back(recon_->data_misfit[k]);
        residuals["normal_residual_rel"].push_back(recon_->normal_residual_rel[k]);
    }
    write_json_file((dir / "residuals.json").string(), residuals);
    for (const char* f : {"reconstruction/z_data.csv", "reconstruction/u_rec.csv",
                          "reconstruction/v_rec.csv", "reconstruction/residuals.json"})
        record_output(f);
}

void Pipeline::postprocess_impl() {
    const fs::path dir = fs::path(scenario_dir()) / "maps";
    fs::create_directories(dir);

    TimeSeriesField u_rec = recon_ ? recon_->u_rec : load_series("reconstruction/u_rec.csv");
    TimeSeriesField v_rec = recon_ ? recon_->v_rec : load_series("reconstruction/v_rec.csv");

    const CurveMesh& epi =
        transfer_ ? transfer_->epi_curve : InverseMeshes::build(config_.scenario).epi_curve;
    if (u_rec.node_count() != epi.node_count() || v_rec.node_count() != epi.node_count())
        throw ValidationError("reconstruction node count does not match the inverse "
                              "epicardial curve");

    const PostprocessConfig& pc = config_.postprocess;
    const double sd = pc.smoothing_std_ms;
    const TimeSeriesField v_prep = gaussian_smooth_time(adjust_baseline(v_rec), sd);
    const TimeSeriesField u_prep = gaussian_smooth_time(u_rec, sd);

    maps_.clear();
    maps_.emplace("threshold", threshold_at(v_prep, pc));
    maps_.emplace("defl_st_v", defl_st_at(v_prep, epi, SignalKind::V, sd));
    maps_.emplace("defl_st_u", defl_st_at(u_prep, epi, SignalKind::U, sd));
    maps_.emplace("defl_t_v", defl_t_at(v_prep, SignalKind::V));
    maps_.emplace("defl_t_u", defl_t_at(u_prep, SignalKind::U));

    for (const std::string& name : method_names()) {
        write_activation_csv((dir / ("at_" + name + ".csv")).string(), maps_.at(name));
        record_output("maps/at_" + name + ".csv");
    }
}

void Pipeline::evaluate_impl() {
    const fs::path dir = fs::path(scenario_dir()) / "maps";
    fs::create_directories(dir);

    if (maps_.empty()) {
        for (const std::string& name : method_names()) {
            const fs::path p = dir / ("at_" + name + ".csv");
            if (!fs::exists(p))
                throw ValidationError("missing artifact '" + p.string() +
                                      "'; run the postprocess stage first");
            maps_.emplace(name, read_activation_csv(p.string()));
        }
    }

    ActivationMap at_ref_fwd;
    if (forward_) {
        at_ref_fwd = forward_->at_ref;
    } else {
        const fs::path p = fs::path(scenario_dir()) / "forward" / "at_ref.csv";
        if (!fs::exists(p))
            throw ValidationError("missing artifact '" + p.string() +
                                  "'; run the simulate stage first");
        at_ref_fwd = read_activation_csv(p.string());
    }

    const CurveMesh& epi =
        transfer_ ? transfer_->epi_curve : InverseMeshes::build(config_.scenario).epi_curve;
    const ActivationMap at_ref =
        interpolate_activation(forward_meshes().epi_curve, epi, at_ref_fwd);
    write_activation_csv((dir / "at_reference.csv").string(), at_ref);
    record_output("maps/at_reference.csv");

    metrics_ = json::object();
    for (const std::string& name : method_names()) {
        const MapErrors e = map_errors(maps_.at(name), at_ref, epi);
        metrics_[name] = {{"l2", e.l2},
                          {"cc", e.cc},
                          {"sc", e.sc},
                          {"excluded_fraction", e.excluded_fraction}};
    }
    write_json_file((fs::path(scenario_dir()) / "metrics.json").string(), metrics_);
    record_output("metrics.json");
}

void Pipeline::run_all() {
    if (!opt_.skip_simulate) simulate();
    reconstruct();
    postprocess();
    evaluate();
    write_manifest();
}

json Pipeline::manifest() const {
    json timings = json::object();
    for (const auto& [stage, seconds] : timings_) timings[stage] = seconds;
    return json{{"scenario", config_.scenario.name},
                {"config_hash", hex64(hash_)},
                {"seed", config_.scenario.rng_seed},
                {"outputs", outputs_},
                {"timings_s", timings},
                {"metrics", metrics_}};
}

void Pipeline::write_manifest() {
    fs::create_directories(scenario_dir());
    write_json_file((fs::path(scenario_dir()) / "manifest.json").string(), manifest());
}

} // namespace ecgi
