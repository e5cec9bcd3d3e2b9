#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include <CLI11.hpp>

#include "ecgi/inverse_solver.hpp"
#include "ecgi/parallel.hpp"
#include "ecgi/propagation.hpp"
#include "ecgi/transfer.hpp"

namespace {

double time_call(const std::function<void()>& f) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

void print_row(const std::string& name, double serial_s, double parallel_s,
               double max_diff) {
    std::printf("%-22s %10.3f %12.3f %9.2fx %12.3e\n", name.c_str(), serial_s,
                parallel_s, parallel_s > 0.0 ? serial_s / parallel_s : 0.0, max_diff);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compare the OpenMP kernels against the serial reference path "
                 "and report timings plus the largest output difference"};
    int workers = 0;
    bool quick = false;
    app.add_option("--workers", workers, "parallel worker count (0 = all hardware)");
    app.add_flag("--quick", quick, "small problem sizes for smoke runs");
    CLI11_PARSE(app, argc, argv);

    ecgi::ScenarioConfig config;
    config.name = "bench";
    config.geometry.forward_angular_nodes = quick ? 96 : 256;
    config.geometry.inverse_angular_nodes = quick ? 64 : 192;
    config.geometry.forward_torso_radial_layers = quick ? 10 : 20;
    config.geometry.inverse_torso_radial_layers = quick ? 8 : 16;
    config.t_end_ms = quick ? 30.0 : 80.0;
    config.stimuli.push_back({});
    config.validate();

    const int par = ecgi::resolve_workers(workers);
    std::printf("serial reference vs %d workers\n", par);
    std::printf("%-22s %10s %12s %9s %12s\n", "kernel", "serial [s]", "parallel [s]",
                "speedup", "max |diff|");

    const ecgi::ForwardMeshes meshes = ecgi::ForwardMeshes::build(config);
    ecgi::ForwardResult fwd_serial, fwd_parallel;
    double t_fs = time_call([&] { fwd_serial = ecgi::run_forward(config, meshes, 1); });
    double t_fp =
        time_call([&] { fwd_parallel = ecgi::run_forward(config, meshes, par); });
    double d_f = (fwd_serial.z_body.values - fwd_parallel.z_body.values)
                     .cwiseAbs()
                     .maxCoeff();
    d_f = std::max(
        d_f,
        (fwd_serial.u_epi.values - fwd_parallel.u_epi.values).cwiseAbs().maxCoeff());
    print_row("forward solves", t_fs, t_fp, d_f);

    const ecgi::InverseMeshes inv_meshes = ecgi::InverseMeshes::build(config);
    const ecgi::AveragedSystem system = ecgi::assemble_averaged_system(
        inv_meshes, ecgi::AveragedModelParams::from_scenario(config));
    auto c0 = std::chrono::steady_clock::now();
    const ecgi::TransferOperator op_serial =
        ecgi::condense_to_transfer(system, inv_meshes, 1);
    auto c1 = std::chrono::steady_clock::now();
    const ecgi::TransferOperator op_parallel =
        ecgi::condense_to_transfer(system, inv_meshes, par);
    auto c2 = std::chrono::steady_clock::now();
    double t_cs = std::chrono::duration<double>(c1 - c0).count();
    double t_cp = std::chrono::duration<double>(c2 - c1).count();
    double d_c =
        (op_serial.data_block - op_parallel.data_block).cwiseAbs().maxCoeff();
    d_c = std::max(d_c, (op_serial.constraint_block - op_parallel.constraint_block)
                            .cwiseAbs()
                            .maxCoeff());
    print_row("transfer condensation", t_cs, t_cp, d_c);

    const int n_epi = op_serial.n_epi();
    const int n_steps = quick ? 40 : 120;
    ecgi::TimeSeriesField z(Eigen::MatrixXd::Zero(op_serial.n_body(), n_steps), 1.0);
    for (int k = 0; k < n_steps; ++k) {
        Eigen::VectorXd u(n_epi), v(n_epi);
        for (int i = 0; i < n_epi; ++i) {
            const Eigen::Vector2d p = op_serial.epi_curve.point(i);
            const double theta = std::atan2(p.y(), p.x());
            u[i] = std::cos(theta + 0.05 * k);
            v[i] = std::sin(2.0 * theta - 0.03 * k);
        }
        z.values.col(k) = op_serial.predict(u, v);
    }
    ecgi::ReconstructionResult rec_serial, rec_parallel;
    double t_rs = time_call(
        [&] { rec_serial = ecgi::reconstruct_series(op_serial, z, {}, 1); });
    double t_rp = time_call(
        [&] { rec_parallel = ecgi::reconstruct_series(op_serial, z, {}, par); });
    double d_r =
        (rec_serial.u_rec.values - rec_parallel.u_rec.values).cwiseAbs().maxCoeff();
    d_r = std::max(
        d_r,
        (rec_serial.v_rec.values - rec_parallel.v_rec.values).cwiseAbs().maxCoeff());
    print_row("series reconstruction", t_rs, t_rp, d_r);

    double worst = std::max({d_f, d_c, d_r});
    std::printf("largest serial/parallel difference: %.3e %s\n", worst,
                worst == 0.0 ? "(bitwise identical)" : "");
    return worst == 0.0 ? 0 : 4;
}
