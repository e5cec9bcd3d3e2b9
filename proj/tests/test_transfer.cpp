#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <unistd.h>
#include <numbers>

#include "ecgi/errors.hpp"
#include "ecgi/fem.hpp"
#include "ecgi/propagation.hpp"
#include "ecgi/transfer.hpp"

using namespace ecgi;
namespace {
constexpr double kPi = std::numbers::pi;

ScenarioConfig small_scenario(int n_theta = 64, int n_layers = 6) {
    ScenarioConfig c;
    c.name = "test";
    c.geometry.inverse_angular_nodes = n_theta;
    c.geometry.inverse_torso_radial_layers = n_layers;
    c.geometry.forward_angular_nodes = 96;
    c.geometry.forward_torso_radial_layers = 8;
    c.stimuli.push_back({});
    c.validate();
    return c;
}

double node_angle(const CurveMesh& curve, int i) {
    const Eigen::Vector2d p = curve.point(i);
    return std::atan2(p.y(), p.x());
}
} // namespace

TEST_CASE("condensed torso map and observation blocks pass constants through") {
    const ScenarioConfig c = small_scenario();
    const TransferOperator op = build_transfer_operator(c);
    const int n = op.n_epi();

    // a uniform epicardial potential extends to the same uniform torso
    // potential: S 1 = 1
    const Eigen::VectorXd s1 = op.torso_from_epi * Eigen::VectorXd::Ones(n);
    CHECK((s1.array() - 1.0).abs().maxCoeff() < 1e-12);

    // the epicardial equilibrium residual of a constant (U, V) vanishes
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * n);
    x.head(n).setConstant(3.7);
    x.tail(n).setConstant(-1.3);
    const double cb_scale = op.constraint_block.cwiseAbs().maxCoeff();
    CHECK((op.constraint_block * x).cwiseAbs().maxCoeff() < 1e-12 * cb_scale * 3.7);

    // V never reaches the body surface directly: its columns are zero
    CHECK(op.data_block.rightCols(n).cwiseAbs().maxCoeff() == 0.0);

    // a constant U shifts every body-surface sample by exactly that constant
    const Eigen::VectorXd z =
        op.predict(Eigen::VectorXd::Constant(n, 2.5), Eigen::VectorXd::Zero(n));
    CHECK((z.array() - 2.5).abs().maxCoeff() < 1e-10);
}

TEST_CASE("observation is linear in both fields") {
    const ScenarioConfig c = small_scenario();
    const TransferOperator op = build_transfer_operator(c);
    const int n = op.n_epi();
    Eigen::VectorXd u1(n), u2(n), v1(n), v2(n);
    for (int i = 0; i < n; ++i) {
        const double th = node_angle(op.epi_curve, i);
        u1[i] = std::cos(th);
        u2[i] = std::sin(3.0 * th);
        v1[i] = std::cos(2.0 * th) + 0.5;
        v2[i] = th / kPi;
    }
    const Eigen::VectorXd lhs = op.predict(2.0 * u1 - u2, 0.5 * v1 + 3.0 * v2);
    const Eigen::VectorXd rhs =
        2.0 * op.predict(u1, v1 * 0.0) - op.predict(u2, v2 * 0.0) +
        op.predict(u1 * 0.0, 0.5 * v1) + op.predict(u2 * 0.0, 3.0 * v2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-11 * rhs.cwiseAbs().maxCoeff());
}

TEST_CASE("assembled equilibrium equations match a closed-form solution pair") {
    // Manufactured fields on the annulus a <= r <= R with zero-flux outer rim:
    //   torso potential  U_T = (r + R^2/r) cos(theta)   (harmonic, no outer flux)
    //   epicardial U = beta cos(theta), V = gamma cos(theta)
    // where the interface and surface equations fix
    //   beta  = (a + R^2/a) - (st alpha h / se)(1 - R^2/a^2)
    //   gamma = -[(si+se) beta - a^2 (st/h)(1 - R^2/a^2)] / si.
    // Both discrete residuals must shrink as the mesh refines.
    auto residuals = [](int n_theta, int n_layers) {
        const ScenarioConfig c = small_scenario(n_theta, n_layers);
        const InverseMeshes meshes = InverseMeshes::build(c);
        const AveragedModelParams p = AveragedModelParams::from_scenario(c);
        const AveragedSystem sys = assemble_averaged_system(meshes, p);

        const double a = c.geometry.epi_radius_cm, big_r = c.geometry.torso_radius_cm;
        const double h = p.layer_depth_cm;
        const double ring = 1.0 - big_r * big_r / (a * a);
        const double beta = (a + big_r * big_r / a) -
                            (p.sigma_t * p.alpha * h / p.sigma_e) * ring;
        const double gamma =
            -((p.sigma_i + p.sigma_e) * beta - a * a * (p.sigma_t / h) * ring) /
            p.sigma_i;

        Eigen::VectorXd u(sys.n_epi()), v(sys.n_epi()), ut(sys.n_torso());
        for (int i = 0; i < sys.n_epi(); ++i) {
            const double th = node_angle(meshes.epi_curve, i);
            u[i] = beta * std::cos(th);
            v[i] = gamma * std::cos(th);
        }
        for (int i = 0; i < sys.n_torso(); ++i) {
            const Eigen::Vector2d pt = meshes.mesh.node(i);
            const double r = pt.norm();
            ut[i] = (r + big_r * big_r / r) * (pt.x() / r);
        }

        const Eigen::VectorXd r1 = sys.epicardial_residual(u, v, ut);
        const Eigen::VectorXd r2 = sys.torso_residual(u, ut);
        // normalize by the magnitude of the individual terms so the decay
        // reflects genuine cancellation, not entry scaling
        const double s1 = (p.sigma_i + p.sigma_e) *
                          (sys.stiff_epi.apply(u)).norm();
        const double s2 = p.sigma_t * (sys.stiff_torso.apply(ut)).norm();
        return std::array<double, 2>{r1.norm() / s1, r2.norm() / s2};
    };

    const auto coarse = residuals(64, 6);
    const auto fine = residuals(128, 12);
    CHECK(coarse[0] < 0.2);
    CHECK(coarse[1] < 0.2);
    CHECK(fine[0] < 0.6 * coarse[0]);
    CHECK(fine[1] < 0.6 * coarse[1]);
}

TEST_CASE("tightening the coupling layer pulls the torso trace onto U") {
    // The interface coefficient scales like 1/(alpha h): smaller alpha means
    // the surface potential follows the epicardial one more closely.
    auto trace_gap = [](double alpha) {
        ScenarioConfig c = small_scenario();
        c.alpha = alpha;
        c.validate();
        const TransferOperator op = build_transfer_operator(c);
        const int n = op.n_epi();
        Eigen::VectorXd u(n);
        for (int i = 0; i < n; ++i) u[i] = std::cos(node_angle(op.epi_curve, i));
        Eigen::VectorXd ut_on_epi(n);
        const Eigen::VectorXd ut = op.torso_from_epi * u;
        for (int i = 0; i < n; ++i)
            ut_on_epi[i] = ut[op.epi_curve.parent_index(i)];
        return (ut_on_epi - u).norm() / u.norm();
    };
    const double loose = trace_gap(0.9);
    const double tight = trace_gap(0.05);
    CHECK(tight < loose);
    CHECK(tight < 0.2);
}

TEST_CASE("constraint rows are weighted by the data/constraint norm ratio") {
    const ScenarioConfig c = small_scenario();
    const TransferOperator op = build_transfer_operator(c);
    CHECK(op.constraint_weight ==
          doctest::Approx(op.data_block.norm() / op.constraint_block.norm())
              .epsilon(1e-12));
    CHECK(op.constraint_weight > 0.0);
}

TEST_CASE("curvature penalty is symmetric positive semidefinite with constants in its kernel") {
    const ScenarioConfig c = small_scenario();
    const TransferOperator op = build_transfer_operator(c);
    const int n = op.n_epi();
    const Eigen::MatrixXd r = Eigen::MatrixXd(op.regularizer);
    CHECK((r - r.transpose()).cwiseAbs().maxCoeff() < 1e-12 * r.cwiseAbs().maxCoeff());

    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    CHECK((r * ones).cwiseAbs().maxCoeff() < 1e-10 * r.cwiseAbs().maxCoeff());

    Eigen::VectorXd wave(n);
    for (int i = 0; i < n; ++i) wave[i] = std::cos(2.0 * node_angle(op.epi_curve, i));
    CHECK(wave.dot(r * wave) > 0.0);
    // randomized probes stay nonnegative
    std::srand(7);
    for (int k = 0; k < 10; ++k) {
        const Eigen::VectorXd x = Eigen::VectorXd::Random(n);
        CHECK(x.dot(r * x) > -1e-10 * r.cwiseAbs().maxCoeff() * x.squaredNorm());
    }
}

TEST_CASE("operator cache round trip is bit exact and key checked") {
    const ScenarioConfig c = small_scenario();
    const TransferOperator op = build_transfer_operator(c);
    const std::string path = "/tmp/ecgi_test_transfer_cache.bin";
    const std::uint64_t key = 0x1234abcd5678ef01ull;
    write_transfer_cache(op, path, key);

    const auto back = read_transfer_cache(path, key);
    REQUIRE(back.has_value());
    CHECK((back->data_block - op.data_block).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back->constraint_block - op.constraint_block).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back->constraint_weight == op.constraint_weight);
    CHECK((Eigen::MatrixXd(back->regularizer) - Eigen::MatrixXd(op.regularizer))
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((back->torso_from_epi - op.torso_from_epi).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back->epi_curve.node_count() == op.epi_curve.node_count());
    CHECK(back->params.alpha == op.params.alpha);

    CHECK_FALSE(read_transfer_cache(path, key + 1).has_value());
    CHECK_FALSE(read_transfer_cache("/tmp/ecgi_no_such_cache.bin", key).has_value());

    // truncated file is rejected, not misread
    {
        std::FILE* f = std::fopen(path.c_str(), "rb+");
        REQUIRE(f);
        std::fseek(f, 0, SEEK_END);
        const long size = std::ftell(f);
        REQUIRE(std::fclose(f) == 0);
        REQUIRE(truncate(path.c_str(), size / 2) == 0);
    }
    CHECK_FALSE(read_transfer_cache(path, key).has_value());
    std::remove(path.c_str());
}

TEST_CASE("surface potentials predicted from simulated epicardial fields track the simulation") {
    // Cross-check between the two independent forward paths: the full
    // volume-conductor simulation and the condensed surface model. They use
    // different physics approximations, so expect strong correlation rather
    // than equality.
    ScenarioConfig c = small_scenario();
    c.t_end_ms = 60.0;
    c.validate();
    const ForwardResult fwd = run_forward(c);
    const TransferOperator op = build_transfer_operator(c);
    const ForwardMeshes fmesh = ForwardMeshes::build(c);

    // mid-depolarization snapshot: half the epicardium is active
    int k_mid = -1;
    for (int k = 0; k < fwd.v_epi.sample_count(); ++k) {
        const double mean = fwd.v_epi.values.col(k).mean();
        if (mean > 0.45 && mean < 0.75) {
            k_mid = k;
            break;
        }
    }
    REQUIRE(k_mid >= 0);

    const Eigen::VectorXd u = interpolate(fmesh.epi_curve, op.epi_curve,
                                          fwd.u_epi.snapshot(k_mid));
    const Eigen::VectorXd v = interpolate(fmesh.epi_curve, op.epi_curve,
                                          fwd.v_epi.snapshot(k_mid));
    const Eigen::VectorXd z_sim = interpolate(fmesh.body_curve, op.body_curve,
                                              fwd.z_body.snapshot(k_mid));
    const Eigen::VectorXd z_avg = op.predict(u, v);

    const Eigen::VectorXd a = z_sim.array() - z_sim.mean();
    const Eigen::VectorXd b = z_avg.array() - z_avg.mean();
    const double cc = a.dot(b) / (a.norm() * b.norm());
    CHECK(cc > 0.9);
}

TEST_CASE("assembly rejects curves that do not lie on the mesh") {
    const ScenarioConfig c = small_scenario();
    InverseMeshes meshes = InverseMeshes::build(c);
    const AveragedModelParams p = AveragedModelParams::from_scenario(c);
    // shift the epicardial curve off its parent nodes
    std::vector<Eigen::Vector2d> pts;
    std::vector<int> parents;
    for (int i = 0; i < meshes.epi_curve.node_count(); ++i) {
        pts.push_back(meshes.epi_curve.point(i) + Eigen::Vector2d(1e-3, 0.0));
        parents.push_back(meshes.epi_curve.parent_index(i));
    }
    const InverseMeshes broken{meshes.mesh, CurveMesh(pts, true, parents),
                               meshes.body_curve};
    CHECK_THROWS_AS(assemble_averaged_system(broken, p), GeometryError);
}
