#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/SparseCholesky>

#include "ecgi/errors.hpp"
#include "ecgi/fem.hpp"
#include "ecgi/inverse_solver.hpp"
#include "ecgi/transfer.hpp"

using namespace ecgi;
namespace {
constexpr double kPi = std::numbers::pi;

ScenarioConfig small_scenario() {
    ScenarioConfig c;
    c.name = "test";
    c.geometry.inverse_angular_nodes = 64;
    c.geometry.inverse_torso_radial_layers = 6;
    c.geometry.forward_angular_nodes = 96;
    c.geometry.forward_torso_radial_layers = 8;
    c.stimuli.push_back({});
    c.validate();
    return c;
}

const TransferOperator& shared_operator() {
    static const TransferOperator op = build_transfer_operator(small_scenario());
    return op;
}

double angle(const CurveMesh& curve, int i) {
    const Eigen::Vector2d p = curve.point(i);
    return std::atan2(p.y(), p.x());
}

/// Smooth (U, V) pair satisfying the epicardial equilibrium exactly: choose a
/// smooth U, correct it along cos(2 theta) until the equation's solvability
/// condition (right side orthogonal to constants) holds, then solve the
/// pinned curve Laplacian for V.
struct ExactPair {
    Eigen::VectorXd u, v;
};
ExactPair equilibrium_pair(const TransferOperator& op) {
    const int n = op.n_epi();
    const AveragedModelParams& p = op.params;
    const double robin =
        p.sigma_e / (p.alpha * p.layer_depth_cm * p.layer_depth_cm);

    const SparseOperator mass = assemble_mass(op.epi_curve);
    const SparseOperator lap = assemble_stiffness(op.epi_curve, 1.0);
    Eigen::MatrixXd trace(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            trace(i, j) = op.torso_from_epi(op.epi_curve.parent_index(i), j);

    Eigen::VectorXd u0(n), d(n);
    for (int i = 0; i < n; ++i) {
        const double th = angle(op.epi_curve, i);
        u0[i] = std::cos(th) + 0.3 * std::sin(2.0 * th);
        d[i] = std::cos(2.0 * th);
    }
    const Eigen::VectorXd lumped = mass.lumped_diagonal();
    auto g = [&](const Eigen::VectorXd& x) {
        return lumped.dot(trace * x - x);
    };
    const Eigen::VectorXd u = u0 - (g(u0) / g(d)) * d;

    // si L v = -(si+se) L u + robin M (trace - I) u, pinned at node 0
    const Eigen::VectorXd rhs = -(p.sigma_i + p.sigma_e) * (lap.mat * u) +
                                robin * (mass.mat * (trace * u - u));
    Eigen::SparseMatrix<double> pinned = p.sigma_i * lap.mat;
    for (int k = 0; k < pinned.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(pinned, k); it; ++it)
            if (it.row() == 0 || it.col() == 0)
                it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
    Eigen::VectorXd b = rhs;
    b[0] = 0.0;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(pinned);
    REQUIRE(solver.info() == Eigen::Success);
    Eigen::VectorXd v = solver.solve(b);
    v += solver.solve(Eigen::VectorXd(b - pinned * v)); // one refinement pass
    return {u, v};
}
} // namespace

TEST_CASE("zero measurements reconstruct to zero") {
    const TransferOperator& op = shared_operator();
    const InverseSnapshot s = solve_timestep(op, Eigen::VectorXd::Zero(op.n_body()));
    CHECK(s.u.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.v.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(s.data_misfit < 1e-12);
}

TEST_CASE("noise-free data from an equilibrium pair is recovered almost exactly") {
    const TransferOperator& op = shared_operator();
    const ExactPair exact = equilibrium_pair(op);

    // the pair satisfies the equilibrium rows to solver precision
    Eigen::VectorXd x(2 * op.n_epi());
    x << exact.u, exact.v;
    const double c_res = (op.constraint_block * x).norm();
    CHECK(c_res < 1e-9 * op.constraint_block.norm() * x.norm());

    const Eigen::VectorXd z = op.predict(exact.u, exact.v);
    InverseConfig cfg;
    cfg.epsilon = 1e-6;
    const InverseSnapshot s = solve_timestep(op, z, cfg);

    const Eigen::VectorXd du = s.u - exact.u;
    CHECK(du.norm() < 1e-2 * exact.u.norm());

    // V is observable only up to an additive constant
    auto centered = [](const Eigen::VectorXd& w) {
        return Eigen::VectorXd(w.array() - w.mean());
    };
    const Eigen::VectorXd dv = centered(s.v) - centered(exact.v);
    CHECK(dv.norm() < 1e-2 * centered(exact.v).norm());
    CHECK(s.data_misfit < 1e-6 * z.norm());
}

TEST_CASE("normal-equation residuals stay at the refinement floor") {
    const TransferOperator& op = shared_operator();
    const int n = op.n_body();
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i)
        z[i] = std::sin(3.0 * angle(op.body_curve, i)) + 0.2 * std::cos(7.0 * i);
    for (double eps : {1e-6, 1e-2, 1.0, 1e3}) {
        InverseConfig cfg;
        cfg.epsilon = eps;
        const InverseSnapshot s = solve_timestep(op, z, cfg);
        CHECK(s.normal_residual_rel <= 1e-10);
    }
}

TEST_CASE("a uniform measurement shift moves U by that constant and leaves V alone") {
    const TransferOperator& op = shared_operator();
    const int n = op.n_body();
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z[i] = std::cos(2.0 * angle(op.body_curve, i));

    const InverseSnapshot a = solve_timestep(op, z);
    const InverseSnapshot b =
        solve_timestep(op, Eigen::VectorXd(z.array() + 5.0));
    CHECK(((b.u - a.u).array() - 5.0).abs().maxCoeff() < 1e-6);
    CHECK((b.v - a.v).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("reconstruction is linear in the data") {
    const TransferOperator& op = shared_operator();
    const int n = op.n_body();
    Eigen::VectorXd z1(n), z2(n);
    for (int i = 0; i < n; ++i) {
        z1[i] = std::cos(angle(op.body_curve, i));
        z2[i] = std::sin(4.0 * angle(op.body_curve, i));
    }
    const InverseSnapshot a = solve_timestep(op, z1);
    const InverseSnapshot b = solve_timestep(op, z2);
    const InverseSnapshot c = solve_timestep(op, Eigen::VectorXd(2.0 * z1 - 0.5 * z2));
    const double scale = a.u.norm() + b.u.norm() + 1.0;
    CHECK((c.u - (2.0 * a.u - 0.5 * b.u)).norm() < 1e-8 * scale);
    CHECK((c.v - (2.0 * a.v - 0.5 * b.v)).norm() < 1e-8 * scale);
}

TEST_CASE("raising the smoothing weight trades fit for flatter V") {
    const TransferOperator& op = shared_operator();
    const int n = op.n_body();
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i)
        z[i] = std::cos(3.0 * angle(op.body_curve, i)) + 0.1 * std::sin(9.0 * i);

    const SparseOperator mass_c = assemble_mass(op.epi_curve);
    auto fit_and_penalty = [&](double eps) {
        InverseConfig cfg;
        cfg.epsilon = eps;
        const InverseSnapshot s = solve_timestep(op, z, cfg);
        Eigen::VectorXd x(2 * op.n_epi());
        x << s.u, s.v;
        const Eigen::VectorXd c = op.constraint_block * x;
        const double w = op.constraint_weight;
        const Eigen::VectorXd dz = op.predict(s.u, s.v) - z;
        const double fit = op.mass_body.quadratic_form(dz) +
                           w * w * c.dot(mass_c.mat * c);
        const double smooth = s.v.dot(op.regularizer * s.v);
        return std::array<double, 2>{fit, smooth};
    };

    double prev_fit = -1.0, prev_smooth = 1e300;
    for (double eps : {1e-6, 1e-3, 1.0, 1e3, 1e6}) {
        const auto [fit, smooth] = fit_and_penalty(eps);
        CHECK(fit >= prev_fit - 1e-12 * (1.0 + std::abs(prev_fit)));
        CHECK(smooth <= prev_smooth + 1e-12 * (1.0 + prev_smooth));
        prev_fit = fit;
        prev_smooth = smooth;
    }

    // in the stiff limit the reconstructed V collapses to a constant
    InverseConfig stiff;
    stiff.epsilon = 1e9;
    const InverseSnapshot s = solve_timestep(op, z, stiff);
    const double v_spread = s.v.maxCoeff() - s.v.minCoeff();
    const double u_spread = s.u.maxCoeff() - s.u.minCoeff();
    CHECK(v_spread < 1e-3 * (u_spread + 1e-300));
}

TEST_CASE("series reconstruction repeats identical snapshots identically") {
    const TransferOperator& op = shared_operator();
    const int n = op.n_body();
    Eigen::VectorXd z0(n);
    for (int i = 0; i < n; ++i) z0[i] = std::sin(2.0 * angle(op.body_curve, i));
    Eigen::MatrixXd z(n, 5);
    z.colwise() = z0;

    const ReconstructionResult r = reconstruct_series(op, TimeSeriesField(z, 1.0));
    REQUIRE(r.u_rec.sample_count() == 5);
    for (int k = 1; k < 5; ++k) {
        CHECK((r.u_rec.values.col(k) - r.u_rec.values.col(0)).cwiseAbs().maxCoeff() ==
              0.0);
        CHECK((r.v_rec.values.col(k) - r.v_rec.values.col(0)).cwiseAbs().maxCoeff() ==
              0.0);
    }
    CHECK(r.u_rec.dt_ms == 1.0);
    // per-step diagnostics are populated
    CHECK(r.data_misfit.size() == 5);
    CHECK(r.normal_residual_rel.maxCoeff() <= 1e-10);

    // a single snapshot solved standalone matches the series columns exactly
    const InverseSnapshot one = solve_timestep(op, z0);
    CHECK((one.u - r.u_rec.values.col(0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((one.v - r.v_rec.values.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inverse settings are validated") {
    InverseConfig bad;
    bad.epsilon = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = InverseConfig{};
    bad.ridge_rel = -1e-3;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = InverseConfig{};
    bad.constraint_weight = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);

    const TransferOperator& op = shared_operator();
    CHECK_THROWS_AS(solve_timestep(op, Eigen::VectorXd::Zero(op.n_body() + 1)),
                    ValidationError);
}
