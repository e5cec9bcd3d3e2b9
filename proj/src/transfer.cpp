#include "ecgi/transfer.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <Eigen/SparseCholesky>

#include "ecgi/errors.hpp"
#include "ecgi/parallel.hpp"

namespace ecgi {

void AveragedModelParams::validate() const {
    if (sigma_i <= 0.0 || sigma_e <= 0.0 || sigma_t <= 0.0)
        throw ValidationError("averaged model conductivities must be positive");
    if (layer_depth_cm <= 0.0)
        throw ValidationError("averaged model layer depth must be positive");
    if (alpha <= 0.0 || alpha >= 1.0)
        throw ValidationError("alpha must lie in (0,1), got " + std::to_string(alpha));
}

AveragedModelParams AveragedModelParams::from_scenario(const ScenarioConfig& config) {
    return AveragedModelParams{config.sigma_i, config.sigma_e, config.sigma_t,
                               config.geometry.layer_depth_cm, config.alpha};
}

InverseMeshes InverseMeshes::build(const ScenarioConfig& config) {
    config.geometry.validate();
    const GeometryParams& g = config.geometry;
    const std::vector<double> radii = graded_radii(
        g.epi_radius_cm, g.torso_radius_cm, g.inverse_torso_radial_layers, g.torso_grading);
    std::vector<BoundaryTag> tags(radii.size(), BoundaryTag::interior);
    tags.front() = BoundaryTag::epicardial;
    tags.back() = BoundaryTag::body_surface;
    Mesh2D mesh = generate_ring_mesh(radii, g.inverse_angular_nodes, tags);
    CurveMesh epi = extract_tagged_cycle(mesh, BoundaryTag::epicardial);
    CurveMesh body = extract_tagged_cycle(mesh, BoundaryTag::body_surface);
    return InverseMeshes{std::move(mesh), std::move(epi), std::move(body)};
}

namespace {

Eigen::SparseMatrix<double> restriction_matrix(const CurveMesh& curve, int n_parent) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(curve.node_count());
    for (int i = 0; i < curve.node_count(); ++i) {
        const int p = curve.parent_index(i);
        if (p < 0 || p >= n_parent)
            throw GeometryError("boundary curve node " + std::to_string(i) +
                                " does not map into the torso mesh");
        trips.emplace_back(i, p, 1.0);
    }
    Eigen::SparseMatrix<double> P(curve.node_count(), n_parent);
    P.setFromTriplets(trips.begin(), trips.end());
    return P;
}

} // namespace

AveragedSystem assemble_averaged_system(const InverseMeshes& meshes,
                                        const AveragedModelParams& params) {
    params.validate();
    for (int i = 0; i < meshes.epi_curve.node_count(); ++i) {
        const int p = meshes.epi_curve.parent_index(i);
        if ((meshes.mesh.node(p) - meshes.epi_curve.point(i)).norm() > 1e-12)
            throw GeometryError(
                "inverse mesh inner boundary does not coincide with the epicardial curve");
    }
    return AveragedSystem{assemble_mass(meshes.epi_curve),
                          assemble_stiffness(meshes.epi_curve),
                          assemble_stiffness(meshes.mesh),
                          assemble_mass(meshes.body_curve),
                          restriction_matrix(meshes.epi_curve, meshes.mesh.node_count()),
                          restriction_matrix(meshes.body_curve, meshes.mesh.node_count()),
                          params};
}

Eigen::VectorXd AveragedSystem::epicardial_residual(const Eigen::VectorXd& u,
                                                    const Eigen::VectorXd& v,
                                                    const Eigen::VectorXd& u_torso) const {
    const AveragedModelParams& p = params;
    const double robin = p.sigma_e / (p.alpha * p.layer_depth_cm * p.layer_depth_cm);
    return -(p.sigma_i + p.sigma_e) * (stiff_epi.mat * u) - p.sigma_i * (stiff_epi.mat * v) +
           robin * (mass_epi.mat * (epi_restriction * u_torso - u));
}

Eigen::VectorXd AveragedSystem::torso_residual(const Eigen::VectorXd& u,
                                               const Eigen::VectorXd& u_torso) const {
    const AveragedModelParams& p = params;
    const double robin = p.sigma_e / (p.alpha * p.layer_depth_cm);
    return p.sigma_t * (stiff_torso.mat * u_torso) +
           robin * (epi_restriction.transpose() *
                    (mass_epi.mat * (epi_restriction * u_torso - u)));
}

Eigen::VectorXd TransferOperator::predict(const Eigen::VectorXd& u,
                                          const Eigen::VectorXd& v) const {
    const int n = n_epi();
    if (u.size() != n || v.size() != n)
        throw ValidationError("transfer predict: snapshot size mismatch");
    Eigen::VectorXd x(2 * n);
    x << u, v;
    return data_block * x;
}

TransferOperator condense_to_transfer(const AveragedSystem& system,
                                      const InverseMeshes& meshes, int workers) {
    const int n_epi = system.n_epi();
    const int n_torso = system.n_torso();
    const AveragedModelParams& p = system.params;
    const double robin_torso = p.sigma_e / (p.alpha * p.layer_depth_cm);
    const double robin_epi = robin_torso / p.layer_depth_cm;

    // Torso block st K + robin P^T M P. The Robin term removes the pure-Neumann
    // constant mode, so the block is symmetric positive definite as-is; this
    // deliberately preserves S 1 = 1 (a constant epicardial potential passes
    // through to the body surface unchanged).
    Eigen::SparseMatrix<double> torso_block =
        p.sigma_t * system.stiff_torso.mat +
        robin_torso * Eigen::SparseMatrix<double>(system.epi_restriction.transpose() *
                                                  system.mass_epi.mat *
                                                  system.epi_restriction);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> torso_solver;
    torso_solver.compute(torso_block);
    if (torso_solver.info() != Eigen::Success)
        throw NumericsError(
            "torso block factorization failed; the Robin coupling should make it "
            "positive definite without pinning");

    // S: n_torso x n_epi with U_T = S U, one solve per epicardial node. One
    // refinement step keeps the constant-passthrough identity near machine
    // precision. Columns are independent.
    const Eigen::SparseMatrix<double> coupling =
        robin_torso * Eigen::SparseMatrix<double>(system.epi_restriction.transpose() *
                                                  system.mass_epi.mat);
    Eigen::MatrixXd S(n_torso, n_epi);
    parallel_for(n_epi, workers, [&](int j) {
        const Eigen::VectorXd rhs = coupling.col(j);
        Eigen::VectorXd x = torso_solver.solve(rhs);
        x += torso_solver.solve(Eigen::VectorXd(rhs - torso_block * x));
        S.col(j) = x;
    });

    const Eigen::MatrixXd trace_epi = system.epi_restriction * S; // P S, n_epi x n_epi

    Eigen::MatrixXd data = Eigen::MatrixXd::Zero(system.n_body(), 2 * n_epi);
    data.leftCols(n_epi) = system.body_restriction * S;

    Eigen::MatrixXd constraint(n_epi, 2 * n_epi);
    constraint.leftCols(n_epi) =
        -(p.sigma_i + p.sigma_e) * system.stiff_epi.mat +
        robin_epi * (system.mass_epi.mat *
                     (trace_epi - Eigen::MatrixXd::Identity(n_epi, n_epi)));
    constraint.rightCols(n_epi) = -p.sigma_i * Eigen::MatrixXd(system.stiff_epi.mat);

    const double data_norm = data.norm();
    const double constraint_norm = constraint.norm();
    const double weight = constraint_norm > 0.0 ? data_norm / constraint_norm : 1.0;

    // ||si Lap V||^2 discretized as si^2 L^T Mlump^-1 L.
    const Eigen::VectorXd lumped = system.mass_epi.lumped_diagonal();
    Eigen::SparseMatrix<double> inv_lumped(n_epi, n_epi);
    {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(n_epi);
        for (int i = 0; i < n_epi; ++i) {
            if (lumped[i] <= 0.0)
                throw AssemblyError("non-positive lumped curve mass at node " +
                                    std::to_string(i));
            trips.emplace_back(i, i, 1.0 / lumped[i]);
        }
        inv_lumped.setFromTriplets(trips.begin(), trips.end());
    }
    Eigen::SparseMatrix<double> reg = p.sigma_i * p.sigma_i *
                                      Eigen::SparseMatrix<double>(
                                          system.stiff_epi.mat.transpose() * inv_lumped *
                                          system.stiff_epi.mat);

    return TransferOperator{std::move(data),
                            std::move(constraint),
                            weight,
                            system.mass_body,
                            system.mass_epi,
                            std::move(reg),
                            std::move(S),
                            meshes.epi_curve,
                            meshes.body_curve,
                            p};
}

TransferOperator build_transfer_operator(const ScenarioConfig& config, int workers) {
    const InverseMeshes meshes = InverseMeshes::build(config);
    const AveragedSystem system =
        assemble_averaged_system(meshes, AveragedModelParams::from_scenario(config));
    return condense_to_transfer(system, meshes, workers);
}

namespace {

constexpr char kCacheMagic[9] = "ECGITOP1";

void put_bytes(std::ostream& os, const void* data, std::size_t n) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void put_u64(std::ostream& os, std::uint64_t v) { put_bytes(os, &v, sizeof v); }
void put_f64(std::ostream& os, double v) { put_bytes(os, &v, sizeof v); }

void put_matrix(std::ostream& os, const Eigen::MatrixXd& m) {
    put_u64(os, static_cast<std::uint64_t>(m.rows()));
    put_u64(os, static_cast<std::uint64_t>(m.cols()));
    put_bytes(os, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void put_sparse(std::ostream& os, const Eigen::SparseMatrix<double>& m) {
    put_u64(os, static_cast<std::uint64_t>(m.rows()));
    put_u64(os, static_cast<std::uint64_t>(m.cols()));
    std::vector<std::uint64_t> rows, cols;
    std::vector<double> vals;
    for (int k = 0; k < m.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
            rows.push_back(static_cast<std::uint64_t>(it.row()));
            cols.push_back(static_cast<std::uint64_t>(it.col()));
            vals.push_back(it.value());
        }
    }
    put_u64(os, static_cast<std::uint64_t>(vals.size()));
    put_bytes(os, rows.data(), sizeof(std::uint64_t) * rows.size());
    put_bytes(os, cols.data(), sizeof(std::uint64_t) * cols.size());
    put_bytes(os, vals.data(), sizeof(double) * vals.size());
}

void put_curve(std::ostream& os, const CurveMesh& c) {
    put_u64(os, static_cast<std::uint64_t>(c.node_count()));
    put_u64(os, c.closed() ? 1 : 0);
    for (int i = 0; i < c.node_count(); ++i) {
        put_f64(os, c.point(i).x());
        put_f64(os, c.point(i).y());
        put_u64(os, static_cast<std::uint64_t>(c.parent_index(i)));
    }
}

bool get_bytes(std::istream& is, void* data, std::size_t n) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    return static_cast<bool>(is);
}

bool get_u64(std::istream& is, std::uint64_t& v) { return get_bytes(is, &v, sizeof v); }
bool get_f64(std::istream& is, double& v) { return get_bytes(is, &v, sizeof v); }

bool get_matrix(std::istream& is, Eigen::MatrixXd& m) {
    std::uint64_t r = 0, c = 0;
    if (!get_u64(is, r) || !get_u64(is, c)) return false;
    if (r > (1u << 24) || c > (1u << 24)) return false;
    m.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    return get_bytes(is, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

bool get_sparse(std::istream& is, Eigen::SparseMatrix<double>& m) {
    std::uint64_t r = 0, c = 0, nnz = 0;
    if (!get_u64(is, r) || !get_u64(is, c) || !get_u64(is, nnz)) return false;
    if (r > (1u << 24) || c > (1u << 24) || nnz > (1u << 28)) return false;
    std::vector<std::uint64_t> rows(nnz), cols(nnz);
    std::vector<double> vals(nnz);
    if (!get_bytes(is, rows.data(), sizeof(std::uint64_t) * nnz) ||
        !get_bytes(is, cols.data(), sizeof(std::uint64_t) * nnz) ||
        !get_bytes(is, vals.data(), sizeof(double) * nnz))
        return false;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(nnz);
    for (std::uint64_t k = 0; k < nnz; ++k)
        trips.emplace_back(static_cast<int>(rows[k]), static_cast<int>(cols[k]), vals[k]);
    m.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    m.setFromTriplets(trips.begin(), trips.end());
    return true;
}

bool get_curve(std::istream& is, std::optional<CurveMesh>& out) {
    std::uint64_t n = 0, closed = 0;
    if (!get_u64(is, n) || !get_u64(is, closed)) return false;
    if (n < 2 || n > (1u << 24)) return false;
    std::vector<Eigen::Vector2d> pts(n);
    std::vector<int> parents(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        double x = 0, y = 0;
        std::uint64_t p = 0;
        if (!get_f64(is, x) || !get_f64(is, y) || !get_u64(is, p)) return false;
        pts[i] = Eigen::Vector2d(x, y);
        parents[i] = static_cast<int>(p);
    }
    out.emplace(std::move(pts), closed != 0, std::move(parents));
    return true;
}

} // namespace

void write_transfer_cache(const TransferOperator& op, const std::string& path,
                          std::uint64_t key) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("cannot open transfer cache for writing: " + path);
    put_bytes(os, kCacheMagic, 8);
    put_u64(os, key);
    put_matrix(os, op.data_block);
    put_matrix(os, op.constraint_block);
    put_f64(os, op.constraint_weight);
    put_sparse(os, op.mass_body.mat);
    put_sparse(os, op.mass_epi.mat);
    put_sparse(os, op.regularizer);
    put_matrix(os, op.torso_from_epi);
    put_curve(os, op.epi_curve);
    put_curve(os, op.body_curve);
    put_f64(os, op.params.sigma_i);
    put_f64(os, op.params.sigma_e);
    put_f64(os, op.params.sigma_t);
    put_f64(os, op.params.layer_depth_cm);
    put_f64(os, op.params.alpha);
    if (!os) throw ValidationError("failed writing transfer cache: " + path);
}

std::optional<TransferOperator> read_transfer_cache(const std::string& path,
                                                    std::uint64_t key) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return std::nullopt;
    char magic[8];
    if (!get_bytes(is, magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0)
        return std::nullopt;
    std::uint64_t stored_key = 0;
    if (!get_u64(is, stored_key) || stored_key != key) return std::nullopt;

    Eigen::MatrixXd data, constraint, S;
    double weight = 1.0;
    Eigen::SparseMatrix<double> mass_body, mass_epi, reg;
    std::optional<CurveMesh> epi, body;
    AveragedModelParams params;
    if (!get_matrix(is, data) || !get_matrix(is, constraint) || !get_f64(is, weight) ||
        !get_sparse(is, mass_body) || !get_sparse(is, mass_epi) || !get_sparse(is, reg) ||
        !get_matrix(is, S) || !get_curve(is, epi) || !get_curve(is, body) ||
        !get_f64(is, params.sigma_i) || !get_f64(is, params.sigma_e) ||
        !get_f64(is, params.sigma_t) || !get_f64(is, params.layer_depth_cm) ||
        !get_f64(is, params.alpha))
        return std::nullopt;
    return TransferOperator{std::move(data),     std::move(constraint),
                            weight,              SparseOperator{std::move(mass_body)},
                            SparseOperator{std::move(mass_epi)}, std::move(reg),
                            std::move(S),        std::move(*epi),
                            std::move(*body),    params};
}

} // namespace ecgi
