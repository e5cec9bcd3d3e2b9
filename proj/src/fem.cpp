#include "ecgi/fem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ecgi {

namespace {

using Triplet = Eigen::Triplet<double>;

void check_coeff(const std::vector<double>& coeff, int n_elems, const char* what) {
    if (static_cast<int>(coeff.size()) != n_elems)
        throw AssemblyError(std::string(what) + ": coefficient count " +
                            std::to_string(coeff.size()) + " does not match element count " +
                            std::to_string(n_elems));
    for (int e = 0; e < n_elems; ++e)
        if (!(coeff[e] > 0.0))
            throw AssemblyError(std::string(what) + ": coefficient for element " +
                                std::to_string(e) + " must be positive, got " +
                                std::to_string(coeff[e]));
}

} // namespace

double SparseOperator::entry_sum() const {
    double s = 0.0;
    for (int k = 0; k < mat.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(mat, k); it; ++it)
            s += it.value();
    return s;
}

SparseOperator assemble_mass(const Mesh2D& mesh) {
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(mesh.triangle_count()) * 9);
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        const auto& t = mesh.triangle(e);
        const double a12 = mesh.area(e) / 12.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trips.emplace_back(t[i], t[j], (i == j ? 2.0 : 1.0) * a12);
    }
    SparseOperator op;
    op.mat.resize(mesh.node_count(), mesh.node_count());
    op.mat.setFromTriplets(trips.begin(), trips.end());
    return op;
}

SparseOperator assemble_mass(const CurveMesh& curve) {
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(curve.segment_count()) * 4);
    for (int s = 0; s < curve.segment_count(); ++s) {
        const auto [i, j] = curve.segment(s);
        const double l6 = curve.segment_length(s) / 6.0;
        trips.emplace_back(i, i, 2.0 * l6);
        trips.emplace_back(j, j, 2.0 * l6);
        trips.emplace_back(i, j, l6);
        trips.emplace_back(j, i, l6);
    }
    SparseOperator op;
    op.mat.resize(curve.node_count(), curve.node_count());
    op.mat.setFromTriplets(trips.begin(), trips.end());
    return op;
}

SparseOperator assemble_stiffness(const Mesh2D& mesh, const std::vector<double>& coeff) {
    check_coeff(coeff, mesh.triangle_count(), "mesh stiffness");
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(mesh.triangle_count()) * 9);
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        const auto& t = mesh.triangle(e);
        const auto& g = mesh.basis_gradients(e);
        const double w = coeff[e] * mesh.area(e);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                trips.emplace_back(t[i], t[j], w * g[i].dot(g[j]));
    }
    SparseOperator op;
    op.mat.resize(mesh.node_count(), mesh.node_count());
    op.mat.setFromTriplets(trips.begin(), trips.end());
    return op;
}

SparseOperator assemble_stiffness(const Mesh2D& mesh, double coeff) {
    return assemble_stiffness(mesh, std::vector<double>(mesh.triangle_count(), coeff));
}

SparseOperator assemble_stiffness(const CurveMesh& curve, const std::vector<double>& coeff) {
    check_coeff(coeff, curve.segment_count(), "curve stiffness");
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(curve.segment_count()) * 4);
    for (int s = 0; s < curve.segment_count(); ++s) {
        const auto [i, j] = curve.segment(s);
        const double w = coeff[s] / curve.segment_length(s);
        trips.emplace_back(i, i, w);
        trips.emplace_back(j, j, w);
        trips.emplace_back(i, j, -w);
        trips.emplace_back(j, i, -w);
    }
    SparseOperator op;
    op.mat.resize(curve.node_count(), curve.node_count());
    op.mat.setFromTriplets(trips.begin(), trips.end());
    return op;
}

SparseOperator assemble_stiffness(const CurveMesh& curve, double coeff) {
    return assemble_stiffness(curve, std::vector<double>(curve.segment_count(), coeff));
}

std::vector<Eigen::Vector2d> element_gradient(const Mesh2D& mesh, const NodalField& field) {
    if (field.size() != mesh.node_count())
        throw ValidationError("field size does not match mesh node count");
    std::vector<Eigen::Vector2d> grads(mesh.triangle_count());
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        const auto& t = mesh.triangle(e);
        const auto& g = mesh.basis_gradients(e);
        grads[e] = field[t[0]] * g[0] + field[t[1]] * g[1] + field[t[2]] * g[2];
    }
    return grads;
}

Eigen::VectorXd element_gradient(const CurveMesh& curve, const NodalField& field) {
    if (field.size() != curve.node_count())
        throw ValidationError("field size does not match curve node count");
    Eigen::VectorXd grads(curve.segment_count());
    for (int s = 0; s < curve.segment_count(); ++s) {
        const auto [i, j] = curve.segment(s);
        grads[s] = (field[j] - field[i]) / curve.segment_length(s);
    }
    return grads;
}

NodalField interpolate(const Mesh2D& src, const Mesh2D& dst, const NodalField& field,
                       double tolerance) {
    if (field.size() != src.node_count())
        throw ValidationError("field size does not match source mesh node count");
    NodalField out(dst.node_count());
    for (int i = 0; i < dst.node_count(); ++i) {
        const Eigen::Vector2d p = dst.node(i);
        int best_e = -1;
        double best_violation = std::numeric_limits<double>::max();
        Eigen::Vector3d best_bary;
        for (int e = 0; e < src.triangle_count(); ++e) {
            const auto& t = src.triangle(e);
            const auto& g = src.basis_gradients(e);
            Eigen::Vector3d bary;
            double viol = -std::numeric_limits<double>::max();
            for (int k = 0; k < 3; ++k) {
                bary[k] = 1.0 + g[k].dot(p - src.node(t[k]));
                // -bary[k] / |grad lambda_k| is the distance past edge k
                viol = std::max(viol, -bary[k] / g[k].norm());
            }
            if (viol < best_violation) {
                best_violation = viol;
                best_e = e;
                best_bary = bary;
            }
            if (viol <= 0.0) break;
        }
        if (best_e < 0 || best_violation > tolerance)
            throw GeometryError("destination node " + std::to_string(i) +
                                " lies outside the source mesh (distance ~" +
                                std::to_string(std::max(0.0, best_violation)) + " cm)");
        const auto& t = src.triangle(best_e);
        out[i] = best_bary[0] * field[t[0]] + best_bary[1] * field[t[1]] +
                 best_bary[2] * field[t[2]];
    }
    return out;
}

std::vector<double> project_onto_curve(const CurveMesh& src, const CurveMesh& dst,
                                       double tolerance) {
    if (tolerance < 0.0) {
        tolerance = 0.0;
        for (int s = 0; s < src.segment_count(); ++s)
            tolerance = std::max(tolerance, src.segment_length(s));
    }
    std::vector<double> arcs(dst.node_count());
    for (int i = 0; i < dst.node_count(); ++i) {
        const Eigen::Vector2d p = dst.point(i);
        double best_d2 = std::numeric_limits<double>::max();
        double best_arc = 0.0;
        for (int s = 0; s < src.segment_count(); ++s) {
            const auto [a, b] = src.segment(s);
            const Eigen::Vector2d pa = src.point(a);
            const Eigen::Vector2d ab = src.point(b) - pa;
            const double len = src.segment_length(s);
            double t = ab.dot(p - pa) / (len * len);
            t = std::clamp(t, 0.0, 1.0);
            const double d2 = (pa + t * ab - p).squaredNorm();
            if (d2 < best_d2) {
                best_d2 = d2;
                best_arc = src.arc_coordinate(a) + t * len;
            }
        }
        if (std::sqrt(best_d2) > tolerance)
            throw GeometryError("destination curve node " + std::to_string(i) +
                                " is " + std::to_string(std::sqrt(best_d2)) +
                                " cm from the source curve (tolerance " +
                                std::to_string(tolerance) + ")");
        arcs[i] = best_arc;
    }
    return arcs;
}

double curve_value_at(const CurveMesh& curve, const NodalField& values, double arc) {
    if (values.size() != curve.node_count())
        throw ValidationError("field size does not match curve node count");
    const double total = curve.total_length();
    if (curve.closed()) {
        arc = std::fmod(arc, total);
        if (arc < 0.0) arc += total;
    } else {
        arc = std::clamp(arc, 0.0, total);
    }
    for (int s = 0; s < curve.segment_count(); ++s) {
        const auto [i, j] = curve.segment(s);
        const double a0 = curve.arc_coordinate(i);
        const double len = curve.segment_length(s);
        if (arc <= a0 + len || s == curve.segment_count() - 1) {
            const double t = std::clamp((arc - a0) / len, 0.0, 1.0);
            return (1.0 - t) * values[i] + t * values[j];
        }
    }
    return values[curve.node_count() - 1];
}

NodalField interpolate(const CurveMesh& src, const CurveMesh& dst, const NodalField& field,
                       double tolerance) {
    const auto arcs = project_onto_curve(src, dst, tolerance);
    NodalField out(dst.node_count());
    for (int i = 0; i < dst.node_count(); ++i) out[i] = curve_value_at(src, field, arcs[i]);
    return out;
}

} // namespace ecgi
