#ifndef ECGI_FEM_HPP
#define ECGI_FEM_HPP

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ecgi/fields.hpp"
#include "ecgi/mesh.hpp"

namespace ecgi {

/// Sparse symmetric operator assembled from a bilinear form.
struct SparseOperator {
    Eigen::SparseMatrix<double> mat;

    int rows() const { return static_cast<int>(mat.rows()); }
    int cols() const { return static_cast<int>(mat.cols()); }

    NodalField apply(const NodalField& x) const { return mat * x; }
    double quadratic_form(const NodalField& x) const { return x.dot(mat * x); }
    /// Sum of all entries; for mass operators this is the domain measure.
    double entry_sum() const;
    Eigen::VectorXd lumped_diagonal() const { return mat * Eigen::VectorXd::Ones(mat.cols()); }
};

// Consistent P1 mass operators.
SparseOperator assemble_mass(const Mesh2D& mesh);
SparseOperator assemble_mass(const CurveMesh& curve);

// P1 stiffness (weak Laplace / Laplace-Beltrami) with a strictly positive
// coefficient per element (mS/cm). Scalar overloads use a uniform coefficient.
SparseOperator assemble_stiffness(const Mesh2D& mesh, const std::vector<double>& coeff);
SparseOperator assemble_stiffness(const Mesh2D& mesh, double coeff = 1.0);
SparseOperator assemble_stiffness(const CurveMesh& curve, const std::vector<double>& coeff);
SparseOperator assemble_stiffness(const CurveMesh& curve, double coeff = 1.0);

/// Exact gradient of the P1 interpolant, constant per triangle.
std::vector<Eigen::Vector2d> element_gradient(const Mesh2D& mesh, const NodalField& field);
/// Tangential derivative per segment, signed along the curve orientation.
Eigen::VectorXd element_gradient(const CurveMesh& curve, const NodalField& field);

/// P1 interpolation between triangulations. Destination nodes are located by
/// brute-force barycentric search; nodes farther than `tolerance` (cm) outside
/// every triangle raise a GeometryError naming the node.
NodalField interpolate(const Mesh2D& src, const Mesh2D& dst, const NodalField& field,
                       double tolerance = 1e-9);

/// Arc-length parameterized linear interpolation between closed curves: each
/// destination node is projected onto the source polyline and the field is
/// evaluated at the projected arc coordinate. Projection distances beyond
/// `tolerance` (default: the longest source segment) raise a GeometryError.
NodalField interpolate(const CurveMesh& src, const CurveMesh& dst, const NodalField& field,
                       double tolerance = -1.0);

/// Arc coordinates (in the source parameterization) of each destination node's
/// projection onto the source polyline. Shared by field and activation-map
/// interpolation.
std::vector<double> project_onto_curve(const CurveMesh& src, const CurveMesh& dst,
                                       double tolerance = -1.0);
/// Evaluate the P1 interpolant of per-node values at an arc coordinate.
double curve_value_at(const CurveMesh& curve, const NodalField& values, double arc);

} // namespace ecgi

#endif
