#ifndef ECGI_MESH_HPP
#define ECGI_MESH_HPP

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecgi/errors.hpp"

namespace ecgi {

enum class BoundaryTag { interior, epicardial, body_surface, blood };

std::string to_string(BoundaryTag tag);
BoundaryTag tag_from_string(const std::string& s);

/// Triangulated planar mesh (coordinates in cm). Triangles are stored with
/// positive (counter-clockwise) orientation; the constructor reorients and
/// validates. Immutable after construction.
class Mesh2D {
public:
    Mesh2D(std::vector<Eigen::Vector2d> nodes,
           std::vector<std::array<int, 3>> triangles,
           std::vector<BoundaryTag> tags);

    int node_count() const { return static_cast<int>(nodes_.size()); }
    int triangle_count() const { return static_cast<int>(triangles_.size()); }

    const Eigen::Vector2d& node(int i) const { return nodes_[i]; }
    const std::array<int, 3>& triangle(int e) const { return triangles_[e]; }
    BoundaryTag tag(int i) const { return tags_[i]; }
    double area(int e) const { return areas_[e]; }
    Eigen::Vector2d centroid(int e) const;

    const std::vector<Eigen::Vector2d>& nodes() const { return nodes_; }
    const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
    const std::vector<BoundaryTag>& tags() const { return tags_; }

    double total_area() const;

    /// Gradients of the three P1 basis functions on triangle e.
    const std::array<Eigen::Vector2d, 3>& basis_gradients(int e) const {
        return basis_grads_[e];
    }

private:
    std::vector<Eigen::Vector2d> nodes_;
    std::vector<std::array<int, 3>> triangles_;
    std::vector<BoundaryTag> tags_;
    std::vector<double> areas_;
    std::vector<std::array<Eigen::Vector2d, 3>> basis_grads_;
};

/// Ordered polyline with P1 connectivity; closed curves wrap segment N-1 -> 0.
/// Stores its own coordinates so it can stand alone; parent_indices maps back
/// into the Mesh2D numbering when the curve was extracted from one.
class CurveMesh {
public:
    CurveMesh(std::vector<Eigen::Vector2d> points, bool closed,
              std::vector<int> parent_indices = {});

    int node_count() const { return static_cast<int>(points_.size()); }
    int segment_count() const {
        return closed_ ? node_count() : node_count() - 1;
    }
    bool closed() const { return closed_; }

    const Eigen::Vector2d& point(int i) const { return points_[i]; }
    double segment_length(int s) const { return seg_lengths_[s]; }
    /// Segment s connects node s to node (s+1) % N.
    std::array<int, 2> segment(int s) const {
        return {s, (s + 1) % node_count()};
    }
    int parent_index(int i) const { return parent_indices_[i]; }
    const std::vector<int>& parent_indices() const { return parent_indices_; }

    double total_length() const;
    /// Cumulative arc length of node i from node 0.
    double arc_coordinate(int i) const { return arc_coords_[i]; }

private:
    std::vector<Eigen::Vector2d> points_;
    bool closed_;
    std::vector<int> parent_indices_;
    std::vector<double> seg_lengths_;
    std::vector<double> arc_coords_;
};

/// Walk the cycle formed by mesh edges whose endpoints both carry `tag`.
/// Starts at the tagged node with the smallest index and orients the walk
/// counter-clockwise around the nodes' centroid. Errors unless the tagged
/// nodes form exactly one closed polyline.
CurveMesh extract_tagged_cycle(const Mesh2D& mesh, BoundaryTag tag);

/// Structured concentric disk/annulus mesh used by the forward and inverse
/// models. Rings are placed at the given radii, each discretized with n_theta
/// nodes starting at angle 0 and proceeding counter-clockwise.
Mesh2D generate_ring_mesh(const std::vector<double>& ring_radii, int n_theta,
                          const std::vector<BoundaryTag>& ring_tags);

/// Radii for an annulus [r_inner, r_outer]: n_layers cells graded toward the
/// inner radius with exponent `grading` (1 = uniform).
std::vector<double> graded_radii(double r_inner, double r_outer, int n_layers,
                                 double grading = 1.0);

// Text import/export. One record per line: a header word with a count, then
// `x y tag` per node and `i j k` per triangle.
void write_mesh(const Mesh2D& mesh, std::ostream& os);
void write_mesh_file(const Mesh2D& mesh, const std::string& path);
Mesh2D read_mesh(std::istream& is);
Mesh2D read_mesh_file(const std::string& path);

/// Sub-mesh induced by a subset of triangles; keeps node tags and records the
/// map between local and parent node numbering.
struct SubMesh {
    Mesh2D mesh;
    std::vector<int> to_parent;   // local node -> parent node
    std::vector<int> from_parent; // parent node -> local node or -1
};
SubMesh extract_submesh(const Mesh2D& mesh, const std::vector<int>& triangle_ids);

} // namespace ecgi

#endif
