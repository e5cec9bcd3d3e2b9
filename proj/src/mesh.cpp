#include "ecgi/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace ecgi {

std::string to_string(BoundaryTag tag) {
    switch (tag) {
        case BoundaryTag::interior: return "interior";
        case BoundaryTag::epicardial: return "epicardial";
        case BoundaryTag::body_surface: return "body_surface";
        case BoundaryTag::blood: return "blood";
    }
    return "interior";
}

BoundaryTag tag_from_string(const std::string& s) {
    if (s == "interior") return BoundaryTag::interior;
    if (s == "epicardial") return BoundaryTag::epicardial;
    if (s == "body_surface") return BoundaryTag::body_surface;
    if (s == "blood") return BoundaryTag::blood;
    throw ValidationError("unknown node tag '" + s + "'");
}

namespace {

double signed_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                   const Eigen::Vector2d& c) {
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) -
                  (c.x() - a.x()) * (b.y() - a.y()));
}

} // namespace

Mesh2D::Mesh2D(std::vector<Eigen::Vector2d> nodes,
               std::vector<std::array<int, 3>> triangles,
               std::vector<BoundaryTag> tags)
    : nodes_(std::move(nodes)), triangles_(std::move(triangles)), tags_(std::move(tags)) {
    if (tags_.size() != nodes_.size())
        throw ValidationError("mesh tag count does not match node count");
    const int n = node_count();
    areas_.reserve(triangles_.size());
    basis_grads_.reserve(triangles_.size());
    for (std::size_t e = 0; e < triangles_.size(); ++e) {
        auto& tri = triangles_[e];
        for (int v : tri) {
            if (v < 0 || v >= n)
                throw ValidationError("triangle " + std::to_string(e) +
                                      " references missing node " + std::to_string(v));
        }
        double a = signed_area(nodes_[tri[0]], nodes_[tri[1]], nodes_[tri[2]]);
        if (a < 0.0) {
            std::swap(tri[1], tri[2]);
            a = -a;
        }
        const double scale = (nodes_[tri[0]] - nodes_[tri[1]]).norm() +
                             (nodes_[tri[1]] - nodes_[tri[2]]).norm();
        if (a <= 1e-14 * std::max(1.0, scale * scale))
            throw AssemblyError("triangle " + std::to_string(e) + " is degenerate (area " +
                                std::to_string(a) + ")");
        areas_.push_back(a);

        // grad of barycentric basis i is the rotated opposite edge over 2A
        std::array<Eigen::Vector2d, 3> g;
        for (int i = 0; i < 3; ++i) {
            const Eigen::Vector2d& p1 = nodes_[tri[(i + 1) % 3]];
            const Eigen::Vector2d& p2 = nodes_[tri[(i + 2) % 3]];
            g[i] = Eigen::Vector2d(p1.y() - p2.y(), p2.x() - p1.x()) / (2.0 * a);
        }
        basis_grads_.push_back(g);
    }
}

Eigen::Vector2d Mesh2D::centroid(int e) const {
    const auto& t = triangles_[e];
    return (nodes_[t[0]] + nodes_[t[1]] + nodes_[t[2]]) / 3.0;
}

double Mesh2D::total_area() const {
    double s = 0.0;
    for (double a : areas_) s += a;
    return s;
}

CurveMesh::CurveMesh(std::vector<Eigen::Vector2d> points, bool closed,
                     std::vector<int> parent_indices)
    : points_(std::move(points)), closed_(closed), parent_indices_(std::move(parent_indices)) {
    const int n = node_count();
    if (n < 2) throw ValidationError("curve needs at least 2 nodes");
    if (closed_ && n < 3) throw ValidationError("closed curve needs at least 3 nodes");
    if (parent_indices_.empty()) {
        parent_indices_.resize(n);
        for (int i = 0; i < n; ++i) parent_indices_[i] = i;
    } else if (static_cast<int>(parent_indices_.size()) != n) {
        throw ValidationError("curve parent index count does not match node count");
    }
    const int ns = segment_count();
    seg_lengths_.resize(ns);
    arc_coords_.resize(n);
    arc_coords_[0] = 0.0;
    for (int s = 0; s < ns; ++s) {
        const auto [i, j] = segment(s);
        const double len = (points_[j] - points_[i]).norm();
        if (len <= 0.0)
            throw AssemblyError("curve segment " + std::to_string(s) + " has zero length");
        seg_lengths_[s] = len;
        if (j != 0) arc_coords_[j] = arc_coords_[i] + len;
    }
}

double CurveMesh::total_length() const {
    double s = 0.0;
    for (double l : seg_lengths_) s += l;
    return s;
}

CurveMesh extract_tagged_cycle(const Mesh2D& mesh, BoundaryTag tag) {
    const int n = mesh.node_count();
    std::vector<int> tagged;
    for (int i = 0; i < n; ++i)
        if (mesh.tag(i) == tag) tagged.push_back(i);
    if (tagged.size() < 3)
        throw GeometryError("fewer than 3 nodes tagged '" + to_string(tag) + "'");

    // adjacency restricted to same-tag mesh edges
    std::map<int, std::set<int>> adj;
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        const auto& t = mesh.triangle(e);
        for (int k = 0; k < 3; ++k) {
            const int a = t[k], b = t[(k + 1) % 3];
            if (mesh.tag(a) == tag && mesh.tag(b) == tag) {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    for (int i : tagged) {
        auto it = adj.find(i);
        if (it == adj.end() || it->second.size() != 2)
            throw GeometryError("nodes tagged '" + to_string(tag) +
                                "' do not form a single closed polyline (node " +
                                std::to_string(i) + ")");
    }

    std::vector<int> order;
    order.reserve(tagged.size());
    const int start = tagged.front();
    int prev = -1, cur = start;
    do {
        order.push_back(cur);
        const auto& nb = adj[cur];
        int next = -1;
        for (int cand : nb)
            if (cand != prev) next = cand;
        if (next == -1) next = *nb.begin(); // two-node degenerate guard
        prev = cur;
        cur = next;
    } while (cur != start && order.size() <= tagged.size());
    if (order.size() != tagged.size() || cur != start)
        throw GeometryError("nodes tagged '" + to_string(tag) +
                            "' split into more than one polyline");

    std::vector<Eigen::Vector2d> pts(order.size());
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (std::size_t k = 0; k < order.size(); ++k) {
        pts[k] = mesh.node(order[k]);
        c += pts[k];
    }
    c /= static_cast<double>(order.size());

    // orient counter-clockwise around the centroid
    double twice_area = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto& p = pts[k];
        const auto& q = pts[(k + 1) % pts.size()];
        twice_area += (p.x() - c.x()) * (q.y() - c.y()) - (q.x() - c.x()) * (p.y() - c.y());
    }
    if (twice_area < 0.0) {
        std::reverse(order.begin() + 1, order.end());
        std::reverse(pts.begin() + 1, pts.end());
    }
    return CurveMesh(std::move(pts), true, std::move(order));
}

std::vector<double> graded_radii(double r_inner, double r_outer, int n_layers,
                                 double grading) {
    if (n_layers < 1) throw ValidationError("layer count must be >= 1");
    if (r_outer <= r_inner) throw ValidationError("outer radius must exceed inner radius");
    std::vector<double> r(n_layers + 1);
    for (int k = 0; k <= n_layers; ++k) {
        const double t = static_cast<double>(k) / n_layers;
        r[k] = r_inner + (r_outer - r_inner) * std::pow(t, grading);
    }
    return r;
}

Mesh2D generate_ring_mesh(const std::vector<double>& ring_radii, int n_theta,
                          const std::vector<BoundaryTag>& ring_tags) {
    if (ring_radii.size() < 2) throw ValidationError("need at least 2 rings");
    if (ring_tags.size() != ring_radii.size())
        throw ValidationError("ring tag count does not match ring count");
    if (n_theta < 3) throw ValidationError("angular resolution must be >= 3");
    for (std::size_t k = 1; k < ring_radii.size(); ++k)
        if (ring_radii[k] <= ring_radii[k - 1])
            throw ValidationError("ring radii must be strictly increasing");

    const int n_rings = static_cast<int>(ring_radii.size());
    std::vector<Eigen::Vector2d> nodes;
    std::vector<BoundaryTag> tags;
    nodes.reserve(static_cast<std::size_t>(n_rings) * n_theta);
    for (int k = 0; k < n_rings; ++k) {
        for (int i = 0; i < n_theta; ++i) {
            const double th = 2.0 * std::numbers::pi * i / n_theta;
            nodes.emplace_back(ring_radii[k] * std::cos(th), ring_radii[k] * std::sin(th));
            tags.push_back(ring_tags[k]);
        }
    }

    auto id = [n_theta](int ring, int i) { return ring * n_theta + (i % n_theta); };
    std::vector<std::array<int, 3>> tris;
    tris.reserve(static_cast<std::size_t>(n_rings - 1) * n_theta * 2);
    for (int k = 0; k + 1 < n_rings; ++k) {
        for (int i = 0; i < n_theta; ++i) {
            const int a = id(k, i), b = id(k, i + 1);
            const int c = id(k + 1, i), d = id(k + 1, i + 1);
            // alternate the quad diagonal to avoid a directional bias
            if ((i + k) % 2 == 0) {
                tris.push_back({a, b, d});
                tris.push_back({a, d, c});
            } else {
                tris.push_back({a, b, c});
                tris.push_back({b, d, c});
            }
        }
    }
    return Mesh2D(std::move(nodes), std::move(tris), std::move(tags));
}

void write_mesh(const Mesh2D& mesh, std::ostream& os) {
    os << "ecgi-mesh 1\n";
    os << "nodes " << mesh.node_count() << "\n";
    char buf[96];
    for (int i = 0; i < mesh.node_count(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g", mesh.node(i).x(), mesh.node(i).y());
        os << buf << ' ' << to_string(mesh.tag(i)) << "\n";
    }
    os << "triangles " << mesh.triangle_count() << "\n";
    for (int e = 0; e < mesh.triangle_count(); ++e) {
        const auto& t = mesh.triangle(e);
        os << t[0] << ' ' << t[1] << ' ' << t[2] << "\n";
    }
}

void write_mesh_file(const Mesh2D& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open mesh file for writing: " + path);
    write_mesh(mesh, os);
}

Mesh2D read_mesh(std::istream& is) {
    std::string word;
    int version = 0;
    if (!(is >> word >> version) || word != "ecgi-mesh" || version != 1)
        throw ValidationError("bad mesh header, expected 'ecgi-mesh 1'");
    int n_nodes = 0;
    if (!(is >> word >> n_nodes) || word != "nodes" || n_nodes < 0)
        throw ValidationError("bad mesh node section");
    std::vector<Eigen::Vector2d> nodes(n_nodes);
    std::vector<BoundaryTag> tags(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
        double x, y;
        std::string tag;
        if (!(is >> x >> y >> tag))
            throw ValidationError("bad mesh node record " + std::to_string(i));
        nodes[i] = {x, y};
        tags[i] = tag_from_string(tag);
    }
    int n_tris = 0;
    if (!(is >> word >> n_tris) || word != "triangles" || n_tris < 0)
        throw ValidationError("bad mesh triangle section");
    std::vector<std::array<int, 3>> tris(n_tris);
    for (int e = 0; e < n_tris; ++e) {
        if (!(is >> tris[e][0] >> tris[e][1] >> tris[e][2]))
            throw ValidationError("bad mesh triangle record " + std::to_string(e));
    }
    return Mesh2D(std::move(nodes), std::move(tris), std::move(tags));
}

Mesh2D read_mesh_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open mesh file: " + path);
    return read_mesh(is);
}

SubMesh extract_submesh(const Mesh2D& mesh, const std::vector<int>& triangle_ids) {
    std::vector<int> from_parent(mesh.node_count(), -1);
    std::vector<int> to_parent;
    std::vector<std::array<int, 3>> tris;
    tris.reserve(triangle_ids.size());
    for (int e : triangle_ids) {
        std::array<int, 3> local{};
        for (int k = 0; k < 3; ++k) {
            const int p = mesh.triangle(e)[k];
            if (from_parent[p] < 0) {
                from_parent[p] = static_cast<int>(to_parent.size());
                to_parent.push_back(p);
            }
            local[k] = from_parent[p];
        }
        tris.push_back(local);
    }
    std::vector<Eigen::Vector2d> nodes(to_parent.size());
    std::vector<BoundaryTag> tags(to_parent.size());
    for (std::size_t i = 0; i < to_parent.size(); ++i) {
        nodes[i] = mesh.node(to_parent[i]);
        tags[i] = mesh.tag(to_parent[i]);
    }
    return SubMesh{Mesh2D(std::move(nodes), std::move(tris), std::move(tags)),
                   std::move(to_parent), std::move(from_parent)};
}

} // namespace ecgi
