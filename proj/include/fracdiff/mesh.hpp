#ifndef FRACDIFF_MESH_HPP
#define FRACDIFF_MESH_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracdiff {

/// 1D mesh of the solution interval (a,b) plus an optional constraint
/// collar of equal resolution on each side. Nodes are strictly increasing;
/// element k is the interval [node k, node k+1]. Nodes strictly inside
/// (a,b) carry unknowns, all others are pinned to zero. Immutable after
/// construction; refinements keep a link to their parent so that nodal
/// vectors can be prolongated exactly.
class Mesh {
public:
    Mesh(std::vector<double> nodes, double a, double b, double collar_width,
         std::shared_ptr<const Mesh> parent = nullptr)
        : nodes_(std::move(nodes)), a_(a), b_(b), collar_width_(collar_width),
          parent_(std::move(parent)) {
        validate();
        classify_nodes();
    }

    int n_nodes() const { return static_cast<int>(nodes_.size()); }
    int n_elements() const { return n_nodes() - 1; }
    double node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& nodes() const { return nodes_; }

    double domain_a() const { return a_; }
    double domain_b() const { return b_; }
    double collar_width() const { return collar_width_; }
    /// Extent of the meshed region, i.e. [a - collar, b + collar].
    double extent_left() const { return nodes_.front(); }
    double extent_right() const { return nodes_.back(); }

    double element_left(int e) const { return nodes_[static_cast<std::size_t>(e)]; }
    double element_right(int e) const { return nodes_[static_cast<std::size_t>(e) + 1]; }
    double element_length(int e) const { return element_right(e) - element_left(e); }

    double h_max() const {
        double h = 0;
        for (int e = 0; e < n_elements(); ++e) h = std::max(h, element_length(e));
        return h;
    }
    double h_min() const {
        double h = element_length(0);
        for (int e = 1; e < n_elements(); ++e) h = std::min(h, element_length(e));
        return h;
    }

    bool is_free(int i) const { return free_index_[static_cast<std::size_t>(i)] >= 0; }
    /// Position of node i among the free nodes, or -1 if constrained.
    int free_index(int i) const { return free_index_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& free_nodes() const { return free_nodes_; }
    int n_free() const { return static_cast<int>(free_nodes_.size()); }

    const std::shared_ptr<const Mesh>& parent() const { return parent_; }

    /// Value of the nodal hat function of node v at x (zero outside its support).
    double hat(int v, double x) const {
        const double xv = node(v);
        if (v > 0) {
            const double xl = node(v - 1);
            if (x >= xl && x <= xv) return (x - xl) / (xv - xl);
        }
        if (v + 1 < n_nodes()) {
            const double xr = node(v + 1);
            if (x >= xv && x <= xr) return (xr - x) / (xr - xv);
        }
        return 0.0;
    }

    /// Evaluate the P1 function with full nodal vector `values` at x.
    double eval(const Eigen::VectorXd& values, double x) const {
        if (x <= extent_left() || x >= extent_right()) return 0.0;
        const int e = locate(x);
        const double x0 = element_left(e), x1 = element_right(e);
        const double t = (x - x0) / (x1 - x0);
        return (1.0 - t) * values[e] + t * values[e + 1];
    }

    /// Element containing x (rightmost if x is a node).
    int locate(double x) const {
        const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
        int e = static_cast<int>(it - nodes_.begin()) - 1;
        return std::clamp(e, 0, n_elements() - 1);
    }

private:
    void validate() const {
        if (nodes_.size() < 2) throw std::invalid_argument("mesh: needs at least one element");
        if (!std::isfinite(a_) || !std::isfinite(b_) || a_ >= b_)
            throw std::invalid_argument("mesh: invalid domain endpoints");
        if (collar_width_ < 0) throw std::invalid_argument("mesh: negative collar width");
        for (std::size_t i = 1; i < nodes_.size(); ++i)
            if (!(nodes_[i] > nodes_[i - 1]))
                throw std::invalid_argument("mesh: nodes not strictly increasing");
        const double scale = b_ - a_ + 2 * collar_width_;
        if (std::abs(nodes_.front() - (a_ - collar_width_)) > 1e-12 * scale ||
            std::abs(nodes_.back() - (b_ + collar_width_)) > 1e-12 * scale)
            throw std::invalid_argument("mesh: nodes do not span the meshed region");
    }

    void classify_nodes() {
        free_index_.assign(nodes_.size(), -1);
        const double tol = 1e-12 * (b_ - a_);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i] > a_ + tol && nodes_[i] < b_ - tol) {
                free_index_[i] = static_cast<int>(free_nodes_.size());
                free_nodes_.push_back(static_cast<int>(i));
            }
        }
    }

    std::vector<double> nodes_;
    double a_, b_, collar_width_;
    std::shared_ptr<const Mesh> parent_;
    std::vector<int> free_nodes_;
    std::vector<int> free_index_;
};

/// Uniform mesh of (a,b) with n_elements cells; a collar of the same cell
/// size is appended on both sides when collar_width > 0. The collar width
/// must be a whole multiple of the cell size.
inline Mesh build_uniform_mesh(double a, double b, int n_elements, double collar_width = 0.0) {
    if (!std::isfinite(a) || !std::isfinite(b))
        throw std::invalid_argument("build_uniform_mesh: non-finite endpoints");
    if (a >= b) throw std::invalid_argument("build_uniform_mesh: requires a < b");
    if (n_elements < 1) throw std::invalid_argument("build_uniform_mesh: needs at least one element");
    if (collar_width < 0) throw std::invalid_argument("build_uniform_mesh: negative collar width");

    const double h = (b - a) / n_elements;
    int n_collar = 0;
    if (collar_width > 0) {
        n_collar = static_cast<int>(std::llround(collar_width / h));
        if (n_collar < 1 || std::abs(n_collar * h - collar_width) > 1e-9 * std::max(h, collar_width))
            throw std::invalid_argument(
                "build_uniform_mesh: collar_width must be a whole multiple of the element size");
    }

    std::vector<double> nodes;
    nodes.reserve(static_cast<std::size_t>(n_elements + 2 * n_collar + 1));
    for (int i = n_collar; i >= 1; --i) nodes.push_back(a - collar_width * i / n_collar);
    for (int i = 0; i <= n_elements; ++i) nodes.push_back(a + (b - a) * i / n_elements);
    for (int i = 1; i <= n_collar; ++i) nodes.push_back(b + collar_width * i / n_collar);

    return Mesh(std::move(nodes), a, b, collar_width);
}

/// Bisect every element; the result keeps the input as parent so nodal
/// vectors prolongate exactly.
inline Mesh refine(const Mesh& mesh) {
    std::vector<double> nodes;
    nodes.reserve(static_cast<std::size_t>(2 * mesh.n_elements() + 1));
    for (int e = 0; e < mesh.n_elements(); ++e) {
        nodes.push_back(mesh.element_left(e));
        nodes.push_back(0.5 * (mesh.element_left(e) + mesh.element_right(e)));
    }
    nodes.push_back(mesh.extent_right());
    return Mesh(std::move(nodes), mesh.domain_a(), mesh.domain_b(), mesh.collar_width(),
                std::make_shared<const Mesh>(mesh));
}

namespace detail {

inline Eigen::VectorXd prolongate_once(const Eigen::VectorXd& coarse) {
    const int nc = static_cast<int>(coarse.size());
    Eigen::VectorXd fine(2 * nc - 1);
    for (int i = 0; i < nc; ++i) fine[2 * i] = coarse[i];
    for (int i = 0; i + 1 < nc; ++i) fine[2 * i + 1] = 0.5 * (coarse[i] + coarse[i + 1]);
    return fine;
}

} // namespace detail

/// Exact prolongation of a full nodal vector from an ancestor mesh in
/// `fine`'s refinement chain. The source mesh is identified by the vector
/// length; throws if no ancestor matches.
inline Eigen::VectorXd prolongate(const Eigen::VectorXd& coeffs, const Mesh& fine) {
    int levels = 0;
    const Mesh* m = &fine;
    while (m->n_nodes() != coeffs.size()) {
        if (!m->parent()) throw std::invalid_argument("prolongate: meshes not nested");
        m = m->parent().get();
        ++levels;
    }
    Eigen::VectorXd v = coeffs;
    for (int l = 0; l < levels; ++l) v = detail::prolongate_once(v);
    return v;
}

/// Nodal values of a fine full vector at the nodes of an ancestor mesh.
inline Eigen::VectorXd restrict_nodal(const Eigen::VectorXd& fine_values, const Mesh& fine,
                                      const Mesh& coarse) {
    int levels = 0;
    const Mesh* m = &fine;
    while (m->n_nodes() != coarse.n_nodes()) {
        if (!m->parent()) throw std::invalid_argument("restrict_nodal: meshes not nested");
        m = m->parent().get();
        ++levels;
    }
    Eigen::VectorXd v = fine_values;
    for (int l = 0; l < levels; ++l) {
        Eigen::VectorXd c((v.size() + 1) / 2);
        for (int i = 0; i < c.size(); ++i) c[i] = v[2 * i];
        v = std::move(c);
    }
    return v;
}

/// Expand a free-node vector to a full nodal vector (zeros at constrained nodes).
inline Eigen::VectorXd scatter_free(const Mesh& mesh, const Eigen::VectorXd& free_values) {
    if (free_values.size() != mesh.n_free())
        throw std::invalid_argument("scatter_free: size mismatch");
    Eigen::VectorXd full = Eigen::VectorXd::Zero(mesh.n_nodes());
    for (int k = 0; k < mesh.n_free(); ++k) full[mesh.free_nodes()[static_cast<std::size_t>(k)]] = free_values[k];
    return full;
}

/// Extract the free-node entries of a full nodal vector.
inline Eigen::VectorXd gather_free(const Mesh& mesh, const Eigen::VectorXd& full_values) {
    if (full_values.size() != mesh.n_nodes())
        throw std::invalid_argument("gather_free: size mismatch");
    Eigen::VectorXd v(mesh.n_free());
    for (int k = 0; k < mesh.n_free(); ++k) v[k] = full_values[mesh.free_nodes()[static_cast<std::size_t>(k)]];
    return v;
}

/// Debug dump, one "node <index> <coordinate> <free|constrained>" line per node.
inline void dump_mesh(const Mesh& mesh, std::ostream& out) {
    for (int i = 0; i < mesh.n_nodes(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", mesh.node(i));
        out << "node " << i << ' ' << buf << ' ' << (mesh.is_free(i) ? "free" : "constrained")
            << '\n';
    }
}

} // namespace fracdiff

#endif
