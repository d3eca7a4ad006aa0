#include "fracdiff/assembly.hpp"
#include "fracdiff/oracle.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

using namespace fracdiff;

namespace {

double max_rel_deviation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double denom = std::max(std::abs(b(i, j)), 1e-300);
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / denom);
        }
    return worst;
}

double symmetry_defect(const Eigen::MatrixXd& a) {
    const double scale = a.cwiseAbs().maxCoeff();
    return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

bool cholesky_ok(const Eigen::MatrixXd& a) {
    return Eigen::LLT<Eigen::MatrixXd>(a).info() == Eigen::Success;
}

} // namespace

TEST_CASE("stiffness is symmetric and positive definite across kernels") {
    const Mesh plain = build_uniform_mesh(0.0, 1.0, 12, 0.0);
    const Mesh collared = build_uniform_mesh(0.0, 1.0, 12, 0.25);
    struct Case {
        const Mesh* mesh;
        Kernel kernel;
    };
    const Case cases[] = {
        {&plain, Kernel::fractional(0.3)},
        {&plain, Kernel::fractional(0.7, 2.0)},
        {&collared, Kernel::fractional(0.5)},
        {&collared, Kernel::truncated(0.5, 0.25)},
        {&collared, Kernel::constant_ball(0.25, 3.0)},
    };
    for (const Case& c : cases) {
        const NonlocalSystem sys = assemble_stiffness(*c.mesh, c.kernel, 8);
        CHECK(symmetry_defect(sys.stiffness) <= 1e-12);
        CHECK(cholesky_ok(sys.stiffness));
    }
}

TEST_CASE("assembly agrees with the brute-force oracle") {
    for (const int n : {4, 8, 16}) {
        for (const double s : {0.3, 0.5, 0.7}) {
            const Mesh mesh = build_uniform_mesh(0.0, 1.0, n, 0.0);
            const Kernel k = Kernel::fractional(s);
            const NonlocalSystem sys = assemble_stiffness(mesh, k, 8);
            const Eigen::MatrixXd ref = oracle_assemble(mesh, k, 1e-7);
            INFO("n=" << n << " s=" << s);
            CHECK(max_rel_deviation(sys.stiffness, ref) <= 1e-6);
        }
    }
}

TEST_CASE("oracle agreement for a truncated kernel with collar") {
    const Mesh mesh = build_uniform_mesh(0.0, 1.0, 8, 0.25);
    const Kernel k = Kernel::truncated(0.4, 0.25);
    const NonlocalSystem sys = assemble_stiffness(mesh, k, 8);
    const Eigen::MatrixXd ref = oracle_assemble(mesh, k, 1e-7);
    CHECK(max_rel_deviation(sys.stiffness, ref) <= 1e-6);
}

TEST_CASE("lumped mass diagonal") {
    SECTION("uniform interior entries equal h") {
        const Mesh mesh = build_uniform_mesh(0.0, 1.0, 4, 0.0);
        const Eigen::VectorXd m = assemble_lumped_mass(mesh);
        REQUIRE(m.size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(m[i] == Catch::Approx(0.25).epsilon(1e-14));
    }
    SECTION("single free node") {
        const Mesh mesh = build_uniform_mesh(0.0, 1.0, 2, 0.0);
        const Eigen::VectorXd m = assemble_lumped_mass(mesh);
        REQUIRE(m.size() == 1);
        CHECK(m[0] == Catch::Approx(0.5).epsilon(1e-14));
    }
    SECTION("partition of unity: free entries plus boundary halves fill the domain") {
        const Mesh mesh = build_uniform_mesh(0.0, 1.0, 8, 0.0);
        const Eigen::VectorXd m = assemble_lumped_mass(mesh);
        const double h = 1.0 / 8.0;
        CHECK(m.sum() + 2.0 * (h / 2.0) == Catch::Approx(1.0).epsilon(1e-14));
    }
    SECTION("entries strictly positive") {
        const Mesh mesh = build_uniform_mesh(-1.0, 2.0, 10, 0.3);
        const Eigen::VectorXd m = assemble_lumped_mass(mesh);
        CHECK(m.minCoeff() > 0.0);
    }
}

TEST_CASE("pure fractional matrix minus full-horizon truncated matrix is the tail part") {
    const Mesh mesh = build_uniform_mesh(0.0, 1.0, 8, 0.0);
    const double s = 0.5;
    const NonlocalSystem frac = assemble_stiffness(mesh, Kernel::fractional(s), 8);
    // horizon equal to the diameter of the meshed region: the truncation
    // never bites inside it, so only the complement tail distinguishes the two
    const NonlocalSystem trunc = assemble_stiffness(mesh, Kernel::truncated(s, 1.0), 8);

    // independent tail matrix: fine composite midpoint rule of
    // 2 phi_i phi_j tail(x) per element
    const int nf = mesh.n_free();
    Eigen::MatrixXd tail = Eigen::MatrixXd::Zero(nf, nf);
    const Kernel kf = Kernel::fractional(s);
    const int sub = 4000;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const double x0 = mesh.element_left(e), x1 = mesh.element_right(e);
        const double dx = (x1 - x0) / sub;
        for (const int na : {e, e + 1})
            for (const int nb : {e, e + 1}) {
                if (nb < na || !mesh.is_free(na) || !mesh.is_free(nb)) continue;
                double acc = 0.0;
                for (int q = 0; q < sub; ++q) {
                    const double x = x0 + (q + 0.5) * dx;
                    acc += mesh.hat(na, x) * mesh.hat(nb, x) * tail_integral(kf, x, 0.0, 1.0) * dx;
                }
                const int fa = mesh.free_index(na), fb = mesh.free_index(nb);
                tail(fa, fb) += 2.0 * acc;
                if (fa != fb) tail(fb, fa) += 2.0 * acc;
            }
    }

    const Eigen::MatrixXd diff = frac.stiffness - trunc.stiffness;
    const double scale = frac.stiffness.cwiseAbs().maxCoeff();
    CHECK((diff - tail).cwiseAbs().maxCoeff() / scale <= 1e-6);
    CHECK(frac.diagnostics.tail_total > 0.0);
}

TEST_CASE("horizon saturation: widening the collar beyond epsilon changes nothing") {
    const Kernel k = Kernel::truncated(0.5, 0.25);
    const NonlocalSystem narrow = assemble_stiffness(build_uniform_mesh(0.0, 1.0, 16, 0.25), k, 8);
    const NonlocalSystem wide = assemble_stiffness(build_uniform_mesh(0.0, 1.0, 16, 0.5), k, 8);
    const double scale = narrow.stiffness.cwiseAbs().maxCoeff();
    CHECK((narrow.stiffness - wide.stiffness).cwiseAbs().maxCoeff() / scale <= 1e-12);
}

TEST_CASE("fractional assembly does not depend on how much of the complement is meshed") {
    const Kernel k = Kernel::fractional(0.5);
    const NonlocalSystem bare = assemble_stiffness(build_uniform_mesh(0.0, 1.0, 8, 0.0), k, 8);
    const NonlocalSystem collared = assemble_stiffness(build_uniform_mesh(0.0, 1.0, 8, 0.5), k, 8);
    const double scale = bare.stiffness.cwiseAbs().maxCoeff();
    CHECK((bare.stiffness - collared.stiffness).cwiseAbs().maxCoeff() / scale <= 1e-9);
}

TEST_CASE("generalized eigenvalue floor is positive and stable under refinement") {
    const Kernel k = Kernel::fractional(0.5);
    double prev = -1.0;
    Mesh mesh = build_uniform_mesh(0.0, 1.0, 8, 0.0);
    for (int level = 0; level < 3; ++level) {
        const NonlocalSystem sys = assemble_stiffness(mesh, k, 8);
        Eigen::MatrixXd M = sys.lumped_mass.asDiagonal();
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(sys.stiffness, M);
        const double lmin = es.eigenvalues().minCoeff();
        CHECK(lmin > 0.0);
        if (prev > 0.0) CHECK(std::abs(lmin - prev) / prev <= 0.25);
        prev = lmin;
        mesh = refine(mesh);
    }
}

TEST_CASE("entry magnitude decays monotonically away from the diagonal") {
    const Mesh mesh = build_uniform_mesh(0.0, 1.0, 16, 0.0);
    const Eigen::MatrixXd ref = oracle_assemble(mesh, Kernel::fractional(0.5), 1e-6);
    const int nf = mesh.n_free();
    // disjoint-support pairs on a uniform mesh: |A_{0,j}| decreasing in j
    for (int j = 3; j < nf; ++j) CHECK(std::abs(ref(0, j)) < std::abs(ref(0, j - 1)));
}

TEST_CASE("doubling the quadrature order barely moves the entries") {
    const Mesh mesh = build_uniform_mesh(0.0, 1.0, 16, 0.0);
    const Kernel k = Kernel::fractional(0.5);
    const NonlocalSystem a = assemble_stiffness(mesh, k, 8);
    const NonlocalSystem b = assemble_stiffness(mesh, k, 16);
    const double scale = a.stiffness.cwiseAbs().maxCoeff();
    CHECK((a.stiffness - b.stiffness).cwiseAbs().maxCoeff() / scale <= 1e-8);
}

TEST_CASE("assembly is deterministic") {
    const Mesh mesh = build_uniform_mesh(0.0, 1.0, 16, 0.25);
    const Kernel k = Kernel::truncated(0.6, 0.25);
    const NonlocalSystem a = assemble_stiffness(mesh, k, 8);
    const NonlocalSystem b = assemble_stiffness(mesh, k, 8);
    CHECK((a.stiffness - b.stiffness).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("assembly rejects bad input") {
    const Mesh mesh = build_uniform_mesh(0.0, 1.0, 8, 0.0);
    CHECK_THROWS_AS(assemble_stiffness(mesh, Kernel::fractional(0.5), 1), std::invalid_argument);
    // truncated kernel, horizon wider than the collar and smaller than the mesh
    CHECK_THROWS_AS(assemble_stiffness(mesh, Kernel::truncated(0.5, 0.25), 8),
                    std::invalid_argument);
    const Mesh thin = build_uniform_mesh(0.0, 1.0, 8, 0.125);
    CHECK_THROWS_AS(assemble_stiffness(thin, Kernel::truncated(0.5, 0.25), 8),
                    std::invalid_argument);
}

TEST_CASE("oracle guards its preconditions") {
    const Mesh big = build_uniform_mesh(0.0, 1.0, 80, 0.0);
    CHECK_THROWS_AS(oracle_assemble(big, Kernel::fractional(0.5), 1e-6), std::invalid_argument);
    const Mesh mesh = build_uniform_mesh(0.0, 1.0, 4, 0.0);
    CHECK_THROWS_AS(oracle_assemble(mesh, Kernel::fractional(0.5), 0.0), std::invalid_argument);
}

TEST_CASE("pair classes are tallied") {
    const Mesh mesh = build_uniform_mesh(0.0, 1.0, 8, 0.0);
    const NonlocalSystem sys = assemble_stiffness(mesh, Kernel::fractional(0.5), 8);
    CHECK(sys.diagnostics.identical_pairs == 8);
    CHECK(sys.diagnostics.adjacent_pairs == 7);
    CHECK(sys.diagnostics.disjoint_pairs == 8 * 9 / 2 - 15);
    const NonlocalSystem tsys =
        assemble_stiffness(build_uniform_mesh(0.0, 1.0, 8, 0.25), Kernel::truncated(0.5, 0.25), 8);
    CHECK(tsys.diagnostics.skipped_pairs > 0);
    CHECK(tsys.diagnostics.split_pairs > 0);
}

TEST_CASE("matrix dump format") {
    Eigen::MatrixXd A(2, 2);
    A << 1.0, -0.25, -0.25, 2.0;
    std::ostringstream os;
    dump_matrix(A, os);
    CHECK(os.str() == "symmetric 2\n0 0 1\n1 0 -0.25\n1 1 2\n");
}
