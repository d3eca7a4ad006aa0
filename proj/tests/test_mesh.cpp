#include "fracdiff/mesh.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace fracdiff;

TEST_CASE("uniform mesh on (0,1) with two elements") {
    const Mesh m = build_uniform_mesh(0.0, 1.0, 2, 0.0);
    REQUIRE(m.n_nodes() == 3);
    CHECK(m.node(0) == 0.0);
    CHECK(m.node(1) == 0.5);
    CHECK(m.node(2) == 1.0);
    REQUIRE(m.n_free() == 1);
    CHECK(m.free_nodes()[0] == 1);
    CHECK(m.h_max() == Catch::Approx(0.5));
    CHECK(m.h_min() == Catch::Approx(0.5));
}

TEST_CASE("uniform mesh free nodes") {
    const Mesh m = build_uniform_mesh(0.0, 1.0, 4, 0.0);
    REQUIRE(m.n_free() == 3);
    CHECK(m.node(m.free_nodes()[0]) == Catch::Approx(0.25));
    CHECK(m.node(m.free_nodes()[1]) == Catch::Approx(0.5));
    CHECK(m.node(m.free_nodes()[2]) == Catch::Approx(0.75));
}

TEST_CASE("collar adds only constrained nodes") {
    const Mesh m = build_uniform_mesh(0.0, 1.0, 2, 0.5);
    REQUIRE(m.n_nodes() == 5);
    CHECK(m.node(0) == Catch::Approx(-0.5));
    CHECK(m.node(4) == Catch::Approx(1.5));
    REQUIRE(m.n_free() == 1);
    CHECK(m.node(m.free_nodes()[0]) == Catch::Approx(0.5));
    CHECK(m.extent_left() == Catch::Approx(-0.5));
    CHECK(m.extent_right() == Catch::Approx(1.5));
}

TEST_CASE("mesh construction rejects bad input") {
    CHECK_THROWS_AS(build_uniform_mesh(0.0, 1.0, 0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(build_uniform_mesh(1.0, 0.0, 4, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(build_uniform_mesh(0.0, std::numeric_limits<double>::infinity(), 4, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(build_uniform_mesh(0.0, 1.0, 4, -0.25), std::invalid_argument);
    // collar must be a whole multiple of the element size
    CHECK_THROWS_AS(build_uniform_mesh(0.0, 1.0, 4, 0.3), std::invalid_argument);
}

TEST_CASE("refine bisects and links parent") {
    const Mesh m2 = build_uniform_mesh(0.0, 1.0, 2, 0.0);
    const Mesh m4 = refine(m2);
    REQUIRE(m4.n_elements() == 4);
    CHECK(m4.h_max() == Catch::Approx(0.25));
    CHECK(m4.h_max() * 2 == Catch::Approx(m2.h_max()));
    REQUIRE(m4.parent());
    CHECK(m4.parent()->n_elements() == 2);

    const Mesh m8 = refine(m4);
    REQUIRE(m8.n_elements() == 8);
    REQUIRE(m8.parent());
    REQUIRE(m8.parent()->parent());
    CHECK(m8.parent()->parent()->n_elements() == 2);

    // nestedness: every parent node appears among the child nodes
    for (int i = 0; i < m4.n_nodes(); ++i) CHECK(m8.node(2 * i) == m4.node(i));
}

TEST_CASE("prolongate reproduces P1 functions") {
    const Mesh m2 = build_uniform_mesh(0.0, 1.0, 2, 0.0);
    const Mesh m4 = refine(m2);

    SECTION("constant vector stays constant") {
        Eigen::VectorXd ones = Eigen::VectorXd::Ones(m2.n_nodes());
        Eigen::VectorXd fine = prolongate(ones, m4);
        REQUIRE(fine.size() == m4.n_nodes());
        for (int i = 0; i < fine.size(); ++i) CHECK(fine[i] == 1.0);
    }

    SECTION("hat at the midpoint interpolates linearly") {
        Eigen::VectorXd hat(3);
        hat << 0.0, 1.0, 0.0;
        Eigen::VectorXd fine = prolongate(hat, m4);
        REQUIRE(fine.size() == 5);
        CHECK(fine[0] == 0.0);
        CHECK(fine[1] == 0.5);
        CHECK(fine[2] == 1.0);
        CHECK(fine[3] == 0.5);
        CHECK(fine[4] == 0.0);
    }

    SECTION("zero maps to zero") {
        Eigen::VectorXd zero = Eigen::VectorXd::Zero(m2.n_nodes());
        CHECK(prolongate(zero, m4).isZero(0.0));
    }

    SECTION("restriction after prolongation returns the original nodal values") {
        Eigen::VectorXd v(3);
        v << 0.0, 0.7, 0.0;
        Eigen::VectorXd fine = prolongate(v, m4);
        Eigen::VectorXd back = restrict_nodal(fine, m4, m2);
        REQUIRE(back.size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(back[i] == v[i]);
    }

    SECTION("non-nested sizes are rejected") {
        Eigen::VectorXd bad = Eigen::VectorXd::Zero(4);
        CHECK_THROWS_AS(prolongate(bad, m4), std::invalid_argument);
    }
}

TEST_CASE("prolongation preserves the nodal range") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(-2.0, 3.0);
    Mesh coarse = build_uniform_mesh(-1.0, 2.0, 6, 0.5);
    Mesh fine = refine(refine(coarse));
    for (int trial = 0; trial < 25; ++trial) {
        Eigen::VectorXd v(coarse.n_nodes());
        for (int i = 0; i < v.size(); ++i) v[i] = uni(rng);
        Eigen::VectorXd f = prolongate(v, fine);
        CHECK(f.minCoeff() == Catch::Approx(v.minCoeff()));
        CHECK(f.maxCoeff() == Catch::Approx(v.maxCoeff()));
    }
}

TEST_CASE("free/constrained partition is exact") {
    for (const double collar : {0.0, 0.5}) {
        const Mesh m = build_uniform_mesh(0.0, 1.0, 8, collar);
        int free_count = 0;
        for (int i = 0; i < m.n_nodes(); ++i) {
            const bool interior = m.node(i) > 0.0 && m.node(i) < 1.0;
            CHECK(m.is_free(i) == interior);
            free_count += m.is_free(i);
        }
        CHECK(free_count == 7);
    }
}

TEST_CASE("scatter and gather are inverse on free entries") {
    const Mesh m = build_uniform_mesh(0.0, 2.0, 8, 0.25);
    Eigen::VectorXd freev = Eigen::VectorXd::LinSpaced(m.n_free(), 1.0, 2.0);
    Eigen::VectorXd full = scatter_free(m, freev);
    for (int i = 0; i < m.n_nodes(); ++i)
        if (!m.is_free(i)) CHECK(full[i] == 0.0);
    CHECK((gather_free(m, full) - freev).norm() == 0.0);
}

TEST_CASE("mesh dump format") {
    const Mesh m = build_uniform_mesh(0.0, 1.0, 2, 0.0);
    std::ostringstream os;
    dump_mesh(m, os);
    CHECK(os.str() == "node 0 0 constrained\nnode 1 0.5 free\nnode 2 1 constrained\n");
}
