#include <doctest.h>

#include "hetreg/errors.hpp"
#include "hetreg/matrix.hpp"
#include "hetreg/rng.hpp"

using namespace hetreg;

TEST_CASE("matmul identity and hand product") {
    const Matrix identity = Matrix::from_rows({{1, 0}, {0, 1}});
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(matmul(identity, a) == a);

    const Matrix b = Matrix::from_rows({{0}, {1}});
    const Matrix c = matmul(a, b);
    CHECK(c.rows() == 2);
    CHECK(c.cols() == 1);
    CHECK(c(0, 0) == doctest::Approx(2.0));
    CHECK(c(1, 0) == doctest::Approx(4.0));

    const Matrix zero(2, 2);
    const Matrix annihilated = matmul(zero, a);
    for (std::size_t i = 0; i < annihilated.size(); ++i) {
        CHECK(annihilated.data()[i] == 0.0);
    }
}

TEST_CASE("matmul rejects dimension mismatch") {
    const Matrix a(2, 3);
    const Matrix b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("transposed products agree with explicit transpose") {
    SeededRng rng(7);
    Matrix a(5, 3), b(5, 4);
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();

    const Matrix atb = matmul_at_b(a, b);
    const Matrix atb_ref = matmul(transpose(a), b);
    REQUIRE(atb.same_shape(atb_ref));
    for (std::size_t i = 0; i < atb.size(); ++i) {
        CHECK(atb.data()[i] == doctest::Approx(atb_ref.data()[i]).epsilon(1e-12));
    }

    Matrix c(4, 3), d(6, 3);
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = rng.normal();
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = rng.normal();
    const Matrix cdt = matmul_a_bt(c, d);
    const Matrix cdt_ref = matmul(c, transpose(d));
    REQUIRE(cdt.same_shape(cdt_ref));
    for (std::size_t i = 0; i < cdt.size(); ++i) {
        CHECK(cdt.data()[i] == doctest::Approx(cdt_ref.data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("row vector add and column sums") {
    Matrix m = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
    add_row_vector(m, {10, 20});
    CHECK(m(0, 0) == 11.0);
    CHECK(m(2, 1) == 26.0);
    const auto sums = column_sums(m);
    CHECK(sums[0] == doctest::Approx(39.0));
    CHECK(sums[1] == doctest::Approx(72.0));
    CHECK_THROWS_AS(add_row_vector(m, {1.0}), ShapeError);
}
