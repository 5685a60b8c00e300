#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "artinp/poisson.hpp"
#include "artinp/rng.hpp"

#include <doctest.h>

using namespace artinp;
using poisson::BlendOptions;
using poisson::BlendProblem;
using poisson::BlendResult;

namespace {

struct Problem {
    Tensor source{{0, 0}}, target{{0, 0}};
    std::vector<uint8_t> region;
    int h = 0, w = 0;

    BlendProblem view() const { return {&source, &target, region.data(), h, w}; }
};

Problem random_problem(int h, int w, Rng& rng) {
    Problem p;
    p.h = h;
    p.w = w;
    p.source = Tensor({h, w});
    p.target = Tensor({h, w});
    fill_uniform(p.source, rng, 0.0, 1.0);
    fill_uniform(p.target, rng, 0.0, 1.0);
    p.region.assign(size_t(h) * w, 0);
    // random rectangle plus scattered pixels, clipped anywhere in the image
    const int y0 = rand_int(rng, 0, h - 4), x0 = rand_int(rng, 0, w - 4);
    const int y1 = std::min(h, y0 + rand_int(rng, 2, 6)), x1 = std::min(w, x0 + rand_int(rng, 2, 6));
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) p.region[size_t(y) * w + x] = 1;
    for (int k = 0; k < 8; ++k)
        p.region[size_t(rand_int(rng, 0, h - 1)) * w + rand_int(rng, 0, w - 1)] = 1;
    return p;
}

// Independent dense oracle: assemble the |Ω|x|Ω| system by brute force and
// solve it with Gaussian elimination (partial pivoting).
Tensor dense_blend(const Problem& p) {
    const int h = p.h, w = p.w;
    std::vector<int64_t> idx(size_t(h) * w, -1);
    std::vector<int64_t> cells;
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const int64_t q = int64_t(y) * w + x;
            if (p.region[q]) {
                idx[q] = int64_t(cells.size());
                cells.push_back(q);
            }
        }
    Tensor out = p.target;
    const int64_t n = int64_t(cells.size());
    if (n == 0) return out;

    std::vector<double> A(size_t(n) * n, 0.0), b(size_t(n), 0.0);
    const int64_t offs[4] = {-w, w, -1, 1};
    for (int64_t r = 0; r < n; ++r) {
        const int64_t q = cells[r];
        A[size_t(r) * n + r] = 4.0;
        double rhs = 4.0 * p.source[q];
        for (int64_t o : offs) {
            const int64_t nb = q + o;
            rhs -= p.source[nb];
            if (idx[nb] >= 0)
                A[size_t(r) * n + idx[nb]] -= 1.0;
            else
                rhs += p.target[nb];
        }
        b[size_t(r)] = rhs;
    }

    for (int64_t col = 0; col < n; ++col) {
        int64_t piv = col;
        for (int64_t r = col + 1; r < n; ++r)
            if (std::abs(A[size_t(r) * n + col]) > std::abs(A[size_t(piv) * n + col])) piv = r;
        if (piv != col) {
            for (int64_t c = 0; c < n; ++c) std::swap(A[size_t(col) * n + c], A[size_t(piv) * n + c]);
            std::swap(b[size_t(col)], b[size_t(piv)]);
        }
        const double d = A[size_t(col) * n + col];
        REQUIRE(std::abs(d) > 1e-12);
        for (int64_t r = col + 1; r < n; ++r) {
            const double f = A[size_t(r) * n + col] / d;
            if (f == 0.0) continue;
            for (int64_t c = col; c < n; ++c) A[size_t(r) * n + c] -= f * A[size_t(col) * n + c];
            b[size_t(r)] -= f * b[size_t(col)];
        }
    }
    std::vector<double> x(static_cast<size_t>(n));
    for (int64_t r = n - 1; r >= 0; --r) {
        double acc = b[size_t(r)];
        for (int64_t c = r + 1; c < n; ++c) acc -= A[size_t(r) * n + c] * x[size_t(c)];
        x[size_t(r)] = acc / A[size_t(r) * n + r];
    }
    for (int64_t r = 0; r < n; ++r) out[cells[r]] = x[size_t(r)];
    return out;
}

}  // namespace

TEST_CASE("identity blend returns the target bit-exactly") {
    Rng rng = make_rng(31);
    Problem p = random_problem(12, 12, rng);
    p.source = p.target;
    const BlendResult r = poisson::blend(p.view());
    for (int64_t i = 0; i < p.target.size(); ++i) CHECK(r.image[i] == p.target[i]);
    CHECK(r.converged);
}

TEST_CASE("constant-offset source blends back to the target") {
    Rng rng = make_rng(32);
    Problem p = random_problem(12, 12, rng);
    p.source = p.target;
    for (int64_t i = 0; i < p.source.size(); ++i) p.source[i] += 0.25;
    const BlendResult r = poisson::blend(p.view());
    for (int64_t i = 0; i < p.target.size(); ++i)
        CHECK(std::abs(r.image[i] - p.target[i]) <= 1e-6);
}

TEST_CASE("blend matches the dense direct solve on random problems") {
    Rng rng = make_rng(33);
    for (int rep = 0; rep < 50; ++rep) {
        const Problem p = random_problem(12, 12, rng);
        const Tensor oracle = dense_blend(p);
        BlendOptions opt;
        opt.tol = 1e-10;
        const BlendResult r = poisson::blend(p.view(), opt);
        CHECK(r.converged);
        for (int64_t i = 0; i < oracle.size(); ++i)
            CHECK(std::abs(r.image[i] - oracle[i]) <= 1e-8);
    }
}

TEST_CASE("pixels outside the region are never modified") {
    Rng rng = make_rng(34);
    const Problem p = random_problem(16, 14, rng);
    const BlendResult r = poisson::blend(p.view());
    for (int64_t q = 0; q < p.target.size(); ++q)
        if (!p.region[size_t(q)]) CHECK(r.image[q] == p.target[q]);
    // border pixels are Dirichlet even when the gap touches them
    const int w = p.w;
    for (int x = 0; x < w; ++x) {
        CHECK(r.image[x] == p.target[x]);
        CHECK(r.image[int64_t(p.h - 1) * w + x] == p.target[int64_t(p.h - 1) * w + x]);
    }
}

TEST_CASE("solution is unique regardless of the starting point") {
    Rng rng = make_rng(35);
    const Problem p = random_problem(12, 12, rng);
    BlendOptions warm, cold;
    warm.tol = cold.tol = 1e-8;
    cold.zero_start = true;
    const BlendResult a = poisson::blend(p.view(), warm);
    const BlendResult b = poisson::blend(p.view(), cold);
    for (int64_t i = 0; i < a.image.size(); ++i)
        CHECK(std::abs(a.image[i] - b.image[i]) <= 10 * warm.tol);
}

TEST_CASE("harmonic blend obeys the discrete maximum principle") {
    // constant source means zero guidance: the solution is harmonic with
    // Dirichlet data, so it must stay inside the boundary value range
    Rng rng = make_rng(36);
    Problem p = random_problem(14, 14, rng);
    p.source.fill(0.5);
    const std::vector<uint8_t> omega = poisson::interior_region(p.view());
    const BlendResult r = poisson::blend(p.view());

    real lo = 1e30, hi = -1e30;
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x) {
            const int64_t q = int64_t(y) * p.w + x;
            if (omega[size_t(q)]) continue;
            // boundary values: non-Ω pixels adjacent to Ω
            const bool adj = (y > 0 && omega[size_t(q - p.w)]) ||
                             (y + 1 < p.h && omega[size_t(q + p.w)]) ||
                             (x > 0 && omega[size_t(q - 1)]) || (x + 1 < p.w && omega[size_t(q + 1)]);
            if (!adj) continue;
            lo = std::min(lo, p.target[q]);
            hi = std::max(hi, p.target[q]);
        }
    for (int64_t q = 0; q < p.target.size(); ++q)
        if (omega[size_t(q)]) {
            CHECK(r.image[q] >= lo - 1e-6);
            CHECK(r.image[q] <= hi + 1e-6);
        }
}

TEST_CASE("laplacian_residual oracle behaviour") {
    Rng rng = make_rng(37);
    const Problem p = random_problem(12, 12, rng);

    const Tensor exact = dense_blend(p);
    CHECK(poisson::laplacian_residual(exact, p.view()) <= 1e-10);

    // the unsolved target has a large residual on a problem with real gradients
    CHECK(poisson::laplacian_residual(p.target, p.view()) > 1e-6);

    Problem empty = p;
    empty.region.assign(empty.region.size(), 0);
    CHECK(poisson::laplacian_residual(p.target, empty.view()) == 0.0);
    CHECK_THROWS(poisson::blend(empty.view()));
}

TEST_CASE("gap confined to the border solves nothing and keeps the target") {
    Rng rng = make_rng(38);
    Problem p = random_problem(8, 8, rng);
    p.region.assign(p.region.size(), 0);
    for (int x = 0; x < p.w; ++x) p.region[size_t(x)] = 1;  // top row only
    const BlendResult r = poisson::blend(p.view());
    CHECK(r.omega_size == 0);
    for (int64_t i = 0; i < p.target.size(); ++i) CHECK(r.image[i] == p.target[i]);
}

TEST_CASE("residual history and csv dump") {
    Rng rng = make_rng(39);
    const Problem p = random_problem(12, 12, rng);
    BlendOptions opt;
    opt.record_history = true;
    const auto dir = std::filesystem::temp_directory_path() / "artinp_test_poisson";
    std::filesystem::create_directories(dir);
    opt.residual_csv = (dir / "residuals.csv").string();
    const BlendResult r = poisson::blend(p.view(), opt);
    CHECK(r.residual_history.size() >= 1);
    CHECK(r.residual <= opt.tol);
    std::ifstream f(opt.residual_csv);
    REQUIRE(bool(f));
    std::string header;
    std::getline(f, header);
    CHECK(header == "iteration,residual_inf");
    int lines = 0;
    for (std::string line; std::getline(f, line);) ++lines;
    CHECK(lines == int(r.residual_history.size()));
}
