#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "artinp/tensor.hpp"

namespace artinp::poisson {

// Seamless cloning of `source` into `target` over `region` (the gap). All
// images are (h, w) and expected in the UNIT01 domain so the tolerance is
// intensity-scale independent.
struct BlendProblem {
    const Tensor* source = nullptr;
    const Tensor* target = nullptr;
    const uint8_t* region = nullptr;  // row-major h*w, 1 inside the gap
    int h = 0, w = 0;
};

struct BlendOptions {
    real tol = 1e-6;          // stop when ‖Af − b‖∞ ≤ tol
    int64_t max_iters = -1;   // < 0 means 10·|Ω|
    bool zero_start = false;  // start CG from zero instead of the target values
    bool record_history = false;
    std::string residual_csv;  // when nonempty, dump per-iteration residuals
};

struct BlendResult {
    Tensor image;        // target with Ω replaced by the solution
    real residual = 0;   // final true residual ‖Af − b‖∞
    int64_t iterations = 0;
    bool converged = true;
    int64_t omega_size = 0;
    std::vector<real> residual_history;
};

// The effective solve domain Ω: the gap clipped away from the 1-pixel image
// border (border pixels always act as Dirichlet boundary).
std::vector<uint8_t> interior_region(const BlendProblem& p);

// Solves the discrete Poisson equation with guidance field ∇source and
// Dirichlet boundary = target values, via conjugate gradient on the 5-point
// Laplacian (symmetric positive definite). Pixels outside Ω are returned
// bit-exactly unchanged. Throws on an empty gap; non-convergence is reported
// in the result, not thrown.
BlendResult blend(const BlendProblem& p, const BlendOptions& opt = {});

// ‖Af − b‖∞ over Ω for a candidate full-grid solution f (0 when Ω is empty).
real laplacian_residual(const Tensor& f, const BlendProblem& p);

}  // namespace artinp::poisson
