#include "artinp/poisson.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "artinp/kernels.hpp"

namespace artinp::poisson {

namespace {

void validate(const BlendProblem& p) {
    if (!p.source || !p.target || !p.region) throw std::invalid_argument("blend: null problem field");
    if (p.h <= 0 || p.w <= 0) throw std::invalid_argument("blend: empty image");
    if (p.source->size() != int64_t(p.h) * p.w || !p.source->same_shape(*p.target))
        throw std::invalid_argument("blend: source/target size mismatch");
}

// b_q = Σ_{r∈N(q)} (s_q − s_r) + Σ_{r∈N(q), r∉Ω} t_r, for q ∈ Ω (interior, so
// every q has all four neighbours).
std::vector<real> assemble_rhs(const BlendProblem& p, const std::vector<uint8_t>& omega) {
    const Tensor& s = *p.source;
    const Tensor& t = *p.target;
    std::vector<real> b(size_t(p.h) * p.w, 0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < p.h; ++i) {
        for (int j = 0; j < p.w; ++j) {
            const int64_t q = int64_t(i) * p.w + j;
            if (!omega[q]) continue;
            real acc = 4 * s[q] - s[q - p.w] - s[q + p.w] - s[q - 1] - s[q + 1];
            if (!omega[q - p.w]) acc += t[q - p.w];
            if (!omega[q + p.w]) acc += t[q + p.w];
            if (!omega[q - 1]) acc += t[q - 1];
            if (!omega[q + 1]) acc += t[q + 1];
            b[q] = acc;
        }
    }
    return b;
}

real masked_inf_norm(const std::vector<real>& v, const std::vector<uint8_t>& omega) {
    real m = 0;
#pragma omp parallel for reduction(max : m) schedule(static)
    for (int64_t i = 0; i < int64_t(v.size()); ++i)
        if (omega[i]) m = std::max(m, std::abs(v[i]));
    return m;
}

real masked_dot(const std::vector<real>& a, const std::vector<real>& b,
                const std::vector<uint8_t>& omega) {
    real s = 0;
#pragma omp parallel for reduction(+ : s) schedule(static)
    for (int64_t i = 0; i < int64_t(a.size()); ++i)
        if (omega[i]) s += a[i] * b[i];
    return s;
}

}  // namespace

std::vector<uint8_t> interior_region(const BlendProblem& p) {
    std::vector<uint8_t> omega(size_t(p.h) * p.w, 0);
    for (int i = 1; i + 1 < p.h; ++i)
        for (int j = 1; j + 1 < p.w; ++j) {
            const int64_t q = int64_t(i) * p.w + j;
            omega[q] = p.region[q] ? 1 : 0;
        }
    return omega;
}

BlendResult blend(const BlendProblem& p, const BlendOptions& opt) {
    validate(p);
    bool any_gap = false;
    for (int64_t q = 0; q < int64_t(p.h) * p.w; ++q) any_gap = any_gap || p.region[q];
    if (!any_gap) throw std::invalid_argument("blend: empty gap region");

    const std::vector<uint8_t> omega = interior_region(p);
    int64_t n_omega = 0;
    for (uint8_t v : omega) n_omega += v;

    BlendResult res;
    res.image = *p.target;
    res.omega_size = n_omega;
    if (n_omega == 0) return res;  // gap entirely on the border: all Dirichlet

    const int64_t npix = int64_t(p.h) * p.w;
    const std::vector<real> b = assemble_rhs(p, omega);

    // CG state lives on the full grid; entries outside Ω stay zero and the
    // region-gated Laplacian never reads or writes them.
    std::vector<real> x(size_t(npix), 0), r(size_t(npix), 0), d(size_t(npix), 0),
        ad(size_t(npix), 0);
    if (!opt.zero_start)
        for (int64_t q = 0; q < npix; ++q)
            if (omega[q]) x[q] = (*p.target)[q];

    kernels::laplacian_apply(x.data(), omega.data(), p.h, p.w, ad.data());
#pragma omp parallel for schedule(static)
    for (int64_t q = 0; q < npix; ++q)
        if (omega[q]) {
            r[q] = b[q] - ad[q];
            d[q] = r[q];
        }

    const int64_t max_iters = opt.max_iters >= 0 ? opt.max_iters : 10 * n_omega;
    const bool history = opt.record_history || !opt.residual_csv.empty();
    real rs = masked_dot(r, r, omega);
    real rinf = masked_inf_norm(r, omega);
    if (history) res.residual_history.push_back(rinf);

    int64_t it = 0;
    while (rinf > opt.tol && it < max_iters) {
        kernels::laplacian_apply(d.data(), omega.data(), p.h, p.w, ad.data());
        const real dad = masked_dot(d, ad, omega);
        if (dad <= 0) break;  // numerically exhausted; A is SPD so this is roundoff
        const real alpha = rs / dad;
#pragma omp parallel for schedule(static)
        for (int64_t q = 0; q < npix; ++q)
            if (omega[q]) {
                x[q] += alpha * d[q];
                r[q] -= alpha * ad[q];
            }
        const real rs_next = masked_dot(r, r, omega);
        const real beta = rs_next / rs;
        rs = rs_next;
#pragma omp parallel for schedule(static)
        for (int64_t q = 0; q < npix; ++q)
            if (omega[q]) d[q] = r[q] + beta * d[q];
        rinf = masked_inf_norm(r, omega);
        ++it;
        if (history) res.residual_history.push_back(rinf);
    }

    for (int64_t q = 0; q < npix; ++q)
        if (omega[q]) res.image[q] = x[q];

    res.iterations = it;
    res.residual = laplacian_residual(res.image, p);
    res.converged = res.residual <= opt.tol;

    if (!opt.residual_csv.empty()) {
        std::ofstream f(opt.residual_csv, std::ios::trunc);
        f << "iteration,residual_inf\n";
        for (size_t i = 0; i < res.residual_history.size(); ++i)
            f << i << "," << res.residual_history[i] << "\n";
    }
    return res;
}

real laplacian_residual(const Tensor& f, const BlendProblem& p) {
    validate(p);
    if (!f.same_shape(*p.target))
        throw std::invalid_argument("laplacian_residual: f size mismatch");
    const std::vector<uint8_t> omega = interior_region(p);
    const int64_t npix = int64_t(p.h) * p.w;
    std::vector<real> af(size_t(npix), 0);
    kernels::laplacian_apply(f.data(), omega.data(), p.h, p.w, af.data());
    const std::vector<real> b = assemble_rhs(p, omega);
    real m = 0;
    for (int64_t q = 0; q < npix; ++q)
        if (omega[q]) m = std::max(m, std::abs(af[q] - b[q]));
    return m;
}

}  // namespace artinp::poisson
