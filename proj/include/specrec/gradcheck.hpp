#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "specrec/tensor.hpp"

namespace specrec {

/// Norm-wise relative error between the analytic gradient of
/// sum(w * f()) (random fixed w) with respect to every tensor in `wrt` and
/// its central finite difference with step `h`. `f` must rebuild its graph
/// from the current values of `wrt` on every call.
double gradient_error(const std::function<ad::Tensor<double>()>& f, std::vector<ad::Tensor<double>> wrt,
                      std::mt19937_64& rng, double h = 1e-4);

struct GradCheckOptions {
    std::size_t trials = 20;
    double step = 1e-4;
    double tolerance = 1e-3;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    std::string op;
    std::size_t trials = 0;
    double max_error = 0.0;
    bool passed = false;
};

// Every differentiable op, the losses and a residual block, each over random shapes.
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options = {});
std::string gradcheck_csv(const std::vector<GradCheckResult>& results); // op,trials,max_rel_error,passed

} // namespace specrec
