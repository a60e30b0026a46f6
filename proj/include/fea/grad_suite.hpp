#pragma once

// Finite-difference checks over every differentiable op of the model, on
// random small shapes. Shared by the `gradcheck` subcommand and the tests.

#include <cstdint>
#include <string>
#include <vector>

#include "fea/grad_check.hpp"

namespace fea {

// Op names in check order.
const std::vector<std::string>& grad_suite_ops();

// `shapes` random shape draws per op; reports are named "<op> <shape>".
template <class T>
std::vector<nn::GradCheckReport> run_grad_suite(uint64_t seed, int shapes);

// Name of the op a report belongs to (the part before the first space).
std::string grad_report_op(const nn::GradCheckReport& r);

}  // namespace fea
