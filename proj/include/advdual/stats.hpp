#pragma once

#include <span>
#include <vector>

namespace advdual {

double mean(std::span<const double> v);
double median(std::vector<double> v);  // by value: sorts a copy

// Spearman rank correlation with average ranks for ties; NaN on degenerate input.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace advdual
