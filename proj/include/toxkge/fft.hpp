#pragma once

#include <span>
#include <vector>

namespace toxkge::fft {

/// c_i = sum_j a_j * b_{(i+j) mod n}, computed as F^-1[conj(F(a)) . F(b)].
std::vector<double> circular_correlation(std::span<const double> a, std::span<const double> b);

/// c_i = sum_j a_j * b_{(i-j) mod n}, computed as F^-1[F(a) . F(b)].
std::vector<double> circular_convolution(std::span<const double> a, std::span<const double> b);

}  // namespace toxkge::fft
