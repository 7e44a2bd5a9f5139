#pragma once

#include "arcade/coefficients.hpp"
#include "arcade/rap.hpp"

namespace arcade {

// Markovian Brownian AP on three dates whose f_0 stays active on the second arc
CoefficientSet nonstarcade_coefficients(const Partition& p);

// signal of the non-standard nearly-Markov RAP built on nonstarcade_coefficients
CoefficientSet exf_signal_coefficients(const Partition& p);

// f_2 plus a hat on [T_0, T_1]; breaks g_2 = 0 on [T_0, T_1]
CoefficientSet violating_signal_coefficients(const Partition& p);

// Brownian driver, nonstarcade noise, exf signal, independent uniform +-1 targets
RapConfig exf_rap(const Partition& p);

}  // namespace arcade
