#pragma once

#include <string>
#include <vector>

namespace latcomp {

// The 40 canonical forecast input channels, in the fixed documented order:
// U, V, Z, T, Q at 50/200/500/700/850/925/1000 hPa (variable-major), then
// the five surface channels T2M, TP, U10M, V10M, MSL.
const std::vector<std::string>& forecast_input_names();

// Channel names for synthetic pair datasets. n == 40 returns the canonical
// list; other widths keep a strong signal channel first, then the target
// variable, then generic distractor names.
std::vector<std::string> synthetic_channel_names(int n, const std::string& target);

}  // namespace latcomp
