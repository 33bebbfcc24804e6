#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semicausal/estimators.hpp"
#include "semicausal/oracle.hpp"
#include "semicausal/simulation.hpp"

namespace semicausal {

// Machine-readable reports: stable key order, 17 significant digits.
std::string to_json(const EstimateReport& report);
std::string to_json(const MonteCarloSummary& summary, const DGPSpec& spec);
std::string to_json(const EifCheckReport& report, std::size_t atoms, double psi0,
                    double ipw_variance, double step, std::uint64_t seed);
std::string to_json(const RateTable& table, std::uint64_t seed);
std::string to_json(const DrTable& table, std::uint64_t seed);

std::string per_rep_csv(const std::vector<PerRepRecord>& records);

void append_dgp(class JsonWriter& w, const DGPSpec& spec);

}  // namespace semicausal
