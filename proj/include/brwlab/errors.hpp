#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace brwlab {

enum class errc {
  non_finite,
  not_boundary,
  no_common_tilt_point,
  lattice_incompatible,
  lattice_mismatch,
  horizon_exceeded,
  enumeration_too_large,
  budget_exceeded,
  population_cap_exceeded,
  count_overflow,
  normalizer_mismatch,
  too_few_uncensored,
  too_few_samples,
  degenerate_binning,
  grid_too_small,
  unsupported_tail,
  bad_config,
  contract_violation,
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::non_finite: return "NonFinite";
    case errc::not_boundary: return "NotBoundary";
    case errc::no_common_tilt_point: return "NoCommonTiltPoint";
    case errc::lattice_incompatible: return "LatticeIncompatible";
    case errc::lattice_mismatch: return "LatticeMismatch";
    case errc::horizon_exceeded: return "HorizonExceeded";
    case errc::enumeration_too_large: return "EnumerationTooLarge";
    case errc::budget_exceeded: return "BudgetExceeded";
    case errc::population_cap_exceeded: return "PopulationCapExceeded";
    case errc::count_overflow: return "CountOverflow";
    case errc::normalizer_mismatch: return "NormalizerMismatch";
    case errc::too_few_uncensored: return "TooFewUncensored";
    case errc::too_few_samples: return "TooFewSamples";
    case errc::degenerate_binning: return "DegenerateBinning";
    case errc::grid_too_small: return "GridTooSmall";
    case errc::unsupported_tail: return "UnsupportedTail";
    case errc::bad_config: return "BadConfig";
    case errc::contract_violation: return "ContractViolation";
  }
  return "Unknown";
}

/// Library error with a machine-readable code plus optional numeric payload
/// (e.g. the best error bound reached before HorizonExceeded).
class Error : public std::runtime_error {
 public:
  Error(errc code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  Error(errc code, std::string msg, std::vector<std::pair<std::string, double>> details)
      : std::runtime_error(std::move(msg)), code_(code), details_(std::move(details)) {}

  errc code() const { return code_; }
  const std::vector<std::pair<std::string, double>>& details() const { return details_; }
  const char* code_name() const { return errc_name(code_); }

 private:
  errc code_;
  std::vector<std::pair<std::string, double>> details_;
};

[[noreturn]] inline void fail(errc c, const std::string& msg) { throw Error(c, msg); }

[[noreturn]] inline void fail(errc c, const std::string& msg,
                              std::vector<std::pair<std::string, double>> details) {
  throw Error(c, msg, std::move(details));
}

}  // namespace brwlab
