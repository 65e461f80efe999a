#pragma once

#include <cmath>
#include <string>

#include "ccgf/errors.hpp"

// Unit handling. The library computes in an atomic-like system with hbar = 1:
// masses in electron masses, lengths in bohr, energies in hartree. Everything
// user-facing (config files, CLI, public operation signatures) speaks
// cm^-1 / angstrom / amu; conversions happen once at the API boundary through
// the single constants table below.

namespace ccgf::units {

// Source of truth for all conversions. Tests use the same table.
inline constexpr double electron_masses_per_amu = 1822.888486;
inline constexpr double bohr_per_angstrom = 1.8897259886;
inline constexpr double cm1_per_hartree = 219474.6313632;

enum class Unit { energy_cm1, length_angstrom, mass_amu };

inline const char* unit_name(Unit u) {
  switch (u) {
    case Unit::energy_cm1: return "energy_cm1";
    case Unit::length_angstrom: return "length_angstrom";
    case Unit::mass_amu: return "mass_amu";
  }
  return "?";
}

inline double to_internal(double value, Unit u) {
  if (!std::isfinite(value)) {
    throw InvalidInputError("to_internal: value is not finite");
  }
  switch (u) {
    case Unit::energy_cm1: return value / cm1_per_hartree;
    case Unit::length_angstrom: return value * bohr_per_angstrom;
    case Unit::mass_amu: return value * electron_masses_per_amu;
  }
  throw InvalidInputError("to_internal: unknown unit tag");
}

inline double from_internal(double value, Unit u) {
  if (!std::isfinite(value)) {
    throw InvalidInputError("from_internal: value is not finite");
  }
  switch (u) {
    case Unit::energy_cm1: return value * cm1_per_hartree;
    case Unit::length_angstrom: return value / bohr_per_angstrom;
    case Unit::mass_amu: return value / electron_masses_per_amu;
  }
  throw InvalidInputError("from_internal: unknown unit tag");
}

// Shorthands for the hot paths.
inline double energy_in(double cm1) { return cm1 / cm1_per_hartree; }
inline double energy_out(double e) { return e * cm1_per_hartree; }
inline double length_in(double angstrom) { return angstrom * bohr_per_angstrom; }
inline double length_out(double x) { return x / bohr_per_angstrom; }
inline double mass_in(double amu) { return amu * electron_masses_per_amu; }
inline double mass_out(double m) { return m / electron_masses_per_amu; }

}  // namespace ccgf::units
