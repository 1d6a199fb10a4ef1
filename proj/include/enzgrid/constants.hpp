// constants.hpp - physical constants and SI unit parsing

#pragma once

#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

#include "error.hpp"

namespace enzgrid {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kC0 = 299792458.0;            // m/s
inline constexpr double kMu0 = 1.25663706212e-6;      // H/m
inline constexpr double kEps0 = 1.0 / (kMu0 * kC0 * kC0);
inline constexpr double kEta0 = kMu0 * kC0;           // ohm
inline constexpr double kHbar = 1.054571817e-34;      // J s
inline constexpr double kElectronVolt = 1.602176634e-19;  // J

/// Angular frequency of a photon with the given energy in eV.
inline double ev_to_omega(double ev) { return ev * kElectronVolt / kHbar; }

inline double wavelength_to_omega(double lambda) { return 2.0 * kPi * kC0 / lambda; }
inline double omega_to_wavelength(double omega) { return 2.0 * kPi * kC0 / omega; }

enum class Quantity { Length, Frequency, Time, Area };

namespace detail {

struct Suffix {
    std::string_view text;
    Quantity kind;
    double scale;
};

// Longest suffixes first so "mm" wins over "m".
inline constexpr Suffix kSuffixes[] = {
    {"um^2", Quantity::Area, 1e-12}, {"nm^2", Quantity::Area, 1e-18},
    {"m^2", Quantity::Area, 1.0},
    {"rad/s", Quantity::Frequency, 1.0},
    {"THz", Quantity::Frequency, 2.0 * kPi * 1e12},
    {"GHz", Quantity::Frequency, 2.0 * kPi * 1e9},
    {"Hz", Quantity::Frequency, 2.0 * kPi},
    {"eV", Quantity::Frequency, 0.0},  // handled specially
    {"nm", Quantity::Length, 1e-9}, {"um", Quantity::Length, 1e-6},
    {"mm", Quantity::Length, 1e-3}, {"cm", Quantity::Length, 1e-2},
    {"fs", Quantity::Time, 1e-15}, {"ps", Quantity::Time, 1e-12},
    {"ns", Quantity::Time, 1e-9},
    {"m", Quantity::Length, 1.0}, {"s", Quantity::Time, 1.0},
};

}  // namespace detail

/// Parses "310nm", "2.089 um", "1.4mm", "193THz", "1.86eV" or a bare number
/// into SI base units (frequencies become rad/s). A bare number is taken as
/// already being in SI.
inline double parse_quantity(std::string_view text, Quantity expected) {
    auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    };
    std::string_view s = trim(text);
    for (const auto& suf : detail::kSuffixes) {
        if (s.size() <= suf.text.size() || !s.ends_with(suf.text)) continue;
        std::string number(trim(s.substr(0, s.size() - suf.text.size())));
        std::size_t used = 0;
        double value = 0.0;
        try {
            value = std::stod(number, &used);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Schema, "cannot parse quantity '" + std::string(text) + "'");
        }
        if (used != number.size())
            throw Error(ErrorKind::Schema, "cannot parse quantity '" + std::string(text) + "'");
        if (suf.kind != expected)
            throw Error(ErrorKind::Schema, "unit '" + std::string(suf.text) + "' has the wrong dimension in '" +
                                               std::string(text) + "'");
        if (suf.text == "eV") return ev_to_omega(value);
        return value * suf.scale;
    }
    std::string number(s);
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(number, &used);
    } catch (const std::exception&) {
        throw Error(ErrorKind::Schema, "cannot parse quantity '" + std::string(text) + "'");
    }
    if (used != number.size()) throw Error(ErrorKind::Schema, "unknown unit in '" + std::string(text) + "'");
    return value;
}

}  // namespace enzgrid
