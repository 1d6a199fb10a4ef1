// fit_presets - regenerates the bundled material presets in data/presets.
//
//   fit_presets <output-dir>
//
// Each preset is fitted in closed form from a target permittivity at its
// ENZ wavelength; the bundled files are the output of this program.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "enzgrid/materials.hpp"

namespace mat = enzgrid::materials;
using enzgrid::kC0;
using enzgrid::kPi;

namespace {

double wavenumber_to_omega(double per_cm) { return 2.0 * kPi * kC0 * 100.0 * per_cm; }

mat::DispersionModel silicon_carbide() {
    // Phonon resonance and high-frequency permittivity from standard 6H/4H-SiC
    // literature values; damping and strength solved for eps(10.3 um) = 0.1i.
    mat::DispersionModel base;
    base.eps_infinity = 6.52;
    const double omega = enzgrid::wavelength_to_omega(10.3e-6);
    const auto term = mat::fit_lorentz(base, omega, wavenumber_to_omega(793.0), 0.1);
    mat::DispersionModel m = base;
    m.name = "sic";
    m.lorentz_terms = {term};
    m.validity = {enzgrid::wavelength_to_omega(12.0e-6), enzgrid::wavelength_to_omega(8.5e-6)};
    m.fitted = true;
    m.notes = "single Lorentz phonon; eps_inf and TO frequency (793 cm^-1) fixed, strength and damping fitted to "
              "eps = 0 + 0.1i at 10.3 um";
    return m;
}

mat::DispersionModel titanium_nitride() {
    // Free-electron part with a damped interband oscillator just above the
    // crossing; the oscillator is fitted to eps(667 nm) = 4i.
    mat::DispersionModel base;
    base.eps_infinity = 4.5;
    base.drude_plasma_frequency = enzgrid::ev_to_omega(1.5);
    base.drude_damping = enzgrid::ev_to_omega(0.15);
    const double omega = enzgrid::wavelength_to_omega(667e-9);
    const auto term = mat::fit_lorentz(base, omega, enzgrid::ev_to_omega(1.70), 4.0);
    mat::DispersionModel m = base;
    m.name = "tin";
    m.lorentz_terms = {term};
    m.validity = {enzgrid::wavelength_to_omega(1000e-9), enzgrid::wavelength_to_omega(450e-9)};
    m.fitted = true;
    m.notes = "Drude (wp 1.5 eV, gamma 0.15 eV) plus Lorentz at 1.70 eV; eps_inf 4.5; oscillator strength and damping "
              "fitted to eps = 0 + 4i at 667 nm";
    return m;
}

mat::DispersionModel illustrative_enz() {
    mat::DispersionModel m = mat::fit_drude(1.0, enzgrid::wavelength_to_omega(780e-9), {1e-3, 1e-3});
    m.name = "enz";
    m.validity = {enzgrid::wavelength_to_omega(1000e-9), enzgrid::wavelength_to_omega(600e-9)};
    m.notes = "lossy Drude medium fitted to eps = 1e-3 + 1e-3i at 780 nm (illustrative near-zero permittivity)";
    return m;
}

mat::DispersionModel gold() {
    mat::DispersionModel m;
    m.name = "gold";
    m.eps_infinity = 1.0;
    m.drude_plasma_frequency = 1.37e16;
    m.drude_damping = 1.0e14;
    m.validity = {enzgrid::wavelength_to_omega(2000e-9), enzgrid::wavelength_to_omega(500e-9)};
    m.fitted = false;
    m.notes = "free-electron gold (wp 1.37e16 rad/s, gamma 1e14 rad/s); interband terms omitted";
    return m;
}

void write(const std::filesystem::path& dir, const mat::DispersionModel& m) {
    std::ofstream out(dir / (m.name + ".json"));
    out << mat::model_to_json(m).dump(2) << "\n";
}

// Samples the TiN model on a wavelength grid as a stand-in for a measured table.
void write_tin_table(const std::filesystem::path& dir, const mat::DispersionModel& m) {
    std::ofstream out(dir / "tin_table.csv");
    out << "wavelength_m,eps_re,eps_im\n";
    char line[128];
    for (int nm = 450; nm <= 1000; nm += 5) {
        const auto eps = mat::permittivity(m, enzgrid::wavelength_to_omega(nm * 1e-9));
        std::snprintf(line, sizeof line, "%.3e,%.10g,%.10g\n", nm * 1e-9, eps.real(), eps.imag());
        out << line;
    }
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: fit_presets <output-dir>\n";
        return 2;
    }
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);
    const auto tin = titanium_nitride();
    for (const auto& m : {silicon_carbide(), tin, illustrative_enz(), gold()}) write(dir, m);
    write_tin_table(dir, tin);
    return 0;
}
