#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "bbecog/common.hpp"

namespace bbecog {

// Linear-phase band-pass specification. n_taps must be odd (type-I symmetry).
struct FilterSpec {
    double f_lo = 0;
    double f_hi = 0;
    double sample_rate = 1000.0;
    std::size_t n_taps = 501;
};

// Transition width on each side of the passband; stopbands begin this far out.
inline constexpr double kTransitionHz = 5.0;

// Least-squares FIR design on the cosine basis with an exact DC zero.
// Returns n_taps coefficients, symmetric about the center tap.
std::vector<double> design_bandpass(const FilterSpec& spec);

// Magnitude response |H(f)| of a coefficient vector at one frequency.
double magnitude_response(const std::vector<double>& h, double f_hz, double sample_rate);

// The frequency sweep schedule: 5 Hz-wide bands starting at 1 Hz, advancing
// 3 Hz while the start frequency stays below 300 Hz.
std::vector<FilterSpec> build_filter_bank(double sample_rate = 1000.0, std::size_t n_taps = 501);

// Coefficient dump: header line with the spec fields, then one coefficient
// per line (full double precision).
std::string coefficients_csv(const FilterSpec& spec, const std::vector<double>& h);

// In-place radix-2 FFT over a power-of-two-length buffer.
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse);

// The forward-FFT stage of zero-phase filtering, precomputed once per signal
// block. The reflection reach and transform length depend only on t and pad,
// so one spectra block serves every filter with the same tap count — a band
// sweep then pays only the inverse transform per band.
struct RowSpectra {
    std::size_t n_rows = 0;
    std::size_t t = 0;
    std::size_t pad = 0;
    std::size_t nfft = 0;
    std::vector<std::vector<std::complex<double>>> packed;  // rows two at a time
};

RowSpectra precompute_row_spectra(const float* rows, std::size_t n_rows, std::size_t t,
                                  std::size_t pad);

// Zero-phase application of a symmetric FIR filter: equivalent to running the
// filter forward and backward (net response |H|^2, no delay). Rows are
// extended by symmetric reflection over the full kernel reach (n_taps - 1
// samples per side) so short windows see no truncation transients.
class ZeroPhaseFilter {
  public:
    explicit ZeroPhaseFilter(std::vector<double> h);

    // Direct time-domain evaluation; the contract implementation.
    void apply(const float* rows, std::size_t n_rows, std::size_t t, float* out) const;
    std::vector<float> apply(const std::vector<float>& rows, std::size_t t) const;

    // FFT evaluation, exactly matching apply() up to double rounding. Used by
    // the 100-band sweep where the direct path would dominate the runtime.
    void apply_fft(const float* rows, std::size_t n_rows, std::size_t t, float* out) const;
    std::vector<float> apply_fft(const std::vector<float>& rows, std::size_t t) const;

    // The inverse stage over cached spectra; bitwise-identical to apply_fft
    // on the same rows. Requires spectra built with this filter's pad width.
    void apply_spectra(const RowSpectra& spectra, float* out) const;

    std::size_t pad() const { return pad_; }
    const std::vector<double>& autocorr() const { return g_; }

  private:
    std::vector<double> reflect_extend(const float* row, std::size_t t) const;

    std::vector<double> h_;
    std::vector<double> g_;  // h correlated with itself; lag d at g_[d + n_taps - 1]
    std::size_t pad_ = 0;    // reflection extension per side
};

}  // namespace bbecog
