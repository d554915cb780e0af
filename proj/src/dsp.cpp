#include "bbecog/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace bbecog {

namespace {

constexpr double kPi = std::numbers::pi;

// Integral of cos(k*w) over [w1, w2].
double cos_integral(long k, double w1, double w2) {
    if (k == 0) return w2 - w1;
    return (std::sin(k * w2) - std::sin(k * w1)) / static_cast<double>(k);
}

// Gaussian elimination with partial pivoting; a is n x n row-major.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, std::size_t n) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        }
        if (std::abs(a[piv * n + col]) < 1e-14) {
            throw ConfigError("filter design system is singular");
        }
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        const double d = a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / d;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t c = i + 1; c < n; ++c) acc -= a[i * n + c] * x[c];
        x[i] = acc / a[i * n + i];
    }
    return x;
}

}  // namespace

std::vector<double> design_bandpass(const FilterSpec& spec) {
    const double nyquist = spec.sample_rate / 2.0;
    if (!(spec.f_lo > 0.0) || !(spec.f_hi > spec.f_lo)) {
        throw ConfigError("design_bandpass: need 0 < f_lo < f_hi");
    }
    if (spec.f_hi >= nyquist) {
        throw ConfigError("design_bandpass: f_hi " + std::to_string(spec.f_hi) +
                          " Hz reaches the Nyquist frequency " + std::to_string(nyquist) + " Hz");
    }
    if (spec.n_taps % 2 == 0 || spec.n_taps < 3) {
        throw ConfigError("design_bandpass: n_taps must be odd and >= 3");
    }

    const double to_w = 2.0 * kPi / spec.sample_rate;  // Hz -> rad/sample
    // Weighted bands: (w1, w2, desired, weight); the gaps between bands are
    // left out of the objective. The optimized stopbands start a little inside
    // the transitions so the least-squares edge ripple peaks before the
    // stopband proper, and they carry extra weight because the response
    // targets leave less slack there (<= 0.05) than in the passband (>= 0.9).
    constexpr double kStopMarginHz = 1.5;
    constexpr double kStopWeight = 4.0;
    // The passband edge is inset only where an optimized stopband sits next to
    // it; against a free edge (a band hugging DC or Nyquist) the full edge
    // keeps the fit pulled up early.
    const bool lower_stop = spec.f_lo - kTransitionHz + kStopMarginHz > 0.0;
    const bool upper_stop = spec.f_hi + kTransitionHz - kStopMarginHz < nyquist;
    const double inset_cap = std::min(1.0, (spec.f_hi - spec.f_lo) / 4.0);
    struct Band {
        double w1, w2, desired, weight;
    };
    std::vector<Band> bands;
    if (lower_stop) {
        bands.push_back({0.0, (spec.f_lo - kTransitionHz + kStopMarginHz) * to_w, 0.0,
                         kStopWeight});
    }
    bands.push_back({(spec.f_lo + (lower_stop ? inset_cap : 0.0)) * to_w,
                     (spec.f_hi - (upper_stop ? inset_cap : 0.0)) * to_w, 1.0, 1.0});
    if (upper_stop) {
        bands.push_back(
            {(spec.f_hi + kTransitionHz - kStopMarginHz) * to_w, kPi, 0.0, kStopWeight});
    }

    // Type-I amplitude H(w) = sum_m b_m cos(m w), m = 0..M. Least squares over
    // the bands gives normal equations Q b = d with closed-form integrals;
    // one extra Lagrange row pins H(0) = 0 so the DC response is exactly zero.
    const std::size_t M = (spec.n_taps - 1) / 2;
    const std::size_t n = M + 2;  // b coefficients + multiplier
    std::vector<double> a(n * n, 0.0), rhs(n, 0.0);
    for (std::size_t m = 0; m <= M; ++m) {
        for (std::size_t k = m; k <= M; ++k) {
            double q = 0.0;
            for (const Band& band : bands) {
                q += band.weight * 0.5 *
                     (cos_integral(static_cast<long>(m) - static_cast<long>(k), band.w1,
                                   band.w2) +
                      cos_integral(static_cast<long>(m + k), band.w1, band.w2));
            }
            a[m * n + k] = q;
            a[k * n + m] = q;
        }
        double d = 0.0;
        for (const Band& band : bands) {
            if (band.desired != 0.0) {
                d += band.weight * band.desired *
                     cos_integral(static_cast<long>(m), band.w1, band.w2);
            }
        }
        rhs[m] = d;
        a[m * n + M + 1] = 1.0;  // dH(0)/db_m = cos(0) = 1
        a[(M + 1) * n + m] = 1.0;
    }
    rhs[M + 1] = 0.0;

    const std::vector<double> sol = solve_dense(std::move(a), std::move(rhs), n);

    std::vector<double> h(spec.n_taps, 0.0);
    h[M] = sol[0];
    for (std::size_t m = 1; m <= M; ++m) {
        h[M + m] = 0.5 * sol[m];
        h[M - m] = 0.5 * sol[m];
    }
    return h;
}

double magnitude_response(const std::vector<double>& h, double f_hz, double sample_rate) {
    const double w = 2.0 * kPi * f_hz / sample_rate;
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < h.size(); ++k) {
        re += h[k] * std::cos(w * static_cast<double>(k));
        im -= h[k] * std::sin(w * static_cast<double>(k));
    }
    return std::sqrt(re * re + im * im);
}

std::vector<FilterSpec> build_filter_bank(double sample_rate, std::size_t n_taps) {
    std::vector<FilterSpec> bank;
    for (double f_lo = 1.0; f_lo < 300.0; f_lo += 3.0) {
        bank.push_back({f_lo, f_lo + 5.0, sample_rate, n_taps});
    }
    return bank;
}

std::string coefficients_csv(const FilterSpec& spec, const std::vector<double>& h) {
    std::ostringstream os;
    os.precision(17);
    os << "# f_lo_hz=" << spec.f_lo << " f_hi_hz=" << spec.f_hi
       << " sample_rate_hz=" << spec.sample_rate << " n_taps=" << spec.n_taps << "\n";
    os << "coefficient\n";
    for (double v : h) os << v << "\n";
    return os.str();
}

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) {
        throw std::invalid_argument("fft_radix2: length must be a power of two");
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

ZeroPhaseFilter::ZeroPhaseFilter(std::vector<double> h) : h_(std::move(h)) {
    if (h_.empty()) throw ConfigError("ZeroPhaseFilter: empty coefficients");
    const std::size_t N = h_.size();
    // Reflect over the whole forward-backward kernel reach: every output
    // sample then reads real (mirrored) data, never a zero extension, which
    // keeps stopband rejection intact on windows shorter than the filter.
    pad_ = N - 1;
    // g[d] = sum_k h[k] h[k+d]: the zero-phase kernel of the forward-backward
    // pass, stored for lags -(N-1)..(N-1).
    g_.assign(2 * N - 1, 0.0);
    for (long d = -(long(N) - 1); d <= long(N) - 1; ++d) {
        double acc = 0.0;
        const long k0 = std::max<long>(0, -d);
        const long k1 = std::min<long>(long(N), long(N) - d);
        for (long k = k0; k < k1; ++k) acc += h_[k] * h_[k + d];
        g_[d + long(N) - 1] = acc;
    }
}

namespace {

std::vector<double> reflect_extend_row(const float* row, std::size_t t, std::size_t pad) {
    const long T = static_cast<long>(t);
    std::vector<double> ext(t + 2 * pad);
    // Triangle-wave index fold: symmetric reflection without repeating the
    // edge sample, valid for any pad length.
    auto fold = [T](long v) -> long {
        if (T == 1) return 0;
        const long period = 2 * (T - 1);
        long m = v % period;
        if (m < 0) m += period;
        return m < T ? m : period - m;
    };
    for (long i = 0; i < static_cast<long>(ext.size()); ++i) {
        ext[i] = row[fold(i - static_cast<long>(pad))];
    }
    return ext;
}

}  // namespace

std::vector<double> ZeroPhaseFilter::reflect_extend(const float* row, std::size_t t) const {
    return reflect_extend_row(row, t, pad_);
}

void ZeroPhaseFilter::apply(const float* rows, std::size_t n_rows, std::size_t t,
                            float* out) const {
    if (t == 0) return;
    const long N = static_cast<long>(h_.size());
    const long L = static_cast<long>(t + 2 * pad_);
    for (std::size_t r = 0; r < n_rows; ++r) {
        const std::vector<double> ext = reflect_extend(rows + r * t, t);
        for (long i = 0; i < static_cast<long>(t); ++i) {
            const long center = i + static_cast<long>(pad_);
            double acc = 0.0;
            const long d0 = std::max(-(N - 1), -center);
            const long d1 = std::min(N - 1, L - 1 - center);
            const double* gp = g_.data() + N - 1;
            const double* ep = ext.data() + center;
            for (long d = d0; d <= d1; ++d) acc += gp[d] * ep[d];
            out[r * t + i] = static_cast<float>(acc);
        }
    }
}

std::vector<float> ZeroPhaseFilter::apply(const std::vector<float>& rows, std::size_t t) const {
    std::vector<float> out(rows.size());
    if (t == 0 || rows.empty()) return out;
    apply(rows.data(), rows.size() / t, t, out.data());
    return out;
}

RowSpectra precompute_row_spectra(const float* rows, std::size_t n_rows, std::size_t t,
                                  std::size_t pad) {
    RowSpectra s;
    s.n_rows = n_rows;
    s.t = t;
    s.pad = pad;
    if (t == 0 || n_rows == 0) return s;
    const std::size_t L = t + 2 * pad;  // extended signal
    // Output sample i reads extension indices [i, i + 2*pad], and with the
    // full-reach pad the cropped range stays inside [0, L); nfft >= L is
    // enough for those reads to be free of circular wrap-around.
    std::size_t nfft = 1;
    while (nfft < L) nfft <<= 1;
    s.nfft = nfft;

    // Pack rows two at a time as real/imaginary parts of one transform.
    s.packed.reserve((n_rows + 1) / 2);
    for (std::size_t r = 0; r < n_rows; r += 2) {
        const bool pair = r + 1 < n_rows;
        const std::vector<double> ea = reflect_extend_row(rows + r * t, t, pad);
        const std::vector<double> eb =
            pair ? reflect_extend_row(rows + (r + 1) * t, t, pad) : std::vector<double>();
        std::vector<std::complex<double>> buf(nfft, std::complex<double>(0.0, 0.0));
        for (std::size_t i = 0; i < L; ++i) {
            buf[i] = {ea[i], pair ? eb[i] : 0.0};
        }
        fft_radix2(buf, false);
        s.packed.push_back(std::move(buf));
    }
    return s;
}

void ZeroPhaseFilter::apply_spectra(const RowSpectra& spectra, float* out) const {
    if (spectra.t == 0 || spectra.n_rows == 0) return;
    if (spectra.pad != pad_) {
        throw ConfigError("apply_spectra: spectra were built for pad " +
                          std::to_string(spectra.pad) + ", filter needs " +
                          std::to_string(pad_));
    }
    const std::size_t t = spectra.t;
    const std::size_t nfft = spectra.nfft;
    const std::size_t N = h_.size();

    // Real spectrum of the zero-phase kernel: |H|^2 on the FFT grid.
    std::vector<std::complex<double>> hf(nfft, 0.0);
    for (std::size_t k = 0; k < N; ++k) hf[k] = h_[k];
    fft_radix2(hf, false);
    std::vector<double> g_spec(nfft);
    for (std::size_t k = 0; k < nfft; ++k) g_spec[k] = std::norm(hf[k]);

    std::vector<std::complex<double>> buf;
    for (std::size_t r = 0; r < spectra.n_rows; r += 2) {
        const bool pair = r + 1 < spectra.n_rows;
        buf = spectra.packed[r / 2];
        for (std::size_t k = 0; k < nfft; ++k) buf[k] *= g_spec[k];
        fft_radix2(buf, true);
        // The kernel is centered at lag 0, so the filtered extension is in
        // phase with the input extension; crop the original window.
        for (std::size_t i = 0; i < t; ++i) {
            out[r * t + i] = static_cast<float>(buf[i + pad_].real());
            if (pair) out[(r + 1) * t + i] = static_cast<float>(buf[i + pad_].imag());
        }
    }
}

void ZeroPhaseFilter::apply_fft(const float* rows, std::size_t n_rows, std::size_t t,
                                float* out) const {
    if (t == 0 || n_rows == 0) return;
    apply_spectra(precompute_row_spectra(rows, n_rows, t, pad_), out);
}

std::vector<float> ZeroPhaseFilter::apply_fft(const std::vector<float>& rows,
                                              std::size_t t) const {
    std::vector<float> out(rows.size());
    if (t == 0 || rows.empty()) return out;
    apply_fft(rows.data(), rows.size() / t, t, out.data());
    return out;
}

}  // namespace bbecog
