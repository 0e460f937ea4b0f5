#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rashvit/tensor.hpp"

namespace rashvit::sigproc {

constexpr int kWindowSize = 2048;
constexpr int kImageHeight = 64;
constexpr int kImageWidth = 32;

// Name of the deterministic normal-variate method, recorded in run metadata.
inline const char* kNoiseGeneratorName = "mt19937_64/box-muller";

struct SignalSegment {
    std::vector<double> samples;
    double sample_rate_hz = 12000.0;
    std::string source_id;
};

struct NoiseSpec {
    double snr_db = 0.0;
    uint64_t seed = 0;
};

// (2, 64, 32): channel 0 = Re(FFT), channel 1 = Im(FFT), each reshaped row-major.
struct SpectralImage {
    Tensor<float> data;
    std::optional<int> label;
};

// floor((len - window)/stride) + 1 segments; segment i covers [i*stride, i*stride + window).
std::vector<SignalSegment> sliding_window(const std::vector<double>& signal, int window, int stride,
                                          double sample_rate_hz = 12000.0, const std::string& source_id = "");

// Per-segment z-score; constant input maps to all zeros.
SignalSegment normalize(const SignalSegment& segment);

// Adds i.i.d. Gaussian noise with variance P_signal / 10^(snr_db/10).
SignalSegment inject_noise(const SignalSegment& segment, const NoiseSpec& spec);

// 10*log10(P_clean / P_residual); +inf when the residual is exactly zero.
double measure_snr(const SignalSegment& clean, const SignalSegment& noisy);

// Unnormalized forward DFT via iterative radix-2; length must be a power of two >= 2.
std::vector<std::complex<double>> fft(const std::vector<double>& x);
std::vector<std::complex<double>> fft_complex(std::vector<std::complex<double>> x);

// FFT real/imag parts packed into the (2, 64, 32) image.
SpectralImage featurize(const SignalSegment& segment);

// Raw-feature ablation layout: time-domain samples in channel 0, zeros in channel 1.
SpectralImage featurize_raw(const SignalSegment& segment);

double mean_power(const std::vector<double>& x);

// Deterministic standard-normal sequence (Box-Muller over mt19937_64).
std::vector<double> gaussian_sequence(uint64_t seed, size_t n);

}  // namespace rashvit::sigproc
