#pragma once

// Sound-level metering chain: raw 10-bit ADC blocks -> DC removal -> window
// -> Hartley transform / RMS -> calibrated SPL.  Everything here is pure.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sonogrid/errors.hpp"

namespace sonogrid::dsp {

inline constexpr int kAdcMax = 1023;
inline constexpr double kAdcFullScale = 1023.0;
inline constexpr std::size_t kMinBlockSize = 8;

inline constexpr double kDefaultSampleRateHz = 9600.0;
inline constexpr std::size_t kDefaultBlockSize = 256;

struct SampleBlock {
  std::vector<int> samples;
  double sample_rate_hz = kDefaultSampleRateHz;
  std::int64_t acquired_at = 0;  // ms since epoch
};

struct CenteredBlock {
  std::vector<double> samples;
  double sample_rate_hz = kDefaultSampleRateHz;
};

struct HartleyCoefficients {
  std::vector<double> values;
  double sample_rate_hz = kDefaultSampleRateHz;
};

/// One-sided power spectrum, bins k = 0..N/2, in squared ADC counts.
/// `transform_size` is N; total energy is sum(c_k * power[k]) / N with
/// c_k = 1 at DC and Nyquist and 2 elsewhere.
struct Spectrum {
  std::vector<double> power;
  double bin_width_hz = 0.0;
  std::size_t transform_size = 0;

  double bin_frequency(std::size_t k) const { return bin_width_hz * static_cast<double>(k); }
};

struct Calibration {
  double offset_db = 68.83;
  double floor_db = 30.0;
  double ceiling_db = 120.0;
};

struct SplReading {
  double spl_db = 0.0;
  std::int64_t acquired_at = 0;
};

enum class WindowKind { kRectangular, kHamming };
enum class Weighting { kNone, kA };

struct Windowed {
  CenteredBlock block;
  double coherent_gain = 1.0;  // mean(w), amplitude correction for tones
  double power_gain = 1.0;     // mean(w^2), energy correction for broadband levels
};

struct TimeWindow {
  std::int64_t from_ms;
  std::int64_t to_ms;  // inclusive
};

bool is_power_of_two(std::size_t n);

void validate(const SampleBlock& block);
void validate(const Calibration& cal);

CenteredBlock remove_dc(const SampleBlock& block);

double window_weight(WindowKind kind, double position, std::size_t n);
Windowed apply_window(const CenteredBlock& block, WindowKind kind);

/// Radix-2 decimation-in-time fast Hartley transform (unnormalized).
HartleyCoefficients fht(const CenteredBlock& block);
/// In-place variant over a power-of-two sized buffer.
void fht_inplace(std::span<double> data);

Spectrum power_spectrum(const HartleyCoefficients& hartley);

/// Time-domain energy recovered from a one-sided spectrum (sum of x[n]^2).
double spectral_energy(const Spectrum& spectrum);

double rms(const CenteredBlock& block);
double rms(const Spectrum& spectrum);

SplReading spl_from_rms(double rms_counts, const Calibration& cal, std::int64_t acquired_at = 0);

/// A-weighting gain (linear amplitude) at frequency f, normalized to ~1 at 1 kHz.
double a_weight_gain(double frequency_hz);
double a_weight_db(double frequency_hz);
Spectrum a_weight(const Spectrum& spectrum);

std::optional<double> leq(std::span<const double> levels_db);
std::optional<double> leq(std::span<const SplReading> readings, TimeWindow window);

struct MeterSettings {
  Calibration calibration;
  Weighting weighting = Weighting::kNone;
  WindowKind window = WindowKind::kRectangular;
};

/// Full per-block chain. Unweighted + rectangular stays in the time domain;
/// weighted or windowed paths go through the spectrum.
SplReading measure_block(const SampleBlock& block, const MeterSettings& settings);

/// Energy mean (Leq) of per-block levels; acquired_at is taken from the last block.
SplReading measure_interval(std::span<const SampleBlock> blocks, const MeterSettings& settings);

}  // namespace sonogrid::dsp
