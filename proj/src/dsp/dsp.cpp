#include "sonogrid/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

namespace sonogrid::dsp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_power_of_two(std::size_t n, const char* what) {
  if (!is_power_of_two(n)) {
    throw ValidationError(std::string(what) + ": length " + std::to_string(n) +
                          " is not a power of two");
  }
}

void require_rate(double fs) {
  if (!(fs > 0.0) || !std::isfinite(fs)) {
    throw ValidationError("sample rate must be a positive finite number");
  }
}

// Reorders data into bit-reversed index order.
void bit_reverse_permute(std::span<double> data) {
  const std::size_t n = data.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void validate(const SampleBlock& block) {
  require_rate(block.sample_rate_hz);
  const std::size_t n = block.samples.size();
  if (n < kMinBlockSize || !is_power_of_two(n)) {
    throw ValidationError("sample block length " + std::to_string(n) +
                          " must be a power of two >= " + std::to_string(kMinBlockSize));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int s = block.samples[i];
    if (s < 0 || s > kAdcMax) {
      throw ValidationError("sample " + std::to_string(i) + " = " + std::to_string(s) +
                            " outside 10-bit range [0, 1023]");
    }
  }
}

void validate(const Calibration& cal) {
  if (!std::isfinite(cal.offset_db) || !std::isfinite(cal.floor_db) ||
      !std::isfinite(cal.ceiling_db) || !(cal.floor_db < cal.ceiling_db)) {
    throw ValidationError("calibration requires finite values and floor_db < ceiling_db");
  }
}

CenteredBlock remove_dc(const SampleBlock& block) {
  validate(block);
  const auto n = static_cast<double>(block.samples.size());
  double sum = 0.0;
  for (int s : block.samples) sum += s;
  const double mean = sum / n;

  CenteredBlock out;
  out.sample_rate_hz = block.sample_rate_hz;
  out.samples.reserve(block.samples.size());
  for (int s : block.samples) out.samples.push_back(static_cast<double>(s) - mean);
  return out;
}

double window_weight(WindowKind kind, double position, std::size_t n) {
  switch (kind) {
    case WindowKind::kRectangular:
      return 1.0;
    case WindowKind::kHamming:
      if (n < 2) return 1.0;
      return 0.54 - 0.46 * std::cos(kTwoPi * position / static_cast<double>(n - 1));
  }
  return 1.0;
}

Windowed apply_window(const CenteredBlock& block, WindowKind kind) {
  Windowed out;
  out.block.sample_rate_hz = block.sample_rate_hz;
  out.block.samples.resize(block.samples.size());
  const std::size_t n = block.samples.size();
  if (n == 0) return out;

  double sum_w = 0.0;
  double sum_w2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = window_weight(kind, static_cast<double>(i), n);
    out.block.samples[i] = block.samples[i] * w;
    sum_w += w;
    sum_w2 += w * w;
  }
  out.coherent_gain = sum_w / static_cast<double>(n);
  out.power_gain = sum_w2 / static_cast<double>(n);
  return out;
}

void fht_inplace(std::span<double> data) {
  const std::size_t n = data.size();
  require_power_of_two(n, "fht");
  if (n == 1) return;

  bit_reverse_permute(data);

  // Each stage merges two half-length transforms E (first half) and O
  // (second half) of a block of length `len`:
  //   H[k]       = E[k] + cos(t) O[k] + sin(t) O[half-k]
  //   H[k+half]  = E[k] - cos(t) O[k] - sin(t) O[half-k],   t = 2*pi*k/len
  // The k and half-k outputs share operands, so they are updated together.
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t quarter = len / 4;
    for (std::size_t base = 0; base < n; base += len) {
      {
        const double u = data[base];
        const double v = data[base + half];
        data[base] = u + v;
        data[base + half] = u - v;
      }
      if (quarter > 0) {
        const double u = data[base + quarter];
        const double v = data[base + half + quarter];
        data[base + quarter] = u + v;
        data[base + half + quarter] = u - v;
      }
      for (std::size_t k = 1; k < quarter; ++k) {
        const double theta = kTwoPi * static_cast<double>(k) / static_cast<double>(len);
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        const std::size_t i1 = base + k;
        const std::size_t i2 = base + half - k;
        const std::size_t i3 = base + half + k;
        const std::size_t i4 = base + len - k;
        const double t1 = data[i3] * c + data[i4] * s;
        const double t2 = data[i3] * s - data[i4] * c;
        data[i3] = data[i1] - t1;
        data[i1] += t1;
        data[i4] = data[i2] - t2;
        data[i2] += t2;
      }
    }
  }
}

HartleyCoefficients fht(const CenteredBlock& block) {
  require_power_of_two(block.samples.size(), "fht");
  HartleyCoefficients out{block.samples, block.sample_rate_hz};
  fht_inplace(out.values);
  return out;
}

Spectrum power_spectrum(const HartleyCoefficients& hartley) {
  const std::size_t n = hartley.values.size();
  require_power_of_two(n, "power_spectrum");
  require_rate(hartley.sample_rate_hz);

  const auto& h = hartley.values;
  Spectrum out;
  out.transform_size = n;
  out.bin_width_hz = hartley.sample_rate_hz / static_cast<double>(n);
  out.power.resize(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double a = h[k];
    const double b = h[(n - k) % n];
    out.power[k] = 0.5 * (a * a + b * b);
  }
  return out;
}

double spectral_energy(const Spectrum& spectrum) {
  const std::size_t n = spectrum.transform_size;
  if (n == 0 || spectrum.power.size() != n / 2 + 1) {
    throw ValidationError("spectrum size does not match its transform size");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < spectrum.power.size(); ++k) {
    const double weight = (k == 0 || k == n / 2) ? 1.0 : 2.0;
    acc += weight * spectrum.power[k];
  }
  return acc / static_cast<double>(n);
}

double rms(const CenteredBlock& block) {
  if (block.samples.empty()) throw ValidationError("rms of an empty block");
  double acc = 0.0;
  for (double x : block.samples) acc += x * x;
  return std::sqrt(acc / static_cast<double>(block.samples.size()));
}

double rms(const Spectrum& spectrum) {
  return std::sqrt(spectral_energy(spectrum) / static_cast<double>(spectrum.transform_size));
}

SplReading spl_from_rms(double rms_counts, const Calibration& cal, std::int64_t acquired_at) {
  validate(cal);
  // Silence (and anything degenerate) is -inf before clamping, i.e. the floor.
  const double raw = !(rms_counts > 0.0) ? -std::numeric_limits<double>::infinity()
                                       : 20.0 * std::log10(rms_counts) + cal.offset_db;
  return SplReading{std::clamp(raw, cal.floor_db, cal.ceiling_db), acquired_at};
}

double a_weight_gain(double f) {
  if (!(f > 0.0)) return 0.0;
  constexpr double k1 = 20.6 * 20.6;
  constexpr double k2 = 107.7 * 107.7;
  constexpr double k3 = 737.9 * 737.9;
  constexpr double k4 = 12194.0 * 12194.0;
  const double f2 = f * f;
  const double ra = (k4 * f2 * f2) / ((f2 + k1) * std::sqrt((f2 + k2) * (f2 + k3)) * (f2 + k4));
  return ra * std::pow(10.0, 2.0 / 20.0);
}

double a_weight_db(double f) { return 20.0 * std::log10(a_weight_gain(f)); }

Spectrum a_weight(const Spectrum& spectrum) {
  Spectrum out = spectrum;
  for (std::size_t k = 0; k < out.power.size(); ++k) {
    const double g = a_weight_gain(spectrum.bin_frequency(k));
    out.power[k] *= g * g;
  }
  return out;
}

std::optional<double> leq(std::span<const double> levels_db) {
  if (levels_db.empty()) return std::nullopt;
  double acc = 0.0;
  for (double level : levels_db) acc += std::pow(10.0, level / 10.0);
  return 10.0 * std::log10(acc / static_cast<double>(levels_db.size()));
}

std::optional<double> leq(std::span<const SplReading> readings, TimeWindow window) {
  std::vector<double> levels;
  for (const auto& r : readings) {
    if (r.acquired_at >= window.from_ms && r.acquired_at <= window.to_ms) {
      levels.push_back(r.spl_db);
    }
  }
  return leq(levels);
}

SplReading measure_block(const SampleBlock& block, const MeterSettings& settings) {
  const CenteredBlock centered = remove_dc(block);
  if (settings.weighting == Weighting::kNone && settings.window == WindowKind::kRectangular) {
    return spl_from_rms(rms(centered), settings.calibration, block.acquired_at);
  }

  const Windowed windowed = apply_window(centered, settings.window);
  Spectrum spectrum = power_spectrum(fht(windowed.block));
  if (settings.weighting == Weighting::kA) spectrum = a_weight(spectrum);
  const double level = rms(spectrum) / std::sqrt(windowed.power_gain);
  return spl_from_rms(level, settings.calibration, block.acquired_at);
}

SplReading measure_interval(std::span<const SampleBlock> blocks, const MeterSettings& settings) {
  if (blocks.empty()) throw ValidationError("measure_interval needs at least one block");
  std::vector<double> levels;
  levels.reserve(blocks.size());
  for (const auto& b : blocks) levels.push_back(measure_block(b, settings).spl_db);
  const double aggregate =
      std::clamp(*leq(levels), settings.calibration.floor_db, settings.calibration.ceiling_db);
  return SplReading{aggregate, blocks.back().acquired_at};
}

}  // namespace sonogrid::dsp
