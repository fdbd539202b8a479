#pragma once

#include "sonogrid/dsp.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace sonogrid::node {

inline constexpr double kAdcBias = 512.0;
inline constexpr double kMaxAmplitude = 511.5;

enum class SourceKind { kSine, kWhiteNoise, kMixture, kFile };

std::string_view to_string(SourceKind kind);
SourceKind parse_source_kind(std::string_view text);

/// Synthetic stand-in for the microphone front end.
///   sine:        512 + A sin(2 pi f t)
///   white-noise: 512 + uniform(-A, A)
///   mixture:     sine of amplitude A plus uniform noise of amplitude B
///   file:        ADC counts from a file, wrapping around at the end
struct SignalSourceSpec {
  SourceKind kind = SourceKind::kSine;
  double amplitude_counts = 0.0;
  double frequency_hz = 1012.5;
  std::uint64_t seed = 1;
  std::string path;
  double noise_amplitude_counts = 0.0;  // mixture only
};

void validate(const SignalSourceSpec& spec);

/// Expected long-run RMS in counts before quantization; nullopt for file sources.
std::optional<double> analytic_rms(const SignalSourceSpec& spec);

/// Headerless CSV of ADC counts, one integer per line. Blank lines are
/// skipped; anything else that is not an integer in [0, 1023] throws
/// ValidationError naming the 1-based line number.
std::vector<int> load_adc_file(const std::filesystem::path& file);

/// Stateful generator: consecutive blocks are phase-continuous and the
/// sequence is fully determined by the spec (and its seed).
class SignalSource {
 public:
  explicit SignalSource(SignalSourceSpec spec);

  dsp::SampleBlock next_block(std::size_t n, double sample_rate_hz, std::int64_t acquired_at);

  const SignalSourceSpec& spec() const { return spec_; }
  std::uint64_t samples_emitted() const { return index_; }

 private:
  double next_sample(double sample_rate_hz);
  double uniform_unit();  // [-1, 1)

  SignalSourceSpec spec_;
  std::uint64_t index_ = 0;
  std::mt19937_64 rng_;
  std::vector<int> file_samples_;
};

}  // namespace sonogrid::node
