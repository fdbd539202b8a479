#include "sonogrid/node/signal_source.hpp"

#include "sonogrid/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>

namespace sonogrid::node {

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::kSine: return "sine";
    case SourceKind::kWhiteNoise: return "white-noise";
    case SourceKind::kMixture: return "mixture";
    case SourceKind::kFile: return "file";
  }
  return "?";
}

SourceKind parse_source_kind(std::string_view text) {
  for (auto k : {SourceKind::kSine, SourceKind::kWhiteNoise, SourceKind::kMixture, SourceKind::kFile}) {
    if (to_string(k) == text) return k;
  }
  throw ValidationError("unknown source kind '" + std::string(text) + "'");
}

namespace {

void check_amplitude(double a, const char* what) {
  if (!std::isfinite(a) || a < 0.0 || a > kMaxAmplitude) {
    throw ValidationError(std::string(what) + " must be within [0, 511.5] counts");
  }
}

}  // namespace

void validate(const SignalSourceSpec& spec) {
  switch (spec.kind) {
    case SourceKind::kSine:
      check_amplitude(spec.amplitude_counts, "amplitude");
      if (!std::isfinite(spec.frequency_hz) || spec.frequency_hz < 0.0) {
        throw ValidationError("sine frequency must be non-negative");
      }
      break;
    case SourceKind::kWhiteNoise:
      check_amplitude(spec.amplitude_counts, "amplitude");
      break;
    case SourceKind::kMixture:
      check_amplitude(spec.amplitude_counts, "amplitude");
      check_amplitude(spec.noise_amplitude_counts, "noise amplitude");
      check_amplitude(spec.amplitude_counts + spec.noise_amplitude_counts, "combined amplitude");
      if (!std::isfinite(spec.frequency_hz) || spec.frequency_hz < 0.0) {
        throw ValidationError("sine frequency must be non-negative");
      }
      break;
    case SourceKind::kFile:
      if (spec.path.empty()) throw ValidationError("file source needs a path");
      break;
  }
}

std::optional<double> analytic_rms(const SignalSourceSpec& spec) {
  const double sine = spec.amplitude_counts * spec.amplitude_counts / 2.0;
  switch (spec.kind) {
    case SourceKind::kSine: return std::sqrt(sine);
    case SourceKind::kWhiteNoise: return spec.amplitude_counts / std::sqrt(3.0);
    case SourceKind::kMixture:
      return std::sqrt(sine + spec.noise_amplitude_counts * spec.noise_amplitude_counts / 3.0);
    case SourceKind::kFile: return std::nullopt;
  }
  return std::nullopt;
}

std::vector<int> load_adc_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ValidationError("cannot open " + file.string());
  std::vector<int> samples;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    const std::string_view text(line.data() + first, last - first + 1);
    int value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || value < 0 || value > dsp::kAdcMax) {
      throw ValidationError(file.string() + ":" + std::to_string(lineno) + ": expected an ADC count in [0, 1023], got '" +
                            std::string(text) + "'");
    }
    samples.push_back(value);
  }
  if (samples.empty()) throw ValidationError(file.string() + ": no samples");
  return samples;
}

SignalSource::SignalSource(SignalSourceSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
  validate(spec_);
  if (spec_.kind == SourceKind::kFile) file_samples_ = load_adc_file(spec_.path);
}

double SignalSource::uniform_unit() {
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return 2.0 * u - 1.0;
}

double SignalSource::next_sample(double fs) {
  const std::uint64_t i = index_++;
  auto sine = [&] {
    const double cycles = std::fmod(static_cast<double>(i) * spec_.frequency_hz / fs, 1.0);
    return spec_.amplitude_counts * std::sin(2.0 * std::numbers::pi * cycles);
  };
  switch (spec_.kind) {
    case SourceKind::kSine: return kAdcBias + sine();
    case SourceKind::kWhiteNoise: return kAdcBias + spec_.amplitude_counts * uniform_unit();
    case SourceKind::kMixture: return kAdcBias + sine() + spec_.noise_amplitude_counts * uniform_unit();
    case SourceKind::kFile: return file_samples_[i % file_samples_.size()];
  }
  return kAdcBias;
}

dsp::SampleBlock SignalSource::next_block(std::size_t n, double fs, std::int64_t acquired_at) {
  dsp::SampleBlock block;
  block.sample_rate_hz = fs;
  block.acquired_at = acquired_at;
  block.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const long v = std::lround(next_sample(fs));
    block.samples.push_back(static_cast<int>(std::clamp<long>(v, 0, dsp::kAdcMax)));
  }
  return block;
}

}  // namespace sonogrid::node
