#include "septr/synth.hpp"

#include <cmath>
#include <stdexcept>

namespace septr {

const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names = {"harmonic_tone", "chirp",
                                                 "noise_burst", "pulsed_tone"};
  return names;
}

LabeledWaveform make_synth_sample(int label, Rng& rng, int sample_rate,
                                  double seconds) {
  if (label < 0 || label > 3)
    throw std::out_of_range("make_synth_sample: label must be in [0, 4)");
  const std::size_t n = std::size_t(seconds * sample_rate);
  LabeledWaveform out;
  out.label = label;
  out.audio.sample_rate = sample_rate;
  out.audio.samples.resize(n);
  const double amp = rng.uniform(0.3, 0.6);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);

  switch (label) {
    case 0: {  // harmonic tone: buzzy hum with five partials
      const double f = rng.uniform(300.0, 800.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = double(i) / sample_rate;
        double s = 0.0;
        for (int k = 1; k <= 5; ++k)
          s += std::sin(2.0 * M_PI * k * f * t + phase * k) / double(k);
        out.audio.samples[i] = amp * s * 0.5;
      }
      break;
    }
    case 1: {  // linear up-chirp sweeping most of the band
      const double f0 = rng.uniform(150.0, 300.0);
      const double f1 = f0 * rng.uniform(12.0, 20.0);
      const double rate = (f1 - f0) / seconds;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = double(i) / sample_rate;
        out.audio.samples[i] =
            amp * std::sin(2.0 * M_PI * (f0 * t + 0.5 * rate * t * t) + phase);
      }
      break;
    }
    case 2: {  // gated noise burst covering most of the clip
      const double on = rng.uniform(0.55, 0.85) * seconds;
      const double start = rng.uniform(0.0, seconds - on);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = double(i) / sample_rate;
        const bool active = t >= start && t < start + on;
        out.audio.samples[i] = active ? amp * rng.normal() * 0.5 : 0.0;
      }
      break;
    }
    case 3: {  // pulsed tone: short beeps at a few hertz, 25% duty cycle
      const double f = rng.uniform(300.0, 2500.0);
      const double beep_rate = rng.uniform(2.0, 5.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = double(i) / sample_rate;
        const double cycle = t * beep_rate - std::floor(t * beep_rate);
        const bool active = cycle < 0.25;
        out.audio.samples[i] =
            active ? amp * std::sin(2.0 * M_PI * f * t + phase) : 0.0;
      }
      break;
    }
  }
  // small noise floor on every class
  for (double& s : out.audio.samples) s += 0.002 * rng.normal();
  return out;
}

std::vector<LabeledWaveform> make_synth_dataset(std::size_t count,
                                                std::uint64_t seed,
                                                int sample_rate,
                                                double seconds) {
  Rng root(seed);
  std::vector<LabeledWaveform> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng stream = root.fork(i);
    out.push_back(
        make_synth_sample(int(i % 4), stream, sample_rate, seconds));
  }
  return out;
}

}  // namespace septr
