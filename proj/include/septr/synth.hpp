#ifndef SEPTR_SYNTH_HPP
#define SEPTR_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "septr/dsp.hpp"

namespace septr {

struct LabeledWaveform {
  Waveform audio;
  int label = 0;
};

/// Four acoustically distinct classes, 1 s of mono audio each:
///   0: steady pure tone (random frequency)
///   1: linear up-chirp
///   2: gated white-noise burst
///   3: amplitude-modulated tone
const std::vector<std::string>& synth_class_names();

LabeledWaveform make_synth_sample(int label, Rng& rng,
                                  int sample_rate = 16000,
                                  double seconds = 1.0);

/// Deterministic balanced dataset: sample i gets label i % 4 and an rng
/// stream forked from (seed, i).
std::vector<LabeledWaveform> make_synth_dataset(std::size_t count,
                                                std::uint64_t seed,
                                                int sample_rate = 16000,
                                                double seconds = 1.0);

}  // namespace septr

#endif  // SEPTR_SYNTH_HPP
