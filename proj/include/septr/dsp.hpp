#ifndef SEPTR_DSP_HPP
#define SEPTR_DSP_HPP

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "septr/rng.hpp"

namespace septr {

struct Waveform {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 0;          // Hz
};

enum class MagnitudeMode { kSqrt, kSquared };

struct SpectroConfig {
  std::size_t fft_length = 1024;   // N_x
  std::size_t hop = 64;            // R
  std::size_t window_length = 512; // Hamming window size
  std::size_t mel_bins = 128;
  double db_floor = -80.0;
  MagnitudeMode magnitude = MagnitudeMode::kSqrt;

  void validate() const;
};

struct MelSpectrogram {
  std::vector<double> values;  // row-major [freq_bins x time_slots], in [0,1]
  std::size_t freq_bins = 0;
  std::size_t time_slots = 0;
  SpectroConfig config;

  double at(std::size_t f, std::size_t t) const {
    return values[f * time_slots + t];
  }
  double& at(std::size_t f, std::size_t t) {
    return values[f * time_slots + t];
  }
};

struct AugmentConfig {
  double noise_snr_db_lo = 15.0;
  double noise_snr_db_hi = 30.0;
  double time_shift_max_fraction = 0.10;  // circular shift
  std::vector<double> speed_factors = {0.9, 1.0, 1.1};
  double mixup_alpha = 0.2;
  int spec_time_masks = 1;
  int spec_freq_masks = 1;
  double spec_mask_max_fraction = 0.10;
  double noise_prob = 0.5;
  double shift_prob = 0.5;
  double speed_prob = 0.5;
  double mixup_prob = 0.5;
  double spec_augment_prob = 0.5;

  static AugmentConfig disabled() {
    AugmentConfig c;
    c.noise_prob = c.shift_prob = c.speed_prob = 0.0;
    c.mixup_prob = c.spec_augment_prob = 0.0;
    return c;
  }
  void validate() const;
};

/// Complex STFT, [fft_length/2 + 1] rows x frame columns, row-major.
struct Stft {
  std::vector<std::complex<double>> values;
  std::size_t bins = 0;
  std::size_t frames = 0;

  std::complex<double> at(std::size_t k, std::size_t m) const {
    return values[k * frames + m];
  }
};

std::size_t stft_frame_count(std::size_t num_samples,
                             const SpectroConfig& cfg);

Stft stft(const Waveform& x, const SpectroConfig& cfg);

/// Triangular HTK-mel filterbank, row-major [mel_bins x (fft_length/2+1)],
/// area-normalized so each filter integrates to the same mass.
std::vector<double> mel_filterbank(std::size_t mel_bins,
                                   std::size_t fft_length, int sample_rate);

/// sqrt (or squared) magnitude mapped onto mel bins: [mel_bins x frames].
std::vector<double> mel_project(const Stft& s, const SpectroConfig& cfg,
                                int sample_rate);

/// dB conversion, floor clamp, then affine min-max to [0,1]; a constant
/// input maps to all zeros.
MelSpectrogram log_normalize(const std::vector<double>& mel,
                             std::size_t mel_bins, std::size_t frames,
                             const SpectroConfig& cfg);

MelSpectrogram waveform_to_spectrogram(const Waveform& x,
                                       const SpectroConfig& cfg);

Waveform pad_or_clip(const Waveform& x, double target_seconds);

// Waveform-domain augmentations (applied before the STFT).
Waveform augment_waveform(const Waveform& x, const AugmentConfig& cfg,
                          Rng& rng);
// SpecAugment stripes (applied after log-normalization).
MelSpectrogram augment_spectrogram(const MelSpectrogram& m,
                                   const AugmentConfig& cfg, Rng& rng);
/// Convex combination lam*a + (1-lam)*b of two spectrograms.
MelSpectrogram mixup(const MelSpectrogram& a, const MelSpectrogram& b,
                     double lam);

// ---- file I/O ----

/// PCM 16-bit or 32-bit-float WAV; stereo is averaged to mono. Compressed
/// formats are rejected with an error naming the format code.
Waveform read_wav(const std::string& path);
void write_wav_pcm16(const std::string& path, const Waveform& x);

/// 16-byte header: magic "SPTR", u32 version, u32 rows, u32 cols; then
/// row-major little-endian float64 values.
void write_spectrogram(const std::string& path, const MelSpectrogram& m);
MelSpectrogram read_spectrogram(const std::string& path);
std::string spectrogram_to_text(const MelSpectrogram& m);

}  // namespace septr

#endif  // SEPTR_DSP_HPP
