#include "septr/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace septr {

namespace {

constexpr double kLogEps = 1e-10;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey, forward transform.
void fft_pow2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / double(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        auto u = a[i + j];
        auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

void dft_naive(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double ang = -2.0 * M_PI * double(k) * double(i) / double(n);
      acc += a[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  a = std::move(out);
}

double hamming(std::size_t i, std::size_t w) {
  if (w == 1) return 1.0;
  return 0.54 - 0.46 * std::cos(2.0 * M_PI * double(i) / double(w - 1));
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

}  // namespace

void SpectroConfig::validate() const {
  if (window_length == 0 || window_length > fft_length)
    throw std::invalid_argument(
        "SpectroConfig: window_length must be in (0, fft_length]");
  if (hop == 0 || hop > window_length)
    throw std::invalid_argument(
        "SpectroConfig: hop must be in (0, window_length]");
  if (mel_bins == 0)
    throw std::invalid_argument("SpectroConfig: mel_bins must be positive");
}

void AugmentConfig::validate() const {
  for (double p : {noise_prob, shift_prob, speed_prob, mixup_prob,
                   spec_augment_prob})
    if (p < 0.0 || p > 1.0)
      throw std::invalid_argument(
          "AugmentConfig: probabilities must be in [0,1]");
  if (spec_mask_max_fraction < 0.0 || spec_mask_max_fraction >= 1.0)
    throw std::invalid_argument(
        "AugmentConfig: spec_mask_max_fraction must be in [0,1)");
  if (time_shift_max_fraction < 0.0 || time_shift_max_fraction > 1.0)
    throw std::invalid_argument(
        "AugmentConfig: time_shift_max_fraction must be in [0,1]");
  if (mixup_alpha <= 0.0)
    throw std::invalid_argument("AugmentConfig: mixup_alpha must be > 0");
}

std::size_t stft_frame_count(std::size_t num_samples,
                             const SpectroConfig& cfg) {
  if (num_samples < cfg.window_length) return 0;
  return (num_samples - cfg.window_length) / cfg.hop + 1;
}

Stft stft(const Waveform& x, const SpectroConfig& cfg) {
  cfg.validate();
  if (x.samples.size() < cfg.window_length)
    throw std::invalid_argument(
        "stft: signal of " + std::to_string(x.samples.size()) +
        " samples is shorter than one window (" +
        std::to_string(cfg.window_length) + ")");
  const std::size_t n_fft = cfg.fft_length;
  const std::size_t frames = stft_frame_count(x.samples.size(), cfg);
  const std::size_t bins = n_fft / 2 + 1;

  Stft out;
  out.bins = bins;
  out.frames = frames;
  out.values.assign(bins * frames, {0.0, 0.0});

  std::vector<double> window(cfg.window_length);
  for (std::size_t i = 0; i < cfg.window_length; ++i)
    window[i] = hamming(i, cfg.window_length);

  std::vector<std::complex<double>> buf(n_fft);
  for (std::size_t m = 0; m < frames; ++m) {
    const std::size_t off = m * cfg.hop;
    for (std::size_t i = 0; i < n_fft; ++i)
      buf[i] = (i < cfg.window_length)
                   ? std::complex<double>(x.samples[off + i] * window[i], 0.0)
                   : std::complex<double>(0.0, 0.0);
    if (is_power_of_two(n_fft))
      fft_pow2(buf);
    else
      dft_naive(buf);
    // The transform above indexes time from the frame start; the absolute
    // time origin of the analysis sum adds a per-bin phase of -2*pi*k*mR/N.
    for (std::size_t k = 0; k < bins; ++k) {
      double ang = -2.0 * M_PI * double(k) * double(off) / double(n_fft);
      out.values[k * frames + m] =
          buf[k] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
  }
  return out;
}

std::vector<double> mel_filterbank(std::size_t mel_bins,
                                   std::size_t fft_length, int sample_rate) {
  const std::size_t bins = fft_length / 2 + 1;
  const double f_max = double(sample_rate) / 2.0;
  const double mel_max = hz_to_mel(f_max);
  std::vector<double> edges(mel_bins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_max * double(i) / double(mel_bins + 1));

  std::vector<double> fb(mel_bins * bins, 0.0);
  for (std::size_t m = 0; m < mel_bins; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);  // equal-area filters
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = double(k) * double(sample_rate) / double(fft_length);
      double w = 0.0;
      if (f > lo && f < center)
        w = (f - lo) / (center - lo);
      else if (f >= center && f < hi)
        w = (hi - f) / (hi - center);
      fb[m * bins + k] = w * norm;
    }
  }
  return fb;
}

std::vector<double> mel_project(const Stft& s, const SpectroConfig& cfg,
                                int sample_rate) {
  const std::size_t bins = s.bins;
  const std::size_t frames = s.frames;
  auto fb = mel_filterbank(cfg.mel_bins, cfg.fft_length, sample_rate);
  std::vector<double> mag(bins * frames);
  for (std::size_t i = 0; i < mag.size(); ++i) {
    double a = std::abs(s.values[i]);
    mag[i] = cfg.magnitude == MagnitudeMode::kSqrt ? std::sqrt(a) : a * a;
  }
  std::vector<double> out(cfg.mel_bins * frames, 0.0);
  for (std::size_t m = 0; m < cfg.mel_bins; ++m)
    for (std::size_t k = 0; k < bins; ++k) {
      const double w = fb[m * bins + k];
      if (w == 0.0) continue;
      for (std::size_t t = 0; t < frames; ++t)
        out[m * frames + t] += w * mag[k * frames + t];
    }
  return out;
}

MelSpectrogram log_normalize(const std::vector<double>& mel,
                             std::size_t mel_bins, std::size_t frames,
                             const SpectroConfig& cfg) {
  MelSpectrogram out;
  out.freq_bins = mel_bins;
  out.time_slots = frames;
  out.config = cfg;
  out.values.resize(mel.size());
  double lo = 1e300, hi = -1e300;
  for (std::size_t i = 0; i < mel.size(); ++i) {
    if (mel[i] < 0.0)
      throw std::invalid_argument("log_normalize: negative input value");
    double db = 20.0 * std::log10(mel[i] + kLogEps);
    db = std::max(db, cfg.db_floor);
    out.values[i] = db;
    lo = std::min(lo, db);
    hi = std::max(hi, db);
  }
  const double range = hi - lo;
  if (range <= 0.0) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
  } else {
    for (double& v : out.values) v = (v - lo) / range;
  }
  return out;
}

MelSpectrogram waveform_to_spectrogram(const Waveform& x,
                                       const SpectroConfig& cfg) {
  Stft s = stft(x, cfg);
  auto mel = mel_project(s, cfg, x.sample_rate);
  return log_normalize(mel, cfg.mel_bins, s.frames, cfg);
}

Waveform pad_or_clip(const Waveform& x, double target_seconds) {
  if (target_seconds <= 0.0)
    throw std::invalid_argument("pad_or_clip: target seconds must be > 0");
  const std::size_t target =
      std::size_t(std::llround(target_seconds * x.sample_rate));
  Waveform out;
  out.sample_rate = x.sample_rate;
  out.samples = x.samples;
  out.samples.resize(target, 0.0);  // trailing zeros, or clip keeping the head
  return out;
}

namespace {

Waveform resample_linear(const Waveform& x, double speed_factor) {
  Waveform out;
  out.sample_rate = x.sample_rate;
  const std::size_t n = x.samples.size();
  const std::size_t out_n =
      std::max<std::size_t>(1, std::size_t(double(n) / speed_factor));
  out.samples.resize(out_n);
  for (std::size_t i = 0; i < out_n; ++i) {
    double pos = double(i) * speed_factor;
    std::size_t i0 = std::min(std::size_t(pos), n - 1);
    std::size_t i1 = std::min(i0 + 1, n - 1);
    double frac = pos - double(i0);
    out.samples[i] = (1.0 - frac) * x.samples[i0] + frac * x.samples[i1];
  }
  return out;
}

}  // namespace

Waveform augment_waveform(const Waveform& x, const AugmentConfig& cfg,
                          Rng& rng) {
  cfg.validate();
  Waveform out = x;
  const std::size_t orig_len = x.samples.size();

  if (rng.uniform() < cfg.speed_prob && !cfg.speed_factors.empty()) {
    double factor = cfg.speed_factors[rng.uniform_index(cfg.speed_factors.size())];
    if (factor != 1.0) {
      out = resample_linear(out, factor);
      out.samples.resize(orig_len, 0.0);
    }
  }
  if (rng.uniform() < cfg.shift_prob && cfg.time_shift_max_fraction > 0.0) {
    std::size_t max_shift =
        std::size_t(cfg.time_shift_max_fraction * double(orig_len));
    if (max_shift > 0) {
      std::size_t shift = rng.uniform_index(max_shift + 1);
      std::rotate(out.samples.begin(), out.samples.end() - shift,
                  out.samples.end());
    }
  }
  if (rng.uniform() < cfg.noise_prob) {
    double snr_db = rng.uniform(cfg.noise_snr_db_lo, cfg.noise_snr_db_hi);
    double sig_pow = 0.0;
    for (double s : out.samples) sig_pow += s * s;
    sig_pow /= double(out.samples.size());
    double noise_std =
        std::sqrt(sig_pow / std::pow(10.0, snr_db / 10.0) + 1e-300);
    for (double& s : out.samples) s += noise_std * rng.normal();
  }
  return out;
}

MelSpectrogram augment_spectrogram(const MelSpectrogram& m,
                                   const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  MelSpectrogram out = m;
  if (rng.uniform() >= cfg.spec_augment_prob) return out;

  const std::size_t max_t =
      std::size_t(cfg.spec_mask_max_fraction * double(m.time_slots));
  const std::size_t max_f =
      std::size_t(cfg.spec_mask_max_fraction * double(m.freq_bins));
  if (max_t >= m.time_slots || max_f >= m.freq_bins)
    throw std::invalid_argument(
        "augment_spectrogram: mask width must be smaller than the axis");
  for (int i = 0; i < cfg.spec_time_masks && max_t > 0; ++i) {
    std::size_t w = rng.uniform_index(max_t + 1);
    std::size_t start = rng.uniform_index(m.time_slots - w + 1);
    for (std::size_t f = 0; f < m.freq_bins; ++f)
      for (std::size_t t = start; t < start + w; ++t) out.at(f, t) = 0.0;
  }
  for (int i = 0; i < cfg.spec_freq_masks && max_f > 0; ++i) {
    std::size_t w = rng.uniform_index(max_f + 1);
    std::size_t start = rng.uniform_index(m.freq_bins - w + 1);
    for (std::size_t f = start; f < start + w; ++f)
      for (std::size_t t = 0; t < m.time_slots; ++t) out.at(f, t) = 0.0;
  }
  return out;
}

MelSpectrogram mixup(const MelSpectrogram& a, const MelSpectrogram& b,
                     double lam) {
  if (a.freq_bins != b.freq_bins || a.time_slots != b.time_slots)
    throw std::invalid_argument("mixup: spectrogram shapes differ");
  MelSpectrogram out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = lam * a.values[i] + (1.0 - lam) * b.values[i];
  return out;
}

// ---- WAV ----

namespace {

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return std::uint16_t(b[0]) | (std::uint16_t(b[1]) << 8);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  char tag[4];
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("read_wav: " + path + " is not a RIFF file");
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: " + path + " is not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::vector<char> data;
  while (in.read(tag, 4)) {
    std::uint32_t chunk_size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (chunk_size > 16) in.ignore(chunk_size - 16);
    } else if (std::strncmp(tag, "data", 4) == 0) {
      data.resize(chunk_size);
      in.read(data.data(), chunk_size);
    } else {
      in.ignore(chunk_size + (chunk_size & 1));
    }
  }
  if (format != 1 && format != 3)
    throw std::runtime_error(
        "read_wav: " + path + " uses format code " + std::to_string(format) +
        "; only PCM (1) and IEEE float (3) are supported, not compressed "
        "formats");
  if (channels == 0 || data.empty())
    throw std::runtime_error("read_wav: " + path + " has no audio data");
  if (format == 1 && bits != 16)
    throw std::runtime_error("read_wav: only 16-bit PCM is supported, got " +
                             std::to_string(bits) + "-bit");
  if (format == 3 && bits != 32)
    throw std::runtime_error(
        "read_wav: only 32-bit float samples are supported, got " +
        std::to_string(bits) + "-bit");

  Waveform out;
  out.sample_rate = int(sample_rate);
  const std::size_t bytes_per = bits / 8;
  const std::size_t frames = data.size() / (bytes_per * channels);
  out.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const char* p = data.data() + (f * channels + c) * bytes_per;
      if (format == 1) {
        std::int16_t v;
        std::memcpy(&v, p, 2);
        acc += double(v) / 32767.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        acc += double(v);
      }
    }
    out.samples[f] = acc / double(channels);
  }
  return out;
}

void write_wav_pcm16(const std::string& path, const Waveform& x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_wav: cannot open " + path);
  const std::uint32_t data_size = std::uint32_t(x.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, std::uint32_t(x.sample_rate));
  write_u32(out, std::uint32_t(x.sample_rate * 2));
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_size);
  for (double s : x.samples) {
    double clamped = std::clamp(s, -1.0, 1.0);
    auto v = std::int16_t(std::lround(clamped * 32767.0));
    write_u16(out, std::uint16_t(v));
  }
}

// ---- spectrogram files ----

void write_spectrogram(const std::string& path, const MelSpectrogram& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_spectrogram: cannot open " + path);
  out.write("SPTR", 4);
  write_u32(out, 1);  // version
  write_u32(out, std::uint32_t(m.freq_bins));
  write_u32(out, std::uint32_t(m.time_slots));
  out.write(reinterpret_cast<const char*>(m.values.data()),
            std::streamsize(m.values.size() * sizeof(double)));
}

MelSpectrogram read_spectrogram(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_spectrogram: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::strncmp(magic, "SPTR", 4) != 0)
    throw std::runtime_error("read_spectrogram: bad magic in " + path);
  std::uint32_t version = read_u32(in);
  if (version != 1)
    throw std::runtime_error("read_spectrogram: unsupported version " +
                             std::to_string(version));
  MelSpectrogram m;
  m.freq_bins = read_u32(in);
  m.time_slots = read_u32(in);
  m.values.resize(m.freq_bins * m.time_slots);
  in.read(reinterpret_cast<char*>(m.values.data()),
          std::streamsize(m.values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("read_spectrogram: truncated " + path);
  return m;
}

std::string spectrogram_to_text(const MelSpectrogram& m) {
  std::ostringstream os;
  os << m.freq_bins << ' ' << m.time_slots << '\n';
  os.precision(17);
  for (std::size_t f = 0; f < m.freq_bins; ++f) {
    for (std::size_t t = 0; t < m.time_slots; ++t) {
      if (t) os << ' ';
      os << m.at(f, t);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace septr
