#pragma once

#include <filesystem>
#include <vector>

#include "vsl/encoders.h"
#include "vsl/tensor.h"

namespace vsl {

struct Waveform {
    int sample_rate = 16000;
    std::vector<float> samples;  // mono, [-1, 1]
};

// 16-bit PCM mono WAV only.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const Waveform& wave, const std::filesystem::path& path);

// Window [offset_s, offset_s + len_s), clamped to the file.
Waveform slice(const Waveform& wave, double offset_s, double len_s);

// Log-mel spectrogram: Hann window of cfg.win_length, hop cfg.hop_length,
// power spectrum via a 512-point FFT, cfg.n_mels triangular filters over
// [0, sr/2], log with floor cfg.log_floor. Shape [1, n_mels, frames].
Tensor log_mel(const Waveform& wave, const EncoderConfig& cfg);

// Full audio branch: framing precondition (length within one hop of
// len_s * sample_rate), then log-mel and the encoder.
Embedding audio_encode(const AudioEncoder& enc, const EncoderConfig& cfg,
                       const Waveform& wave, double len_s);

}  // namespace vsl
