#include "vsl/audio.h"

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "vsl/errors.h"

namespace vsl {

namespace {

constexpr int kFftSize = 512;

uint32_t get_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16le(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16le(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

// In-place iterative radix-2 FFT.
void fft(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_wav: cannot open " + path.string());
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
        std::memcmp(raw.data() + 8, "WAVE", 4) != 0) {
        throw ParseError("read_wav: " + path.string() + " is not a RIFF/WAVE file");
    }
    Waveform wave;
    bool got_fmt = false;
    size_t off = 12;
    while (off + 8 <= raw.size()) {
        const std::string chunk_id = raw.substr(off, 4);
        const uint32_t chunk_size = get_u32le(p + off + 4);
        off += 8;
        if (off + chunk_size > raw.size()) {
            throw ParseError("read_wav: " + path.string() + " truncated chunk " + chunk_id);
        }
        if (chunk_id == "fmt ") {
            if (chunk_size < 16) throw ParseError("read_wav: short fmt chunk");
            const uint16_t format = get_u16le(p + off);
            const uint16_t channels = get_u16le(p + off + 2);
            const uint32_t rate = get_u32le(p + off + 4);
            const uint16_t bits = get_u16le(p + off + 14);
            if (format != 1 || bits != 16) {
                throw ParseError("read_wav: only 16-bit PCM supported");
            }
            if (channels != 1) {
                throw ParseError("read_wav: only mono audio supported");
            }
            wave.sample_rate = static_cast<int>(rate);
            got_fmt = true;
        } else if (chunk_id == "data") {
            if (!got_fmt) throw ParseError("read_wav: data chunk before fmt");
            const size_t n = chunk_size / 2;
            wave.samples.resize(n);
            for (size_t i = 0; i < n; ++i) {
                const int16_t s = static_cast<int16_t>(get_u16le(p + off + i * 2));
                wave.samples[i] = static_cast<float>(s) / 32768.0f;
            }
            return wave;
        }
        off += chunk_size + (chunk_size & 1);
    }
    throw ParseError("read_wav: " + path.string() + " has no data chunk");
}

void write_wav(const Waveform& wave, const std::filesystem::path& path) {
    const uint32_t data_bytes = static_cast<uint32_t>(wave.samples.size() * 2);
    std::string buf;
    buf.reserve(44 + data_bytes);
    buf.append("RIFF");
    put_u32le(buf, 36 + data_bytes);
    buf.append("WAVE");
    buf.append("fmt ");
    put_u32le(buf, 16);
    put_u16le(buf, 1);  // PCM
    put_u16le(buf, 1);  // mono
    put_u32le(buf, static_cast<uint32_t>(wave.sample_rate));
    put_u32le(buf, static_cast<uint32_t>(wave.sample_rate * 2));
    put_u16le(buf, 2);
    put_u16le(buf, 16);
    buf.append("data");
    put_u32le(buf, data_bytes);
    for (float s : wave.samples) {
        float clamped = s;
        if (clamped > 1.0f) clamped = 1.0f;
        if (clamped < -1.0f) clamped = -1.0f;
        const int16_t q = static_cast<int16_t>(std::lrint(clamped * 32767.0f));
        put_u16le(buf, static_cast<uint16_t>(q));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_wav: cannot open " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write_wav: short write to " + path.string());
}

Waveform slice(const Waveform& wave, double offset_s, double len_s) {
    Waveform out;
    out.sample_rate = wave.sample_rate;
    const int64_t n = static_cast<int64_t>(wave.samples.size());
    int64_t begin = static_cast<int64_t>(std::llround(offset_s * wave.sample_rate));
    int64_t count = static_cast<int64_t>(std::llround(len_s * wave.sample_rate));
    if (begin < 0) begin = 0;
    if (begin > n) begin = n;
    if (begin + count > n) count = n - begin;
    out.samples.assign(wave.samples.begin() + begin, wave.samples.begin() + begin + count);
    return out;
}

Tensor log_mel(const Waveform& wave, const EncoderConfig& cfg) {
    if (wave.samples.empty()) throw ContractError("log_mel: empty waveform");
    if (wave.sample_rate != cfg.sample_rate) {
        throw ContractError("log_mel: expected " + std::to_string(cfg.sample_rate) +
                            " Hz audio, got " + std::to_string(wave.sample_rate));
    }
    const int win = cfg.win_length;
    const int hop = cfg.hop_length;
    if (win > kFftSize) throw ConfigError("log_mel: win_length exceeds FFT size");
    const int64_t n = static_cast<int64_t>(wave.samples.size());
    const int frames = n >= win ? static_cast<int>((n - win) / hop) + 1 : 1;
    const int bins = kFftSize / 2 + 1;

    std::vector<double> hann(win);
    for (int i = 0; i < win; ++i) {
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1));
    }

    // triangular mel filterbank over [0, sr/2]
    const int n_mels = cfg.n_mels;
    std::vector<double> mel_points(n_mels + 2);
    const double mel_max = hz_to_mel(cfg.sample_rate / 2.0);
    for (int m = 0; m < n_mels + 2; ++m) {
        mel_points[m] = mel_to_hz(mel_max * m / (n_mels + 1));
    }
    const auto bin_hz = [&](int b) {
        return static_cast<double>(b) * cfg.sample_rate / kFftSize;
    };

    Tensor mel({1, n_mels, frames});
    std::vector<double> power(bins);
    std::vector<std::complex<double>> fft_buf(kFftSize);
    for (int f = 0; f < frames; ++f) {
        const int64_t start = static_cast<int64_t>(f) * hop;
        for (int i = 0; i < kFftSize; ++i) {
            const int64_t idx = start + i;
            const double s = (i < win && idx < n) ? wave.samples[idx] * hann[i] : 0.0;
            fft_buf[i] = {s, 0.0};
        }
        fft(fft_buf);
        for (int b = 0; b < bins; ++b) {
            power[b] = std::norm(fft_buf[b]);
        }
        for (int m = 0; m < n_mels; ++m) {
            const double lo = mel_points[m], mid = mel_points[m + 1], hi = mel_points[m + 2];
            double acc = 0.0;
            for (int b = 0; b < bins; ++b) {
                const double hz = bin_hz(b);
                if (hz <= lo || hz >= hi) continue;
                const double w = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
                acc += w * power[b];
            }
            mel.at3(0, m, f) = std::log(std::max(acc, cfg.log_floor));
        }
    }
    return mel;
}

Embedding audio_encode(const AudioEncoder& enc, const EncoderConfig& cfg,
                       const Waveform& wave, double len_s) {
    if (wave.samples.empty()) throw ContractError("audio_encode: empty waveform");
    const int64_t expected = static_cast<int64_t>(std::llround(len_s * cfg.sample_rate));
    const int64_t got = static_cast<int64_t>(wave.samples.size());
    if (std::llabs(got - expected) > cfg.hop_length) {
        throw ContractError("audio_encode: waveform length " + std::to_string(got) +
                            " does not match len_s (expected ~" + std::to_string(expected) +
                            " samples)");
    }
    return enc.encode(log_mel(wave, cfg));
}

}  // namespace vsl
