#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace audio_audit {

inline constexpr int kTargetSampleRate = 16000;

/// Mono audio, nominally in [-1, 1].
struct Waveform {
    int sample_rate = kTargetSampleRate;
    std::vector<float> samples;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    double rms() const;
    double duration_s() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

/// Decodes RIFF WAVE (PCM 16-bit or IEEE float32, any channel count) and
/// downmixes by channel averaging. Keeps the file's sample rate. Throws
/// AuditError(Ingestion) mentioning `name`.
Waveform decode_wav(std::span<const std::uint8_t> bytes, const std::string& name = "<memory>");

/// decode_wav + linear resampling to 16 kHz.
Waveform read_wav(const std::filesystem::path& path);

/// Linear interpolation. Adequate for corruption bookkeeping, not for
/// encoder input (aliasing is not filtered).
Waveform resample_linear(const Waveform& in, int target_rate);

/// PCM 16-bit mono, values clipped to [-1, 1] and scaled by 32768.
std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& wav);
/// Same layout from IEEE float32 samples; used mainly by fixtures.
std::vector<std::uint8_t> encode_wav_float32(std::span<const float> interleaved, int channels, int sample_rate);
void write_wav_pcm16(const Waveform& wav, const std::filesystem::path& path);

}  // namespace audio_audit
