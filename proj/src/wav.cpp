#include "audio_audit/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "audio_audit/errors.hpp"

namespace audio_audit {

namespace {

std::uint32_t u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::vector<std::uint8_t> riff_header(std::uint16_t format, int channels, int rate, int bits, std::size_t data_bytes) {
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    put_tag(out, "RIFF");
    put_u32(out, static_cast<std::uint32_t>(36 + data_bytes));
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, format);
    put_u16(out, static_cast<std::uint16_t>(channels));
    put_u32(out, static_cast<std::uint32_t>(rate));
    put_u32(out, static_cast<std::uint32_t>(rate * channels * bits / 8));
    put_u16(out, static_cast<std::uint16_t>(channels * bits / 8));
    put_u16(out, static_cast<std::uint16_t>(bits));
    put_tag(out, "data");
    put_u32(out, static_cast<std::uint32_t>(data_bytes));
    return out;
}

}  // namespace

double Waveform::rms() const {
    if (samples.empty()) return 0.0;
    double sq = 0.0;
    for (float v : samples) sq += static_cast<double>(v) * v;
    return std::sqrt(sq / static_cast<double>(samples.size()));
}

Waveform decode_wav(std::span<const std::uint8_t> bytes, const std::string& name) {
    const auto bad = [&name](const std::string& why) { fail(ErrorKind::Ingestion, name + ": " + why); };
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        bad("not a RIFF/WAVE file");
    }
    std::uint16_t format = 0;
    int channels = 0;
    int rate = 0;
    int bits = 0;
    const std::uint8_t* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint8_t* chunk = bytes.data() + pos;
        const std::size_t len = u32(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = std::min(len, bytes.size() - body);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (avail < 16) bad("truncated fmt chunk");
            format = u16(chunk + 8);
            channels = u16(chunk + 10);
            rate = static_cast<int>(u32(chunk + 12));
            bits = u16(chunk + 22);
            if (format == kFormatExtensible) {
                if (avail < 26) bad("truncated extensible fmt chunk");
                format = u16(chunk + 8 + 24);  // first two bytes of the subformat GUID
            }
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = avail;
        }
        pos = body + len + (len & 1u);
    }
    if (channels <= 0 || rate <= 0) bad("missing or invalid fmt chunk");
    if (data == nullptr) bad("missing data chunk");

    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32) {
        bad("unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) + " bit)");
    }
    const std::size_t frame = static_cast<std::size_t>(channels) * (bits / 8);
    const std::size_t frames = data_len / frame;

    Waveform wav;
    wav.sample_rate = rate;
    wav.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const std::uint8_t* p = data + f * frame + static_cast<std::size_t>(c) * (bits / 8);
            if (pcm16) {
                acc += static_cast<std::int16_t>(u16(p)) / 32768.0;
            } else {
                const std::uint32_t b = u32(p);
                float v;
                std::memcpy(&v, &b, 4);
                if (!std::isfinite(v)) bad("non-finite float sample");
                acc += v;
            }
        }
        wav.samples[f] = static_cast<float>(acc / channels);
    }
    return wav;
}

Waveform read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Ingestion, path.string() + ": cannot open");
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    auto wav = decode_wav(bytes, path.string());
    return wav.sample_rate == kTargetSampleRate ? wav : resample_linear(wav, kTargetSampleRate);
}

Waveform resample_linear(const Waveform& in, int target_rate) {
    if (target_rate <= 0) fail(ErrorKind::Parameter, "target sample rate must be positive");
    if (in.sample_rate == target_rate || in.empty()) return {target_rate, in.samples};
    const double step = static_cast<double>(in.sample_rate) / target_rate;
    const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(in.size()) / step));
    Waveform out{target_rate, std::vector<float>(n_out)};
    const std::size_t last = in.size() - 1;
    for (std::size_t i = 0; i < n_out; ++i) {
        const double t = static_cast<double>(i) * step;
        const auto i0 = std::min(static_cast<std::size_t>(t), last);
        const std::size_t i1 = std::min(i0 + 1, last);
        const double frac = t - static_cast<double>(i0);
        out.samples[i] = static_cast<float>(in.samples[i0] + frac * (in.samples[i1] - in.samples[i0]));
    }
    return out;
}

std::vector<std::uint8_t> encode_wav_pcm16(const Waveform& wav) {
    auto out = riff_header(kFormatPcm, 1, wav.sample_rate, 16, wav.size() * 2);
    for (float v : wav.samples) {
        const double scaled = std::round(std::clamp(static_cast<double>(v), -1.0, 1.0) * 32768.0);
        const auto s = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        put_u16(out, static_cast<std::uint16_t>(s));
    }
    return out;
}

std::vector<std::uint8_t> encode_wav_float32(std::span<const float> interleaved, int channels, int sample_rate) {
    auto out = riff_header(kFormatFloat, channels, sample_rate, 32, interleaved.size() * 4);
    for (float v : interleaved) {
        std::uint32_t b;
        std::memcpy(&b, &v, 4);
        put_u32(out, b);
    }
    return out;
}

void write_wav_pcm16(const Waveform& wav, const std::filesystem::path& path) {
    const auto bytes = encode_wav_pcm16(wav);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace audio_audit
