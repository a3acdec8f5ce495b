#pragma once

namespace audio_audit {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kGeneratorVersion = "audio-audit-corruption/0.1.0";

}  // namespace audio_audit
