#ifndef BUNDLECHOICE_VERSION_HPP
#define BUNDLECHOICE_VERSION_HPP

namespace bundlechoice {
inline constexpr const char* kVersion = "0.1.0";
} // namespace bundlechoice

#endif // BUNDLECHOICE_VERSION_HPP
