#pragma once

// Versioned checkpoint container shared by speakers and learned listeners.
//
//   line 1: "IREGCKPT <format_version>"
//   line 2: JSON header (kind, stage, dims, vocab hash, parameter shapes)
//   rest  : parameter values as little-endian IEEE-754 doubles, in header order

#include <filesystem>
#include <stdexcept>

#include "ireg/listener.hpp"
#include "ireg/speaker.hpp"

namespace ireg {

constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_speaker(const Speaker& speaker, const std::filesystem::path& path);
Speaker load_speaker(const std::filesystem::path& path);
/// Refuses to load when the stored vocabulary hash differs from `expected`.
Speaker load_speaker(const std::filesystem::path& path, const Vocabulary& expected);

void save_listener(const LearnedListener& listener, const std::filesystem::path& path);
/// Loaded listeners are always frozen.
LearnedListener load_listener(const std::filesystem::path& path);

/// Reads only the header's "kind" field ("speaker" or "listener").
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace ireg
