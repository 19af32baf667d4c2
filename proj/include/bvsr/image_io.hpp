#pragma once

#include "bvsr/frame.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace bvsr {

/// 8-bit PNG decoded to RGB in [0, 1]. Grayscale input is replicated to three
/// channels. Throws ParseError naming the file when decoding fails.
Frame read_png(const std::filesystem::path& path);

/// Clamps to [0, 1] and rounds to 8 bits.
void write_png(const std::filesystem::path& path, const Frame& frame);

/// PNG files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

FrameSequence read_sequence(const std::filesystem::path& dir);

/// Writes frames as %08d.png, creating the directory.
void write_sequence(const std::filesystem::path& dir, const FrameSequence& seq);

std::string frame_name(size_t index);

}  // namespace bvsr
