#pragma once

#include <filesystem>
#include <string>

#include "ld/distill.hpp"

namespace ld {

inline constexpr int kArtifactFormatVersion = 1;

// Deterministic JSON: fixed key order, shortest round-trip doubles.
std::string config_to_json(const RunConfig& config);
RunConfig config_from_json(const std::string& text);

std::string artifact_to_json(const DistillArtifact& artifact);
// Throws IncompatibleArtifact on malformed input or an unknown format version.
DistillArtifact artifact_from_json(const std::string& text);

void save_artifact(const DistillArtifact& artifact, const std::filesystem::path& path);
DistillArtifact load_artifact(const std::filesystem::path& path);

// Writes text to path, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ld
