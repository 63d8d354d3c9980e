#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "coldgen/model.hpp"

namespace coldgen {

/// Writes `<stem>.json` (shape header and digest) and, for recurrent models,
/// `<stem>.bin` holding the parameters as little-endian IEEE-754 float64.
void save_checkpoint(const SequenceModel& model, const std::filesystem::path& stem);

/// Loads a checkpoint written by save_checkpoint. Throws ParseError on a
/// malformed header or a digest mismatch.
std::unique_ptr<SequenceModel> load_checkpoint(const std::filesystem::path& stem);

/// SHA-256 over the serialized parameters.
std::string checkpoint_digest(const SequenceModel& model);

}  // namespace coldgen
