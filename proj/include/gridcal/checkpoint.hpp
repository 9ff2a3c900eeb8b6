#pragma once

#include "gridcal/predictor.hpp"

#include <filesystem>
#include <memory>

namespace gridcal {

// A checkpoint is `<stem>.bin` (every parameter and buffer as a f32 tensor
// file, concatenated) plus `<stem>.manifest`:
//   kind conv-bn
//   config hidden 16
//   param conv1.weight 3x3x96x16 0
//   buffer bn1.running_mean 16 55344
// where the last field is the byte offset of the tensor inside the .bin.
// Values are stored as 32-bit floats, so a reload rounds them once.
void save_predictor(const Predictor& model, const std::filesystem::path& stem);
std::unique_ptr<Predictor> load_predictor(const std::filesystem::path& stem);

// Ensembles are a directory holding member_<m> checkpoints and a `members`
// file listing one seed per line.
void save_ensemble(const EnsembleModel& ens, const std::filesystem::path& dir);
EnsembleModel load_ensemble(const std::filesystem::path& dir);

// Rounds every parameter and buffer through float32, giving the model a
// reload would produce.
void round_to_storage(Predictor& model);

} // namespace gridcal
