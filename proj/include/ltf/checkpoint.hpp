#pragma once

#include <string>

#include "ltf/autoencoder.hpp"
#include "ltf/classifier.hpp"
#include "ltf/denoiser.hpp"

namespace ltf {

struct DiffusionStack;

// Checkpoints are directories: manifest.json (architecture, seed, tensor
// index) plus one flat binary blob per tensor.
void save_classifier(const std::string& dir, const ClassifierModel& m);
ClassifierModel load_classifier(const std::string& dir);

void save_stack(const std::string& dir, const DiffusionStack& stack);
DiffusionStack load_stack(const std::string& dir);

// 16-hex id of the parameter checksum; stable across save/load.
std::string checkpoint_id(const ClassifierModel& m);

}  // namespace ltf
