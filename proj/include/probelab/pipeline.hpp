#pragma once

#include "probelab/config.hpp"

namespace probelab {

// Filesystem-level pipeline stages. Each writes artifacts under cfg.out_dir
// and a wall-clock record under out_dir/timings/ (timings are the one output
// excluded from byte-reproducibility).
void cmd_generate(const ExperimentConfig& cfg);
void cmd_train_base(const ExperimentConfig& cfg);
void cmd_probe(const ExperimentConfig& cfg);
void cmd_finetune(const ExperimentConfig& cfg);
void cmd_report(const ExperimentConfig& cfg);

// Directory-safe form of a schedule name ("L>M" -> "L_to_M", "L-M" -> "L_M").
std::string schedule_slug(const std::string& name);

}  // namespace probelab
