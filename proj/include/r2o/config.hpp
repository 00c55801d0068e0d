#pragma once

#include <cstdint>
#include <string>

#include "r2o/augment.hpp"
#include "r2o/encoder.hpp"
#include "r2o/objective.hpp"
#include "r2o/optim.hpp"
#include "r2o/refine.hpp"
#include "r2o/slic.hpp"
#include "r2o/synthetic.hpp"

namespace r2o {

enum class PriorKind { slic, grid };

struct DataConfig {
    std::string images_dir;  // directory of .ppm files; empty = inline synthetic corpus
    SyntheticCorpusSpec synthetic;
};

struct RunConfig {
    // [run]
    std::string out_dir = "runs/out";
    std::uint64_t seed = 1;
    int epochs = 50;
    int batch_size = 32;
    int image_side = 64;
    int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
    int mask_dump_every = 0;   // epochs between refined-mask dumps; 0 = off
    int threads = 0;           // 0 = auto
    LossNorm loss_norm = LossNorm::triple_mean;
    PriorKind prior = PriorKind::slic;
    int grid_prior_n = 10;  // for prior = grid

    DataConfig data;
    SlicConfig slic;
    AugmentationConfig augment;
    EncoderConfig encoder;
    HeadConfig heads;
    CurriculumConfig curriculum;
    OptimConfig optim;  // total_steps filled in by the training loop
    TauConfig tau;      // total_epochs follows epochs

    void validate() const;

    // Canonical key-per-line rendering; the checkpoint stores its FNV-1a
    // hash so resumes can detect config drift.
    std::string canonical() const;
    std::uint64_t hash() const;
};

// Plain-text config: [section] headers, key = value lines, '#' comments.
// Unknown keys are an error (typos should not pass silently).
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Parses just the [synthetic] section (gen-synthetic specs).
SyntheticCorpusSpec parse_synthetic_spec(const std::string& text);
SyntheticCorpusSpec load_synthetic_spec(const std::string& path);

}  // namespace r2o
