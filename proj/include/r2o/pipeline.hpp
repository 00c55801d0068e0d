#pragma once

#include <optional>
#include <string>
#include <vector>

#include "r2o/checkpoint.hpp"
#include "r2o/config.hpp"
#include "r2o/eval.hpp"
#include "r2o/slic.hpp"

namespace r2o {

struct Dataset {
    std::vector<ImageTensor> images;  // resized to the configured side
    std::vector<LabelMap> gt;         // empty when unavailable

    bool has_gt() const { return !gt.empty(); }
    int size() const { return static_cast<int>(images.size()); }
};

// Loads the configured corpus: .ppm files under images_dir (optional
// *.gt.r2l ground truth), or the inline synthetic spec.
Dataset load_dataset(const RunConfig& cfg);

struct StepLog {
    long step = 0;
    int epoch = 0;
    int k = 0;
    double tau = 0.0, lr = 0.0, loss = 0.0;
    long n_pairs = 0;
    double wall_ms = 0.0;
};

struct PretrainResult {
    std::vector<StepLog> logs;
    std::string metrics_csv;
    std::string final_checkpoint;
    std::vector<std::string> checkpoints;  // cadence checkpoints + final
};

// The alternating loop: per batch, (a) recompute refined masks with the
// target network at the scheduled K, (b) one masked-BYOL gradient step on
// the online network plus an EMA update. Fully reproducible from
// (config, seed); optionally resumes from a checkpoint.
PretrainResult pretrain(const RunConfig& cfg, const std::string& resume_path = "",
                        bool force_resume = false);

// Shared refinement pass: SLIC (cached by the caller), target forward,
// region pooling, k-means at K over the whole batch (or per image).
struct RefineOutput {
    std::vector<RefinedMask> masks;         // one per image, mid-grid resolution
    std::vector<LabelMap> prior_ds;         // prior downsampled to the mid grid
};
RefineOutput refine_batch(const RunConfig& cfg, NetworkPair& pair,
                          const std::vector<const ImageTensor*>& images,
                          const std::vector<const SlicResult*>& priors, int k,
                          std::uint64_t kmeans_seed, bool per_image);

// Prior for one image, honoring cfg.prior.
SlicResult compute_prior(const RunConfig& cfg, const ImageTensor& img);

struct AboRow {
    int epoch = 0;
    double refined_abo = 0.0;
    double slic_abo = 0.0;
};

// For each checkpoint: refined masks at that epoch's K over the corpus,
// per-cluster proposals (nearest-upsampled), ABO against the GT objects.
// The prior's own ABO is computed once and repeated per row.
std::vector<AboRow> eval_abo_over_checkpoints(const RunConfig& cfg,
                                              const std::vector<std::string>& checkpoint_paths,
                                              const Dataset& data);

void write_abo_csv(const std::string& path, const std::vector<AboRow>& rows);

// Per-image unsupervised foreground protocol over a dataset with GT;
// returns per-image mIoU (foreground = any nonzero GT label).
std::vector<double> eval_unsup_segmentation(const RunConfig& cfg, NetworkPair& pair,
                                            const Dataset& data, int k, std::uint64_t seed);

}  // namespace r2o
