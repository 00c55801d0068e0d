#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "r2o/checkpoint.hpp"
#include "r2o/config.hpp"
#include "r2o/pipeline.hpp"
#include "r2o/rng.hpp"

namespace fs = std::filesystem;
using namespace r2o;

namespace {

int cmd_pretrain(const std::string& config_path, const std::string& resume, bool force) {
    const RunConfig cfg = load_run_config(config_path);
    const PretrainResult result = pretrain(cfg, resume, force);
    std::cout << "metrics: " << result.metrics_csv << "\n";
    std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
    return 0;
}

int cmd_schedule(const std::string& config_path) {
    const RunConfig cfg = load_run_config(config_path);
    std::cout << "epoch,K\n";
    for (int t = 0; t <= cfg.epochs; ++t) std::cout << t << "," << k_at(cfg.curriculum, t) << "\n";
    return 0;
}

int cmd_refine(const std::string& config_path, const std::string& checkpoint_path,
               const std::string& images_dir, int k, const std::string& out_dir, bool emit_slic,
               bool per_image, bool force) {
    RunConfig cfg = load_run_config(config_path);
    // The checkpoint hash covers the training config; refining a different
    // image directory is legal, so take the hash before the override.
    const std::uint64_t train_hash = cfg.hash();
    if (!images_dir.empty()) cfg.data.images_dir = images_dir;
    const Dataset data = load_dataset(cfg);

    NetworkPair pair = NetworkPair::init(cfg.encoder, cfg.heads, cfg.seed);
    OptimizerState opt = make_optimizer_state(pair.online_params());
    const CheckpointMeta meta = load_checkpoint(checkpoint_path, pair, opt, train_hash, force);
    if (k <= 0) k = k_at(cfg.curriculum, std::min(meta.epoch, cfg.epochs));

    fs::create_directories(out_dir);
    char name[64];
    for (int begin = 0; begin < data.size(); begin += cfg.batch_size) {
        const int end = std::min(data.size(), begin + cfg.batch_size);
        std::vector<const ImageTensor*> imgs;
        std::vector<SlicResult> priors;
        for (int i = begin; i < end; ++i) {
            imgs.push_back(&data.images[static_cast<std::size_t>(i)]);
            priors.push_back(compute_prior(cfg, data.images[static_cast<std::size_t>(i)]));
        }
        std::vector<const SlicResult*> prior_ptrs;
        for (const SlicResult& p : priors) prior_ptrs.push_back(&p);

        const RefineOutput refined =
            refine_batch(cfg, pair, imgs, prior_ptrs, k,
                         derive_seed(cfg.seed, {0xCE, static_cast<std::uint64_t>(begin)}), per_image);
        for (int i = begin; i < end; ++i) {
            const RefinedMask& mask = refined.masks[static_cast<std::size_t>(i - begin)];
            LabelMap grid(mask.h, mask.w);
            grid.labels.assign(mask.grid.begin(), mask.grid.end());
            std::int32_t mx = 0;
            for (std::int32_t id : grid.labels) mx = std::max(mx, id);
            grid.n_labels = mx + 1;
            std::snprintf(name, sizeof(name), "refined_%05d.r2l", i);
            save_label_map(grid, out_dir + "/" + name);
            if (emit_slic) {
                std::snprintf(name, sizeof(name), "slic_%05d.r2l", i);
                save_label_map(priors[static_cast<std::size_t>(i - begin)].labels, out_dir + "/" + name);
            }
        }
    }
    std::cout << "wrote " << data.size() << " refined masks (K=" << k << ") to " << out_dir << "\n";
    return 0;
}

int cmd_eval_abo(const std::string& config_path, const std::vector<std::string>& checkpoints,
                 const std::string& out_csv) {
    const RunConfig cfg = load_run_config(config_path);
    const Dataset data = load_dataset(cfg);
    const auto rows = eval_abo_over_checkpoints(cfg, checkpoints, data);
    write_abo_csv(out_csv, rows);
    for (const AboRow& row : rows)
        std::cout << "epoch " << row.epoch << ": refined ABO " << row.refined_abo << ", prior ABO "
                  << row.slic_abo << "\n";
    std::cout << "wrote " << out_csv << "\n";
    return 0;
}

int cmd_eval_seg(const std::string& config_path, const std::string& checkpoint_path, int k,
                 const std::string& out_csv, bool force) {
    const RunConfig cfg = load_run_config(config_path);
    const Dataset data = load_dataset(cfg);
    NetworkPair pair = NetworkPair::init(cfg.encoder, cfg.heads, cfg.seed);
    OptimizerState opt = make_optimizer_state(pair.online_params());
    load_checkpoint(checkpoint_path, pair, opt, cfg.hash(), force);

    const auto mious = eval_unsup_segmentation(cfg, pair, data, k, cfg.seed);
    std::ofstream out(out_csv, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + out_csv);
    out << "image,miou\n";
    double sum = 0.0;
    for (std::size_t i = 0; i < mious.size(); ++i) {
        out << i << "," << mious[i] << "\n";
        sum += mious[i];
    }
    const double mean = mious.empty() ? 0.0 : sum / static_cast<double>(mious.size());
    std::cout << "mean fg/bg mIoU over " << mious.size() << " images: " << mean << "\n";
    std::cout << "wrote " << out_csv << "\n";
    return 0;
}

int cmd_gen_synthetic(const std::string& spec_path, const std::string& out_dir) {
    const SyntheticCorpusSpec spec = load_synthetic_spec(spec_path);
    write_synthetic_corpus(spec, out_dir);
    std::cout << "wrote " << spec.n_images << " images to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Region-to-object self-supervised pretraining"};
    app.require_subcommand(1);

    std::string config_path, resume, checkpoint, images_dir, out_dir, out_csv, spec_path;
    std::vector<std::string> checkpoints;
    int k_refine = 0, k_seg = 5;
    bool force = false, emit_slic = false, per_image = false;

    auto* pre = app.add_subcommand("pretrain", "Run the pretraining loop");
    pre->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
    pre->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
    pre->add_flag("--force", force, "Ignore config-hash mismatches on resume");

    auto* sched = app.add_subcommand("schedule", "Print the K(t) table as CSV");
    sched->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);

    auto* refine = app.add_subcommand("refine", "Emit refined masks as label maps");
    refine->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
    refine->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    refine->add_option("--images", images_dir, "Image directory (defaults to the config corpus)");
    refine->add_option("--k", k_refine, "Cluster count (default: the schedule at the checkpoint epoch)");
    refine->add_option("--out", out_dir, "Output directory")->required();
    refine->add_flag("--emit-slic", emit_slic, "Also write the prior label maps");
    refine->add_flag("--per-image", per_image, "Cluster per image instead of per batch");
    refine->add_flag("--force", force, "Ignore config-hash mismatches");

    auto* eabo = app.add_subcommand("eval-abo", "Average best overlap per checkpoint");
    eabo->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
    eabo->add_option("--checkpoints", checkpoints, "Checkpoint files (ordered)")->required();
    eabo->add_option("--out", out_csv, "Output CSV")->required();

    auto* eseg = app.add_subcommand("eval-seg", "Unsupervised foreground segmentation protocol");
    eseg->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
    eseg->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required()->check(CLI::ExistingFile);
    eseg->add_option("--k", k_seg, "Clusters for the per-image k-means");
    eseg->add_option("--out", out_csv, "Output CSV")->required();
    eseg->add_flag("--force", force, "Ignore config-hash mismatches");

    auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic shapes corpus");
    gen->add_option("--spec", spec_path, "Spec file with a [synthetic] section")->required()->check(CLI::ExistingFile);
    gen->add_option("--out", out_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(pre)) return cmd_pretrain(config_path, resume, force);
        if (app.got_subcommand(sched)) return cmd_schedule(config_path);
        if (app.got_subcommand(refine))
            return cmd_refine(config_path, checkpoint, images_dir, k_refine, out_dir, emit_slic, per_image, force);
        if (app.got_subcommand(eabo)) return cmd_eval_abo(config_path, checkpoints, out_csv);
        if (app.got_subcommand(eseg)) return cmd_eval_seg(config_path, checkpoint, k_seg, out_csv, force);
        if (app.got_subcommand(gen)) return cmd_gen_synthetic(spec_path, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
