#include "r2o/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "r2o/parallel.hpp"
#include "r2o/rng.hpp"

namespace r2o {

namespace {

namespace fs = std::filesystem;

// Seed-stream tags; every random draw in a run derives from
// (base seed, tag, counters) so resuming never replays a sequence.
constexpr std::uint64_t kTagShuffle = 0x51;
constexpr std::uint64_t kTagAugment = 0xA6;
constexpr std::uint64_t kTagKmeans = 0xC3;

double wall_ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::string checkpoint_name(const std::string& dir, int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_epoch_%04d.r2c", epoch);
    return dir + "/" + buf;
}

void append_metrics(std::ofstream& out, const StepLog& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%ld,%d,%d,%.17g,%.17g,%.17g,%ld,%.3f\n", row.step, row.epoch,
                  row.k, row.tau, row.lr, row.loss, row.n_pairs, row.wall_ms);
    out << buf;
    out.flush();
}

std::vector<int> shuffled_indices(int n, std::uint64_t seed) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
}

// Proposals for one refined mask: one binary mask per present cluster id,
// nearest-upsampled to the target resolution.
std::vector<BinaryMask> mask_proposals(const RefinedMask& mask, int out_h, int out_w) {
    LabelMap grid(mask.h, mask.w);
    grid.labels.assign(mask.grid.begin(), mask.grid.end());
    std::int32_t max_id = 0;
    for (std::int32_t id : mask.grid) max_id = std::max(max_id, id);
    grid.n_labels = max_id + 1;
    const LabelMap up = upsample_labels_nearest(grid, out_h, out_w);
    std::vector<BinaryMask> out;
    out.reserve(mask.present_ids.size());
    for (std::int32_t id : mask.present_ids) {
        BinaryMask bm(out_h, out_w);
        for (std::size_t i = 0; i < up.labels.size(); ++i) bm.v[i] = up.labels[i] == id;
        out.push_back(std::move(bm));
    }
    return out;
}

std::vector<BinaryMask> gt_object_masks(const LabelMap& gt) {
    std::vector<BinaryMask> out;
    for (std::int32_t id = 1; id < gt.n_labels; ++id) {
        BinaryMask bm(gt.h, gt.w);
        bool any = false;
        for (std::size_t i = 0; i < gt.labels.size(); ++i) {
            bm.v[i] = gt.labels[i] == id;
            any |= bm.v[i] != 0;
        }
        if (any) out.push_back(std::move(bm));
    }
    return out;
}

}  // namespace

Dataset load_dataset(const RunConfig& cfg) {
    Dataset data;
    if (cfg.data.images_dir.empty()) {
        const auto corpus = gen_synthetic_corpus(cfg.data.synthetic);
        for (const SyntheticImage& s : corpus) {
            data.images.push_back(s.image.h == cfg.image_side && s.image.w == cfg.image_side
                                      ? s.image
                                      : resize_bilinear(s.image, cfg.image_side, cfg.image_side));
            data.gt.push_back(s.gt);
        }
        return data;
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(cfg.data.images_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("load_dataset: no .ppm images in " + cfg.data.images_dir);

    bool all_gt = true;
    std::vector<LabelMap> gts;
    for (const fs::path& p : files) {
        ImageTensor img = load_ppm(p.string());
        data.images.push_back(img.h == cfg.image_side && img.w == cfg.image_side
                                  ? std::move(img)
                                  : resize_bilinear(img, cfg.image_side, cfg.image_side));
        fs::path gt_path = p;
        gt_path.replace_extension("");  // strip .ppm
        gt_path += ".gt.r2l";
        if (fs::exists(gt_path))
            gts.push_back(load_label_map(gt_path.string()));
        else
            all_gt = false;
    }
    if (all_gt) data.gt = std::move(gts);
    return data;
}

SlicResult compute_prior(const RunConfig& cfg, const ImageTensor& img) {
    if (cfg.prior == PriorKind::grid) return grid_prior(img.h, img.w, cfg.grid_prior_n);
    return slic_segment(rgb_to_lab(img), cfg.slic, cfg.seed);
}

RefineOutput refine_batch(const RunConfig& cfg, NetworkPair& pair,
                          const std::vector<const ImageTensor*>& images,
                          const std::vector<const SlicResult*>& priors, int k,
                          std::uint64_t kmeans_seed, bool per_image) {
    const int b = static_cast<int>(images.size());
    const int mid = cfg.encoder.mid_grid();

    // Refinement forward: target network, eval mode (running statistics).
    const Tensor x = stack_images(images, cfg.image_side);
    const FeaturePair feats = trunk_forward(pair.target.trunk, x, false, false, nullptr);

    RefineOutput out;
    out.prior_ds.reserve(static_cast<std::size_t>(b));
    std::vector<RegionEmbeddings> embeddings(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        out.prior_ds.push_back(downsample_labels(priors[static_cast<std::size_t>(i)]->labels, mid, mid));
        Tensor mid_i({mid, mid, cfg.encoder.d_mid()});
        const std::size_t n = mid_i.size();
        std::copy(feats.mid.data() + static_cast<std::size_t>(i) * n,
                  feats.mid.data() + static_cast<std::size_t>(i + 1) * n, mid_i.data());
        embeddings[static_cast<std::size_t>(i)] = pool_regions(mid_i, out.prior_ds.back());
    }

    if (per_image) {
        out.masks.resize(static_cast<std::size_t>(b));
        for (int i = 0; i < b; ++i) {
            std::vector<RegionEmbeddings> one{embeddings[static_cast<std::size_t>(i)]};
            const auto points = concat_embeddings(one);
            const ClusterModel model =
                kmeans(points, k, derive_seed(kmeans_seed, {static_cast<std::uint64_t>(i)}));
            std::vector<LabelMap> labels{out.prior_ds[static_cast<std::size_t>(i)]};
            out.masks[static_cast<std::size_t>(i)] = refine_masks(one, model, labels)[0];
        }
    } else {
        const auto points = concat_embeddings(embeddings);
        const ClusterModel model = kmeans(points, k, kmeans_seed);
        out.masks = refine_masks(embeddings, model, out.prior_ds);
    }
    return out;
}

PretrainResult pretrain(const RunConfig& cfg, const std::string& resume_path, bool force_resume) {
    cfg.validate();
    if (cfg.threads > 0) set_threads(cfg.threads);

    Dataset data = load_dataset(cfg);
    if (data.size() < cfg.batch_size)
        throw std::runtime_error("pretrain: dataset smaller than one batch");

    const int steps_per_epoch = data.size() / cfg.batch_size;
    OptimConfig optim_cfg = cfg.optim;
    optim_cfg.total_steps = static_cast<long>(steps_per_epoch) * cfg.epochs;
    optim_cfg.validate();

    NetworkPair pair = NetworkPair::init(cfg.encoder, cfg.heads, cfg.seed);
    auto params = pair.online_params();
    OptimizerState opt = make_optimizer_state(params);

    int start_epoch = 0;
    long step = 0;
    if (!resume_path.empty()) {
        const CheckpointMeta meta = load_checkpoint(resume_path, pair, opt, cfg.hash(), force_resume);
        start_epoch = meta.epoch;
        step = meta.step;
        if (meta.base_seed != cfg.seed && !force_resume)
            throw std::runtime_error("pretrain: checkpoint seed differs from the config seed");
    }

    fs::create_directories(cfg.out_dir);
    PretrainResult result;
    result.metrics_csv = cfg.out_dir + "/metrics.csv";
    std::ofstream metrics;
    bool need_header = true;
    if (start_epoch == 0) {
        metrics.open(result.metrics_csv, std::ios::trunc);
    } else {
        // Resume appends; a fresh directory still gets a header.
        need_header = !fs::exists(result.metrics_csv) || fs::file_size(result.metrics_csv) == 0;
        metrics.open(result.metrics_csv, std::ios::app);
    }
    if (!metrics) throw std::runtime_error("pretrain: cannot write " + result.metrics_csv);
    if (need_header) metrics << "step,epoch,K,tau,lr,loss,n_pairs,wall_ms\n";

    // The prior is augmentation-independent; computed once per image.
    std::vector<std::optional<SlicResult>> prior_cache(static_cast<std::size_t>(data.size()));
    auto prior_of = [&](int idx) -> const SlicResult* {
        auto& slot = prior_cache[static_cast<std::size_t>(idx)];
        if (!slot) slot = compute_prior(cfg, data.images[static_cast<std::size_t>(idx)]);
        return &*slot;
    };

    const int final_grid = cfg.encoder.final_grid();

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const int k = k_at(cfg.curriculum, epoch);
        const double tau = tau_at(cfg.tau, epoch);
        const auto order =
            shuffled_indices(data.size(), derive_seed(cfg.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)}));

        for (int bstep = 0; bstep < steps_per_epoch; ++bstep) {
            const auto t0 = std::chrono::steady_clock::now();
            std::vector<int> idxs(order.begin() + static_cast<std::ptrdiff_t>(bstep) * cfg.batch_size,
                                  order.begin() + static_cast<std::ptrdiff_t>(bstep + 1) * cfg.batch_size);

            // (a) Region refinement with the current target network.
            std::vector<const ImageTensor*> imgs;
            std::vector<const SlicResult*> priors;
            for (int idx : idxs) {
                imgs.push_back(&data.images[static_cast<std::size_t>(idx)]);
                priors.push_back(prior_of(idx));
            }
            const std::uint64_t km_seed = derive_seed(
                cfg.seed, {kTagKmeans, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(bstep)});
            RefineOutput refined = refine_batch(cfg, pair, imgs, priors, k, km_seed, false);

            // (b) Views, aligned masks, symmetric masked loss, update.
            std::vector<AugmentedView> v1(static_cast<std::size_t>(cfg.batch_size));
            std::vector<AugmentedView> v2(static_cast<std::size_t>(cfg.batch_size));
            std::vector<RefinedMask> m1(static_cast<std::size_t>(cfg.batch_size));
            std::vector<RefinedMask> m2(static_cast<std::size_t>(cfg.batch_size));
            for (int i = 0; i < cfg.batch_size; ++i) {
                const std::uint64_t aug_seed =
                    derive_seed(cfg.seed, {kTagAugment, static_cast<std::uint64_t>(epoch),
                                           static_cast<std::uint64_t>(bstep), static_cast<std::uint64_t>(i)});
                auto views = make_views(*imgs[static_cast<std::size_t>(i)], cfg.augment, aug_seed);
                v1[static_cast<std::size_t>(i)] = std::move(views.first);
                v2[static_cast<std::size_t>(i)] = std::move(views.second);
                m1[static_cast<std::size_t>(i)] = align_mask(refined.masks[static_cast<std::size_t>(i)],
                                                             v1[static_cast<std::size_t>(i)].geometry,
                                                             final_grid, final_grid);
                m2[static_cast<std::size_t>(i)] = align_mask(refined.masks[static_cast<std::size_t>(i)],
                                                             v2[static_cast<std::size_t>(i)].geometry,
                                                             final_grid, final_grid);
            }

            std::vector<const ImageTensor*> x1p, x2p;
            for (int i = 0; i < cfg.batch_size; ++i) {
                x1p.push_back(&v1[static_cast<std::size_t>(i)].image);
                x2p.push_back(&v2[static_cast<std::size_t>(i)].image);
            }
            const Tensor x1 = stack_images(x1p, cfg.image_side);
            const Tensor x2 = stack_images(x2p, cfg.image_side);

            pair.zero_grads();
            TrunkCache cache1, cache2;
            const FeaturePair on1 = trunk_forward(pair.online.trunk, x1, true, true, &cache1);
            const FeaturePair on2 = trunk_forward(pair.online.trunk, x2, true, true, &cache2);
            const FeaturePair tg1 = trunk_forward(pair.target.trunk, x1, true, false, nullptr);
            const FeaturePair tg2 = trunk_forward(pair.target.trunk, x2, true, false, nullptr);

            MaskedLossGrads grads;
            const LossReport report = symmetric_masked_loss(
                on1.final, on2.final, tg1.final, tg2.final, m1, m2, pair.online.projector,
                pair.online.predictor, pair.target.projector, true, cfg.loss_norm, &grads);
            if (!std::isfinite(report.total))
                throw std::runtime_error("pretrain: non-finite loss at step " + std::to_string(step));

            trunk_backward(pair.online.trunk, cache1, grads.d_final_v1);
            trunk_backward(pair.online.trunk, cache2, grads.d_final_v2);

            const double lr = lr_at(optim_cfg, step);
            optim_step(params, opt, lr, optim_cfg);
            pair.ema_update(tau);
            ++step;

            StepLog row{step, epoch, k, tau, lr, report.total, report.n_pairs, wall_ms_since(t0)};
            result.logs.push_back(row);
            append_metrics(metrics, row);
        }

        const int done = epoch + 1;
        if (cfg.mask_dump_every > 0 && done % cfg.mask_dump_every == 0) {
            // Refined masks of the first batch under the epoch's final state.
            const auto dump_order = shuffled_indices(
                data.size(), derive_seed(cfg.seed, {kTagShuffle, static_cast<std::uint64_t>(epoch)}));
            std::vector<const ImageTensor*> imgs;
            std::vector<const SlicResult*> priors;
            for (int i = 0; i < cfg.batch_size; ++i) {
                imgs.push_back(&data.images[static_cast<std::size_t>(dump_order[static_cast<std::size_t>(i)])]);
                priors.push_back(prior_of(dump_order[static_cast<std::size_t>(i)]));
            }
            RefineOutput refined = refine_batch(cfg, pair, imgs, priors, k,
                                                derive_seed(cfg.seed, {kTagKmeans, 0xD0,
                                                                       static_cast<std::uint64_t>(epoch)}),
                                                false);
            const std::string dir = cfg.out_dir + "/masks/epoch_" + std::to_string(done);
            fs::create_directories(dir);
            for (int i = 0; i < cfg.batch_size; ++i) {
                LabelMap grid(refined.masks[static_cast<std::size_t>(i)].h,
                              refined.masks[static_cast<std::size_t>(i)].w);
                grid.labels.assign(refined.masks[static_cast<std::size_t>(i)].grid.begin(),
                                   refined.masks[static_cast<std::size_t>(i)].grid.end());
                std::int32_t mx = 0;
                for (std::int32_t id : grid.labels) mx = std::max(mx, id);
                grid.n_labels = mx + 1;
                char name[32];
                std::snprintf(name, sizeof(name), "img_%05d.r2l", i);
                save_label_map(grid, dir + "/" + name);
            }
        }
        if ((cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) || done == cfg.epochs) {
            const std::string path = checkpoint_name(cfg.out_dir, done);
            save_checkpoint(path, pair, opt, {1, done, step, cfg.hash(), cfg.seed});
            result.checkpoints.push_back(path);
            if (done == cfg.epochs) result.final_checkpoint = path;
        }
    }
    return result;
}

std::vector<AboRow> eval_abo_over_checkpoints(const RunConfig& cfg,
                                              const std::vector<std::string>& checkpoint_paths,
                                              const Dataset& data) {
    if (!data.has_gt()) throw std::runtime_error("eval_abo: dataset has no ground truth");

    // Priors and their ABO are training-independent.
    std::vector<SlicResult> priors;
    priors.reserve(static_cast<std::size_t>(data.size()));
    for (int i = 0; i < data.size(); ++i) priors.push_back(compute_prior(cfg, data.images[static_cast<std::size_t>(i)]));

    double slic_abo_sum = 0.0;
    int slic_images = 0;
    for (int i = 0; i < data.size(); ++i) {
        const auto gt = gt_object_masks(data.gt[static_cast<std::size_t>(i)]);
        if (gt.empty()) continue;
        const auto proposals = masks_from_labels(priors[static_cast<std::size_t>(i)].labels);
        slic_abo_sum += abo(gt, proposals).abo;
        ++slic_images;
    }
    const double slic_abo = slic_images ? slic_abo_sum / slic_images : 0.0;

    std::vector<AboRow> rows;
    for (const std::string& path : checkpoint_paths) {
        NetworkPair pair = NetworkPair::init(cfg.encoder, cfg.heads, cfg.seed);
        OptimizerState opt = make_optimizer_state(pair.online_params());
        const CheckpointMeta meta = load_checkpoint(path, pair, opt, cfg.hash(), false);
        const int epoch = std::min(meta.epoch, cfg.curriculum.total_epochs);
        const int k = k_at(cfg.curriculum, epoch);

        double abo_sum = 0.0;
        int n_images = 0;
        for (int begin = 0; begin < data.size(); begin += cfg.batch_size) {
            const int end = std::min(data.size(), begin + cfg.batch_size);
            std::vector<const ImageTensor*> imgs;
            std::vector<const SlicResult*> prior_ptrs;
            for (int i = begin; i < end; ++i) {
                imgs.push_back(&data.images[static_cast<std::size_t>(i)]);
                prior_ptrs.push_back(&priors[static_cast<std::size_t>(i)]);
            }
            RefineOutput refined = refine_batch(cfg, pair, imgs, prior_ptrs, k,
                                                derive_seed(cfg.seed, {kTagKmeans, 0xE0,
                                                                       static_cast<std::uint64_t>(meta.epoch),
                                                                       static_cast<std::uint64_t>(begin)}),
                                                false);
            for (int i = begin; i < end; ++i) {
                const auto gt = gt_object_masks(data.gt[static_cast<std::size_t>(i)]);
                if (gt.empty()) continue;
                const auto proposals = mask_proposals(refined.masks[static_cast<std::size_t>(i - begin)],
                                                      data.gt[static_cast<std::size_t>(i)].h,
                                                      data.gt[static_cast<std::size_t>(i)].w);
                abo_sum += abo(gt, proposals).abo;
                ++n_images;
            }
        }
        rows.push_back({meta.epoch, n_images ? abo_sum / n_images : 0.0, slic_abo});
    }
    return rows;
}

void write_abo_csv(const std::string& path, const std::vector<AboRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "epoch,refined_abo,slic_abo\n";
    char buf[128];
    for (const AboRow& row : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", row.epoch, row.refined_abo, row.slic_abo);
        out << buf;
    }
}

std::vector<double> eval_unsup_segmentation(const RunConfig& cfg, NetworkPair& pair,
                                            const Dataset& data, int k, std::uint64_t seed) {
    if (!data.has_gt()) throw std::runtime_error("eval_unsup_segmentation: dataset has no ground truth");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(data.size()));
    const int fh = cfg.encoder.final_grid();
    const int fd = cfg.encoder.d_final();
    for (int i = 0; i < data.size(); ++i) {
        std::vector<const ImageTensor*> one{&data.images[static_cast<std::size_t>(i)]};
        const Tensor x = stack_images(one, cfg.image_side);
        const FeaturePair feats = trunk_forward(pair.target.trunk, x, false, false, nullptr);
        Tensor f({fh, fh, fd});
        std::copy(feats.final.data(), feats.final.data() + f.size(), f.data());

        const LabelMap& gt = data.gt[static_cast<std::size_t>(i)];
        BinaryMask fg(gt.h, gt.w);
        for (std::size_t px = 0; px < gt.labels.size(); ++px) fg.v[px] = gt.labels[px] > 0;
        out.push_back(unsup_fg_segment(f, fg, k, derive_seed(seed, {static_cast<std::uint64_t>(i)})).miou);
    }
    return out;
}

}  // namespace r2o
