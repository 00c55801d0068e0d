#include "r2o/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace r2o {

namespace {

struct Entry {
    std::string value;
    bool consumed = false;
};

using SectionMap = std::map<std::string, std::map<std::string, Entry>>;

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

SectionMap tokenize(const std::string& text) {
    SectionMap sections;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
        sections[section][key] = {value, false};
    }
    return sections;
}

class Reader {
public:
    explicit Reader(SectionMap sections) : sections_(std::move(sections)) {}

    bool has(const std::string& section, const std::string& key) {
        auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    std::string get(const std::string& section, const std::string& key, const std::string& fallback) {
        auto s = sections_.find(section);
        if (s == sections_.end()) return fallback;
        auto k = s->second.find(key);
        if (k == s->second.end()) return fallback;
        k->second.consumed = true;
        return k->second.value;
    }

    template <typename T, typename Parse>
    T parse(const std::string& section, const std::string& key, T fallback, Parse parse) {
        if (!has(section, key)) return fallback;
        const std::string raw = get(section, key, "");
        try {
            return parse(raw);
        } catch (const std::exception&) {
            throw std::runtime_error("config [" + section + "] " + key + ": cannot parse '" + raw + "'");
        }
    }

    long integer(const std::string& section, const std::string& key, long fallback) {
        return parse<long>(section, key, fallback, [](const std::string& s) {
            std::size_t pos = 0;
            const long v = std::stol(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("trailing characters");
            return v;
        });
    }

    double real(const std::string& section, const std::string& key, double fallback) {
        return parse<double>(section, key, fallback, [](const std::string& s) {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("trailing characters");
            return v;
        });
    }

    std::uint64_t u64(const std::string& section, const std::string& key, std::uint64_t fallback) {
        return parse<std::uint64_t>(section, key, fallback, [](const std::string& s) {
            std::size_t pos = 0;
            const std::uint64_t v = std::stoull(s, &pos);
            if (pos != s.size()) throw std::invalid_argument("trailing characters");
            return v;
        });
    }

    bool boolean(const std::string& section, const std::string& key, bool fallback) {
        return parse<bool>(section, key, fallback, [](const std::string& s) {
            if (s == "true" || s == "1" || s == "yes") return true;
            if (s == "false" || s == "0" || s == "no") return false;
            throw std::invalid_argument("not a boolean");
        });
    }

    void reject_unconsumed() const {
        for (const auto& [section, keys] : sections_)
            for (const auto& [key, entry] : keys)
                if (!entry.consumed)
                    throw std::runtime_error("config: unknown key [" + section + "] " + key);
    }

private:
    SectionMap sections_;
};

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        out.push_back(std::stoi(tok));
    }
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

std::vector<std::pair<int, int>> parse_piecewise(const std::string& s) {
    // "40:64,120:16,200:4"
    std::vector<std::pair<int, int>> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        const auto colon = tok.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("expected epoch:K");
        out.emplace_back(std::stoi(tok.substr(0, colon)), std::stoi(tok.substr(colon + 1)));
    }
    return out;
}

void read_synthetic(Reader& r, SyntheticCorpusSpec& spec) {
    spec.n_images = static_cast<int>(r.integer("synthetic", "n_images", spec.n_images));
    spec.side = static_cast<int>(r.integer("synthetic", "side", spec.side));
    spec.min_shapes = static_cast<int>(r.integer("synthetic", "min_shapes", spec.min_shapes));
    spec.max_shapes = static_cast<int>(r.integer("synthetic", "max_shapes", spec.max_shapes));
    spec.min_area_frac = r.real("synthetic", "min_area_frac", spec.min_area_frac);
    spec.max_area_frac = r.real("synthetic", "max_area_frac", spec.max_area_frac);
    spec.noise = r.real("synthetic", "noise", spec.noise);
    spec.gradient = r.real("synthetic", "gradient", spec.gradient);
    spec.seed = r.u64("synthetic", "seed", spec.seed);
}

}  // namespace

void RunConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("run: epochs must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("run: batch_size must be >= 2 (batch-level clustering)");
    if (image_side != encoder.input_side)
        throw std::invalid_argument("run: image_side must equal the encoder input side");
    if (augment.out_side != image_side)
        throw std::invalid_argument("run: augmented view side must equal image_side");
    for (double p : {augment.flip_prob, augment.jitter_prob, augment.grayscale_prob,
                     augment.blur_prob_view1, augment.blur_prob_view2, augment.solarize_prob_view2})
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("augment: probabilities must lie in [0,1]");
    if (augment.blur_kernel < 1 || augment.blur_kernel % 2 == 0)
        throw std::invalid_argument("augment: blur kernel size must be odd");
    if (augment.blur_sigma_min <= 0.0 || augment.blur_sigma_max < augment.blur_sigma_min)
        throw std::invalid_argument("augment: blur sigma range must be positive");
    if (augment.solarize_threshold < 0.0 || augment.solarize_threshold > 1.0)
        throw std::invalid_argument("augment: solarize threshold outside [0,1]");
    if (!(0.0 < augment.crop_scale_min && augment.crop_scale_min <= augment.crop_scale_max &&
          augment.crop_scale_max <= 1.0))
        throw std::invalid_argument("augment: crop scale range must satisfy 0 < min <= max <= 1");
    if (!(0.0 < augment.crop_aspect_min && augment.crop_aspect_min <= augment.crop_aspect_max))
        throw std::invalid_argument("augment: crop aspect range must be positive and ordered");
    if (checkpoint_every < 0 || mask_dump_every < 0) throw std::invalid_argument("run: cadences must be >= 0");
    if (grid_prior_n < 1) throw std::invalid_argument("run: grid prior n must be >= 1");
    if (data.images_dir.empty()) data.synthetic.validate();
    if (slic.n_segments < 1 || slic.compactness <= 0.0 || slic.max_iters < 1)
        throw std::invalid_argument("slic: invalid configuration");
    encoder.validate();
    heads.validate();
    curriculum.validate();
    if (curriculum.total_epochs != epochs)
        throw std::invalid_argument("run: curriculum total_epochs must equal epochs");
    if (tau.total_epochs != epochs) throw std::invalid_argument("run: tau total_epochs must equal epochs");
    optim.validate();
}

std::string RunConfig::canonical() const {
    // out_dir, threads and the dump cadences are deliberately absent: they
    // do not affect the training trajectory, so resuming a run into a new
    // directory (or with a different worker count) stays legal.
    std::ostringstream out;
    out.precision(17);
    out << "[run]\n"
        << "seed = " << seed << "\nepochs = " << epochs
        << "\nbatch_size = " << batch_size << "\nimage_side = " << image_side
        << "\nloss_norm = " << (loss_norm == LossNorm::triple_mean ? "triple_mean" : "image_mean")
        << "\nprior = " << (prior == PriorKind::slic ? "slic" : "grid")
        << "\ngrid_prior_n = " << grid_prior_n << "\n";
    out << "[data]\nimages_dir = " << data.images_dir << "\n";
    out << "[synthetic]\nn_images = " << data.synthetic.n_images << "\nside = " << data.synthetic.side
        << "\nmin_shapes = " << data.synthetic.min_shapes << "\nmax_shapes = " << data.synthetic.max_shapes
        << "\nmin_area_frac = " << data.synthetic.min_area_frac
        << "\nmax_area_frac = " << data.synthetic.max_area_frac << "\nnoise = " << data.synthetic.noise
        << "\ngradient = " << data.synthetic.gradient << "\nseed = " << data.synthetic.seed << "\n";
    out << "[slic]\nn_segments = " << slic.n_segments << "\ncompactness = " << slic.compactness
        << "\nmax_iters = " << slic.max_iters << "\nmin_region_fraction = " << slic.min_region_fraction
        << "\n";
    out << "[augment]\ncrop_scale_min = " << augment.crop_scale_min
        << "\ncrop_scale_max = " << augment.crop_scale_max
        << "\ncrop_aspect_min = " << augment.crop_aspect_min
        << "\ncrop_aspect_max = " << augment.crop_aspect_max << "\nflip_prob = " << augment.flip_prob
        << "\njitter_prob = " << augment.jitter_prob << "\nbrightness = " << augment.brightness
        << "\ncontrast = " << augment.contrast << "\nsaturation = " << augment.saturation
        << "\nhue = " << augment.hue << "\ngrayscale_prob = " << augment.grayscale_prob
        << "\nblur_kernel = " << augment.blur_kernel << "\nblur_sigma_min = " << augment.blur_sigma_min
        << "\nblur_sigma_max = " << augment.blur_sigma_max
        << "\nblur_prob_view1 = " << augment.blur_prob_view1
        << "\nblur_prob_view2 = " << augment.blur_prob_view2
        << "\nsolarize_prob_view2 = " << augment.solarize_prob_view2
        << "\nsolarize_threshold = " << augment.solarize_threshold << "\n";
    out << "[encoder]\nstem_channels = " << encoder.stem_channels << "\nstage_widths = ";
    for (std::size_t i = 0; i < encoder.stage_widths.size(); ++i)
        out << (i ? "," : "") << encoder.stage_widths[i];
    out << "\nmid_stage = " << encoder.mid_stage << "\nfinal_stage = " << encoder.final_stage << "\n";
    out << "[heads]\nproj_hidden = " << heads.proj_hidden << "\nproj_out = " << heads.proj_out
        << "\npred_hidden = " << heads.pred_hidden << "\n";
    out << "[curriculum]\nk0 = " << curriculum.k0 << "\nkf = " << curriculum.kf
        << "\nt_alpha = " << curriculum.t_alpha << "\nkind = ";
    switch (curriculum.kind) {
        case CurriculumKind::cosine: out << "cosine"; break;
        case CurriculumKind::linear: out << "linear"; break;
        case CurriculumKind::piecewise: out << "piecewise"; break;
        case CurriculumKind::fixed: out << "fixed"; break;
    }
    out << "\nliteral_cosine = " << (curriculum.literal_cosine ? "true" : "false") << "\npiecewise = ";
    for (std::size_t i = 0; i < curriculum.piecewise_steps.size(); ++i)
        out << (i ? "," : "") << curriculum.piecewise_steps[i].first << ":"
            << curriculum.piecewise_steps[i].second;
    out << "\n";
    out << "[optim]\nbase_lr = " << optim.base_lr << "\nweight_decay = " << optim.weight_decay
        << "\nmomentum = " << optim.momentum << "\nwarmup_fraction = " << optim.warmup_fraction
        << "\nkind = " << (optim.kind == OptimKind::lars ? "lars" : "sgd_momentum")
        << "\nlars_trust = " << optim.lars_trust << "\n";
    out << "[tau]\ntau0 = " << tau.tau0 << "\ntau_final = " << tau.tau_final << "\n";
    return out.str();
}

std::uint64_t RunConfig::hash() const {
    // FNV-1a over the canonical text.
    std::uint64_t h = 1469598103934665603ULL;
    for (const char ch : canonical()) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ULL;
    }
    return h;
}

RunConfig parse_run_config(const std::string& text) {
    Reader r(tokenize(text));
    RunConfig cfg;

    cfg.out_dir = r.get("run", "out_dir", cfg.out_dir);
    cfg.seed = r.u64("run", "seed", cfg.seed);
    cfg.epochs = static_cast<int>(r.integer("run", "epochs", cfg.epochs));
    cfg.batch_size = static_cast<int>(r.integer("run", "batch_size", cfg.batch_size));
    cfg.image_side = static_cast<int>(r.integer("run", "image_side", cfg.image_side));
    cfg.checkpoint_every = static_cast<int>(r.integer("run", "checkpoint_every", cfg.checkpoint_every));
    cfg.mask_dump_every = static_cast<int>(r.integer("run", "mask_dump_every", cfg.mask_dump_every));
    cfg.threads = static_cast<int>(r.integer("run", "threads", cfg.threads));
    {
        const std::string norm = r.get("run", "loss_norm", "triple_mean");
        if (norm == "triple_mean")
            cfg.loss_norm = LossNorm::triple_mean;
        else if (norm == "image_mean")
            cfg.loss_norm = LossNorm::image_mean;
        else
            throw std::runtime_error("config [run] loss_norm: unknown value '" + norm + "'");
    }
    {
        const std::string prior = r.get("run", "prior", "slic");
        if (prior == "slic")
            cfg.prior = PriorKind::slic;
        else if (prior == "grid")
            cfg.prior = PriorKind::grid;
        else
            throw std::runtime_error("config [run] prior: unknown value '" + prior + "'");
    }
    cfg.grid_prior_n = static_cast<int>(r.integer("run", "grid_prior_n", cfg.grid_prior_n));

    cfg.data.images_dir = r.get("data", "images_dir", "");
    read_synthetic(r, cfg.data.synthetic);

    cfg.slic.n_segments = static_cast<int>(r.integer("slic", "n_segments", cfg.slic.n_segments));
    cfg.slic.compactness = r.real("slic", "compactness", cfg.slic.compactness);
    cfg.slic.max_iters = static_cast<int>(r.integer("slic", "max_iters", cfg.slic.max_iters));
    cfg.slic.min_region_fraction = r.real("slic", "min_region_fraction", cfg.slic.min_region_fraction);

    cfg.augment.crop_scale_min = r.real("augment", "crop_scale_min", cfg.augment.crop_scale_min);
    cfg.augment.crop_scale_max = r.real("augment", "crop_scale_max", cfg.augment.crop_scale_max);
    cfg.augment.crop_aspect_min = r.real("augment", "crop_aspect_min", cfg.augment.crop_aspect_min);
    cfg.augment.crop_aspect_max = r.real("augment", "crop_aspect_max", cfg.augment.crop_aspect_max);
    cfg.augment.flip_prob = r.real("augment", "flip_prob", cfg.augment.flip_prob);
    cfg.augment.jitter_prob = r.real("augment", "jitter_prob", cfg.augment.jitter_prob);
    cfg.augment.brightness = r.real("augment", "brightness", cfg.augment.brightness);
    cfg.augment.contrast = r.real("augment", "contrast", cfg.augment.contrast);
    cfg.augment.saturation = r.real("augment", "saturation", cfg.augment.saturation);
    cfg.augment.hue = r.real("augment", "hue", cfg.augment.hue);
    cfg.augment.grayscale_prob = r.real("augment", "grayscale_prob", cfg.augment.grayscale_prob);
    cfg.augment.blur_kernel = static_cast<int>(r.integer("augment", "blur_kernel", cfg.augment.blur_kernel));
    cfg.augment.blur_sigma_min = r.real("augment", "blur_sigma_min", cfg.augment.blur_sigma_min);
    cfg.augment.blur_sigma_max = r.real("augment", "blur_sigma_max", cfg.augment.blur_sigma_max);
    cfg.augment.blur_prob_view1 = r.real("augment", "blur_prob_view1", cfg.augment.blur_prob_view1);
    cfg.augment.blur_prob_view2 = r.real("augment", "blur_prob_view2", cfg.augment.blur_prob_view2);
    cfg.augment.solarize_prob_view2 = r.real("augment", "solarize_prob_view2", cfg.augment.solarize_prob_view2);
    cfg.augment.solarize_threshold = r.real("augment", "solarize_threshold", cfg.augment.solarize_threshold);
    cfg.augment.out_side = cfg.image_side;

    cfg.encoder.input_side = cfg.image_side;
    cfg.encoder.stem_channels = static_cast<int>(r.integer("encoder", "stem_channels", cfg.encoder.stem_channels));
    if (r.has("encoder", "stage_widths"))
        cfg.encoder.stage_widths = parse_int_list(r.get("encoder", "stage_widths", ""));
    cfg.encoder.mid_stage = static_cast<int>(r.integer("encoder", "mid_stage", cfg.encoder.mid_stage));
    cfg.encoder.final_stage = static_cast<int>(r.integer("encoder", "final_stage", cfg.encoder.final_stage));

    cfg.heads.proj_hidden = static_cast<int>(r.integer("heads", "proj_hidden", cfg.heads.proj_hidden));
    cfg.heads.proj_out = static_cast<int>(r.integer("heads", "proj_out", cfg.heads.proj_out));
    cfg.heads.pred_hidden = static_cast<int>(r.integer("heads", "pred_hidden", cfg.heads.pred_hidden));

    cfg.curriculum.k0 = static_cast<int>(r.integer("curriculum", "k0", cfg.curriculum.k0));
    cfg.curriculum.kf = static_cast<int>(r.integer("curriculum", "kf", cfg.curriculum.kf));
    cfg.curriculum.t_alpha = static_cast<int>(r.integer("curriculum", "t_alpha", cfg.curriculum.t_alpha));
    cfg.curriculum.total_epochs = cfg.epochs;
    {
        const std::string kind = r.get("curriculum", "kind", "cosine");
        if (kind == "cosine")
            cfg.curriculum.kind = CurriculumKind::cosine;
        else if (kind == "linear")
            cfg.curriculum.kind = CurriculumKind::linear;
        else if (kind == "piecewise")
            cfg.curriculum.kind = CurriculumKind::piecewise;
        else if (kind == "fixed")
            cfg.curriculum.kind = CurriculumKind::fixed;
        else
            throw std::runtime_error("config [curriculum] kind: unknown value '" + kind + "'");
    }
    cfg.curriculum.literal_cosine = r.boolean("curriculum", "literal_cosine", cfg.curriculum.literal_cosine);
    if (r.has("curriculum", "piecewise"))
        cfg.curriculum.piecewise_steps = parse_piecewise(r.get("curriculum", "piecewise", ""));

    cfg.optim.base_lr = r.real("optim", "base_lr", cfg.optim.base_lr);
    cfg.optim.weight_decay = r.real("optim", "weight_decay", cfg.optim.weight_decay);
    cfg.optim.momentum = r.real("optim", "momentum", cfg.optim.momentum);
    cfg.optim.warmup_fraction = r.real("optim", "warmup_fraction", cfg.optim.warmup_fraction);
    {
        const std::string kind = r.get("optim", "kind", "sgd_momentum");
        if (kind == "sgd_momentum")
            cfg.optim.kind = OptimKind::sgd_momentum;
        else if (kind == "lars")
            cfg.optim.kind = OptimKind::lars;
        else
            throw std::runtime_error("config [optim] kind: unknown value '" + kind + "'");
    }
    cfg.optim.lars_trust = r.real("optim", "lars_trust", cfg.optim.lars_trust);
    cfg.optim.batch_size = cfg.batch_size;

    cfg.tau.tau0 = r.real("tau", "tau0", cfg.tau.tau0);
    cfg.tau.tau_final = r.real("tau", "tau_final", cfg.tau.tau_final);
    cfg.tau.total_epochs = cfg.epochs;

    r.reject_unconsumed();
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

SyntheticCorpusSpec parse_synthetic_spec(const std::string& text) {
    Reader r(tokenize(text));
    SyntheticCorpusSpec spec;
    read_synthetic(r, spec);
    r.reject_unconsumed();
    spec.validate();
    return spec;
}

SyntheticCorpusSpec load_synthetic_spec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open spec '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_synthetic_spec(text);
}

}  // namespace r2o
