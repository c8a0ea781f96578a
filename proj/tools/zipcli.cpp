// Command-line front end: toy dataset generation, backdoor poisoning,
// classifier training, purification (none / naive / zip), unguided
// sampling, and metric reports. Every artifact directory carries a
// metadata.json sidecar with the resolved configuration and seed.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "zip/attack.hpp"
#include "zip/dataset.hpp"
#include "zip/denoiser.hpp"
#include "zip/evalharness.hpp"
#include "zip/image_io.hpp"
#include "zip/imaging.hpp"
#include "zip/linops.hpp"
#include "zip/rng.hpp"
#include "zip/sampler.hpp"
#include "zip/schedule.hpp"
#include "zip/tensor.hpp"
#include "zip/tiling.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

double round6(double v) { return std::round(v * 1e6) / 1e6; }

// ---------------------------------------------------------------- dataset io

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw zip::IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw zip::IoError("short write to " + path.string());
}

void write_json_file(const fs::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw zip::IoError("cannot open " + path.string());
    return json::parse(in);
}

void save_dataset(const fs::path& dir, const zip::Dataset& ds, json meta) {
    fs::create_directories(dir / "images");
    std::vector<std::size_t> order(ds.samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ds.samples[a].name < ds.samples[b].name;
    });

    std::string csv = "filename,label,poisoned_flag\n";
    for (std::size_t i : order) {
        const zip::Sample& s = ds.samples[i];
        const std::string filename = s.name + ".png";
        zip::write_png((dir / "images" / filename).string(), s.image);
        csv += filename + "," + std::to_string(s.label) + "," + (s.poisoned ? "1" : "0") + "\n";
    }
    write_text_file(dir / "labels.csv", csv);

    meta["class_count"] = ds.class_count;
    meta["sample_count"] = ds.samples.size();
    write_json_file(dir / "metadata.json", meta);
}

zip::Dataset load_dataset(const fs::path& dir) {
    std::ifstream in(dir / "labels.csv");
    if (!in) throw zip::IoError("cannot open " + (dir / "labels.csv").string());
    std::string line;
    if (!std::getline(in, line) || line != "filename,label,poisoned_flag") {
        throw zip::IoError("bad labels.csv header in " + dir.string());
    }

    zip::Dataset ds;
    int max_label = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string filename, label_s, flag_s;
        if (!std::getline(row, filename, ',') || !std::getline(row, label_s, ',') ||
            !std::getline(row, flag_s)) {
            throw zip::IoError("bad labels.csv row: " + line);
        }
        zip::Sample s;
        s.image = zip::read_image((dir / "images" / filename).string());
        s.label = std::stoi(label_s);
        s.poisoned = flag_s == "1";
        s.name = fs::path(filename).stem().string();
        max_label = std::max(max_label, s.label);
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw zip::IoError("empty dataset in " + dir.string());

    ds.class_count = max_label + 1;
    const fs::path meta_path = dir / "metadata.json";
    if (fs::exists(meta_path)) {
        const json meta = read_json_file(meta_path);
        if (meta.contains("class_count")) ds.class_count = meta["class_count"].get<int>();
    }
    ds.check_labels();
    return ds;
}

// ------------------------------------------------------------------- parsing

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, delim)) parts.push_back(item);
    return parts;
}

std::pair<int, int> parse_grid(const std::string& s) {
    const auto parts = split(s, 'x');
    if (parts.size() != 2) throw std::invalid_argument("expected RxC, got '" + s + "'");
    return {std::stoi(parts[0]), std::stoi(parts[1])};
}

// patch:HxW:COLOR:POS | blend:FILE:ALPHA | add:FILE:POS
// COLOR is white, black, gray, or a float; POS is tl, tr, bl, br, or R,C.
zip::TriggerSpec parse_trigger(const std::string& text, int h, int w, int ch,
                               int target_label) {
    const auto parts = split(text, ':');
    if (parts.empty()) throw std::invalid_argument("empty trigger spec");

    zip::TriggerSpec spec;
    spec.target_label = target_label;

    auto anchor = [&](const std::string& pos, int ph, int pw) {
        if (pos == "tl") return std::pair<int, int>{0, 0};
        if (pos == "tr") return std::pair<int, int>{0, w - pw};
        if (pos == "bl") return std::pair<int, int>{h - ph, 0};
        if (pos == "br") return std::pair<int, int>{h - ph, w - pw};
        const auto rc = split(pos, ',');
        if (rc.size() != 2) throw std::invalid_argument("bad trigger position '" + pos + "'");
        return std::pair<int, int>{std::stoi(rc[0]), std::stoi(rc[1])};
    };

    if (parts[0] == "patch") {
        if (parts.size() != 4) throw std::invalid_argument("expected patch:HxW:COLOR:POS");
        const auto [ph, pw] = parse_grid(parts[1]);
        double value = 1.0;
        if (parts[2] == "white") value = 1.0;
        else if (parts[2] == "black") value = 0.0;
        else if (parts[2] == "gray") value = 0.5;
        else value = std::stod(parts[2]);
        spec.mode = zip::TriggerMode::kPatchReplace;
        spec.pattern = zip::Image(ph, pw, ch, value);
        std::tie(spec.row, spec.col) = anchor(parts[3], ph, pw);
    } else if (parts[0] == "blend") {
        if (parts.size() != 3) throw std::invalid_argument("expected blend:FILE:ALPHA");
        spec.mode = zip::TriggerMode::kBlended;
        spec.pattern = zip::read_image(parts[1]);
        spec.alpha = std::stod(parts[2]);
    } else if (parts[0] == "add") {
        if (parts.size() != 3) throw std::invalid_argument("expected add:FILE:POS");
        spec.mode = zip::TriggerMode::kAdditive;
        spec.pattern = zip::read_image(parts[1]);
        std::tie(spec.row, spec.col) =
            anchor(parts[2], spec.pattern.height(), spec.pattern.width());
    } else {
        throw std::invalid_argument("unknown trigger mode '" + parts[0] + "'");
    }
    spec.validate_for(h, w, ch);
    return spec;
}

// discrete:<dataset-or-image-dir> | gaussian:<mu>,<s>
std::shared_ptr<const zip::Denoiser> build_denoiser(const std::string& text) {
    const auto pos = text.find(':');
    if (pos == std::string::npos) {
        throw std::invalid_argument("expected discrete:<dir> or gaussian:<mu>,<s>");
    }
    const std::string kind = text.substr(0, pos);
    const std::string arg = text.substr(pos + 1);

    if (kind == "gaussian") {
        const auto parts = split(arg, ',');
        if (parts.size() != 2) throw std::invalid_argument("expected gaussian:<mu>,<s>");
        return std::make_shared<zip::AnalyticGaussianDenoiser>(std::stod(parts[0]),
                                                               std::stod(parts[1]));
    }
    if (kind != "discrete") throw std::invalid_argument("unknown denoiser '" + kind + "'");

    fs::path dir(arg);
    if (fs::exists(dir / "images")) dir /= "images";
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::invalid_argument("no reference images in " + dir.string());

    std::vector<zip::Tensor> refs;
    refs.reserve(files.size());
    for (const fs::path& f : files) refs.push_back(zip::to_latent(zip::read_image(f.string())));
    return std::make_shared<zip::DiscreteDatasetDenoiser>(std::move(refs));
}

// ------------------------------------------------------------ parallel purify

void run_parallel(std::size_t jobs, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), jobs);
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

struct MosaicBatch {
    std::size_t start;
    zip::TileGrid grid;
};

std::vector<MosaicBatch> plan_mosaics(std::size_t n, int rows, int cols, int th, int tw) {
    std::vector<MosaicBatch> out;
    std::size_t pos = 0;
    const std::size_t full = static_cast<std::size_t>(rows) * cols;
    while (n - pos >= full) {
        out.push_back({pos, zip::TileGrid(rows, cols, th, tw)});
        pos += full;
    }
    if (n - pos >= static_cast<std::size_t>(cols)) {
        const int r = static_cast<int>((n - pos) / cols);
        out.push_back({pos, zip::TileGrid(r, cols, th, tw)});
        pos += static_cast<std::size_t>(r) * cols;
    }
    if (n - pos > 0) {
        out.push_back({pos, zip::TileGrid(1, static_cast<int>(n - pos), th, tw)});
    }
    return out;
}

struct ZipRunOptions {
    int pool = 2;
    int tile_rows = 8;
    int tile_cols = 8;
    int threads = 1;
    std::optional<zip::Tensor> tile_strict;  // per-tile trigger, latent domain
};

// Packs the batch into mosaics, purifies each with a seed derived from the
// mosaic index, and splits back. Results do not depend on the thread count.
std::vector<zip::Image> purify_images_zip(const std::vector<zip::Image>& inputs,
                                          std::shared_ptr<const zip::Denoiser> inner,
                                          const zip::PurifyConfig& base,
                                          const ZipRunOptions& opt) {
    if (inputs.empty()) return {};
    const int th = inputs.front().height(), tw = inputs.front().width();
    for (const zip::Image& im : inputs) {
        if (im.height() != th || im.width() != tw ||
            im.channels() != inputs.front().channels()) {
            throw std::invalid_argument("purify: images must share one shape");
        }
    }
    if (th % opt.pool != 0 || tw % opt.pool != 0) {
        throw std::invalid_argument("purify: pool kernel must divide image dimensions");
    }

    const zip::AvgPoolOperator op(opt.pool);
    const auto batches = plan_mosaics(inputs.size(), opt.tile_rows, opt.tile_cols, th, tw);
    std::vector<zip::Image> results(inputs.size());
    run_parallel(batches.size(), opt.threads, [&](std::size_t b) {
        const MosaicBatch& batch = batches[b];
        const std::vector<zip::Image> tiles(
            inputs.begin() + static_cast<std::ptrdiff_t>(batch.start),
            inputs.begin() + static_cast<std::ptrdiff_t>(batch.start) + batch.grid.count());
        const zip::Image mosaic = zip::tile_images(tiles, batch.grid);

        zip::PurifyConfig cfg = base;
        cfg.seed = zip::RngStream::derive(base.seed, b);
        if (opt.tile_strict.has_value()) {
            cfg.strict_trigger = zip::tile_tensors(
                std::vector<zip::Tensor>(static_cast<std::size_t>(batch.grid.count()),
                                         *opt.tile_strict),
                batch.grid);
        }
        const zip::TiledDenoiser den(inner, batch.grid);
        zip::RngStream rng(cfg.seed);
        const zip::Image purified = zip::purify(mosaic, op, den, cfg, rng);
        std::vector<zip::Image> outs = zip::untile_image(purified, batch.grid);
        for (std::size_t i = 0; i < outs.size(); ++i) {
            results[batch.start + i] = std::move(outs[i]);
        }
    });
    return results;
}

std::vector<zip::Image> purify_images_naive(const std::vector<zip::Image>& inputs, int pool) {
    const zip::AvgPoolOperator op(pool);
    std::vector<zip::Image> out;
    out.reserve(inputs.size());
    for (const zip::Image& im : inputs) {
        out.push_back(zip::from_latent(op.project_range(zip::to_latent(im))));
    }
    return out;
}

// ----------------------------------------------------------------- model io

void save_model(const fs::path& path, const zip::LinearSoftmaxClassifier& clf, int h, int w,
                int ch, json meta) {
    meta["type"] = "linear_softmax";
    meta["classes"] = clf.classes();
    meta["height"] = h;
    meta["width"] = w;
    meta["channels"] = ch;
    meta["weights"] = clf.weights();
    meta["bias"] = clf.bias();
    write_json_file(path, meta);
}

zip::LinearSoftmaxClassifier load_model(const fs::path& path) {
    const json j = read_json_file(path);
    if (!j.contains("type") || j["type"] != "linear_softmax") {
        throw zip::IoError("not a linear_softmax model: " + path.string());
    }
    const int classes = j["classes"].get<int>();
    const int dim = j["height"].get<int>() * j["width"].get<int>() * j["channels"].get<int>();
    zip::LinearSoftmaxClassifier clf(classes, dim);
    clf.weights() = j["weights"].get<std::vector<double>>();
    clf.bias() = j["bias"].get<std::vector<double>>();
    if (clf.weights().size() != static_cast<std::size_t>(classes) * dim ||
        clf.bias().size() != static_cast<std::size_t>(classes)) {
        throw zip::IoError("model weight shapes inconsistent: " + path.string());
    }
    return clf;
}

json metrics_json(const zip::DefenseMetrics& m) {
    json j;
    j["ca"] = round6(m.ca);
    j["asr"] = round6(m.asr);
    j["pa"] = round6(m.pa);
    j["ca_correct"] = m.ca_correct;
    j["ca_total"] = m.ca_total;
    j["asr_hits"] = m.asr_hits;
    j["asr_total"] = m.asr_total;
    j["pa_correct"] = m.pa_correct;
    j["pa_total"] = m.pa_total;
    return j;
}

// -------------------------------------------------------------- subcommands

struct GenOptions {
    std::string out;
    zip::ToyGenConfig cfg;
    std::uint64_t seed = 0;
};

void run_gen(const GenOptions& o) {
    zip::RngStream rng(o.seed);
    const zip::Dataset ds = zip::gen_toy_dataset(o.cfg, rng);
    json meta;
    meta["command"] = "gen";
    meta["seed"] = o.seed;
    meta["classes"] = o.cfg.classes;
    meta["per_class"] = o.cfg.per_class;
    meta["size"] = o.cfg.size;
    meta["channels"] = o.cfg.channels;
    meta["amplitude"] = o.cfg.amplitude;
    meta["amplitude_jitter"] = o.cfg.amplitude_jitter;
    meta["brightness_jitter"] = o.cfg.brightness_jitter;
    meta["phase_jitter"] = o.cfg.phase_jitter;
    meta["pixel_noise"] = o.cfg.pixel_noise;
    meta["stripe_period"] = o.cfg.stripe_period;
    meta["checker_block"] = o.cfg.checker_block;
    save_dataset(o.out, ds, std::move(meta));
    std::cout << "wrote " << ds.samples.size() << " images to " << o.out << "\n";
}

struct AttackOptions {
    std::string in, out, trigger = "patch:3x3:white:br";
    double rate = 0.1;
    int target_label = 0;
    std::uint64_t seed = 0;
    bool no_relabel = false;
};

void run_attack(const AttackOptions& o) {
    const zip::Dataset ds = load_dataset(o.in);
    const zip::Image& probe = ds.samples.front().image;
    const zip::TriggerSpec spec =
        parse_trigger(o.trigger, probe.height(), probe.width(), probe.channels(),
                      o.target_label);

    zip::Dataset poisoned;
    if (o.no_relabel) {
        // Evaluation copies: trigger everything, keep true labels.
        poisoned = ds;
        for (zip::Sample& s : poisoned.samples) {
            s.image = zip::apply_trigger(s.image, spec);
            s.poisoned = true;
        }
    } else {
        zip::RngStream rng(o.seed);
        poisoned = zip::poison_dataset(ds, spec, o.rate, rng);
    }

    json meta;
    meta["command"] = "attack";
    meta["seed"] = o.seed;
    meta["trigger"] = o.trigger;
    meta["rate"] = o.no_relabel ? 1.0 : o.rate;
    meta["target_label"] = o.target_label;
    meta["relabel"] = !o.no_relabel;
    save_dataset(o.out, poisoned, std::move(meta));
    std::cout << "wrote poisoned dataset to " << o.out << "\n";
}

struct TrainOptions {
    std::string in, model;
    zip::TrainConfig cfg;
    std::uint64_t seed = 0;
};

void run_train(const TrainOptions& o) {
    const zip::Dataset ds = load_dataset(o.in);
    zip::RngStream rng(o.seed);
    const zip::LinearSoftmaxClassifier clf = zip::train_classifier(ds, o.cfg, rng);

    int correct = 0;
    for (const zip::Sample& s : ds.samples) {
        if (clf.predict(s.image) == s.label) ++correct;
    }
    json meta;
    meta["command"] = "train";
    meta["seed"] = o.seed;
    meta["epochs"] = o.cfg.epochs;
    meta["learning_rate"] = o.cfg.learning_rate;
    meta["batch_size"] = o.cfg.batch_size;
    meta["train_accuracy"] =
        round6(static_cast<double>(correct) / static_cast<double>(ds.samples.size()));
    const zip::Image& probe = ds.samples.front().image;
    save_model(o.model, clf, probe.height(), probe.width(), probe.channels(), std::move(meta));
    std::cout << "trained on " << ds.samples.size() << " samples, train accuracy "
              << static_cast<double>(correct) / static_cast<double>(ds.samples.size()) << "\n";
}

struct ScheduleOptions {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

struct PurifyOptions {
    std::string in, out, mode = "zip";
    ScheduleOptions sched;
    double lambda = 0.3;
    int pace = 1;
    double eta = 0.0;
    std::uint64_t seed = 0;
    bool no_clip_x0 = false;
    int pool = 2;
    std::string tile = "8x8";
    std::string denoiser = "gaussian:0,1";
    std::string strict_trigger;  // image file, test oracle
    int threads = 0;
    int working_size = 32;
};

int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 16u));
}

void run_purify(const PurifyOptions& o) {
    const zip::Dataset ds = load_dataset(o.in);
    std::vector<zip::Image> images = zip::images_of(ds);

    json meta;
    meta["command"] = "purify";
    meta["mode"] = o.mode;
    meta["seed"] = o.seed;

    bool resized = false;
    if (o.mode != "none" && o.working_size > 0) {
        for (zip::Image& im : images) {
            if (im.height() > o.working_size || im.width() > o.working_size) {
                im = zip::area_resize(im, o.working_size, o.working_size);
                resized = true;
            }
        }
    }

    std::vector<zip::Image> purified;
    if (o.mode == "none") {
        purified = images;
    } else if (o.mode == "naive") {
        purified = purify_images_naive(images, o.pool);
        meta["pool"] = o.pool;
    } else if (o.mode == "zip") {
        zip::PurifyConfig cfg{zip::make_linear_schedule(o.sched.steps, o.sched.beta_start,
                                                        o.sched.beta_end)};
        cfg.lambda = o.lambda;
        cfg.pace = o.pace;
        cfg.eta = o.eta;
        cfg.seed = o.seed;
        cfg.clip_x0 = !o.no_clip_x0;
        cfg.validate();

        ZipRunOptions run;
        run.pool = o.pool;
        std::tie(run.tile_rows, run.tile_cols) = parse_grid(o.tile);
        run.threads = o.threads > 0 ? o.threads : default_threads();
        if (!o.strict_trigger.empty()) {
            // File holds the additive display-domain perturbation; latent
            // differences are twice the display differences.
            run.tile_strict = 2.0 * zip::read_image(o.strict_trigger).px;
        }

        purified = purify_images_zip(images, build_denoiser(o.denoiser), cfg, run);
        meta["schedule"] = {{"steps", o.sched.steps},
                            {"beta_start", o.sched.beta_start},
                            {"beta_end", o.sched.beta_end}};
        meta["lambda"] = o.lambda;
        meta["ddim_pace"] = o.pace;
        meta["eta"] = o.eta;
        meta["clip_x0"] = !o.no_clip_x0;
        meta["pool"] = o.pool;
        meta["tile"] = o.tile;
        meta["denoiser"] = o.denoiser;
        meta["strict_trigger"] = !o.strict_trigger.empty();
    } else {
        throw std::invalid_argument("unknown purify mode '" + o.mode + "'");
    }
    meta["working_size"] = o.working_size;
    meta["resized"] = resized;

    zip::Dataset out_ds = ds;
    for (std::size_t i = 0; i < out_ds.samples.size(); ++i) {
        out_ds.samples[i].image = std::move(purified[i]);
    }
    save_dataset(o.out, out_ds, std::move(meta));
    std::cout << "purified " << out_ds.samples.size() << " images (" << o.mode << ") to "
              << o.out << "\n";
}

struct SampleOptions {
    std::string out;
    int count = 16;
    int size = 32;
    int channels = 1;
    ScheduleOptions sched;
    int pace = 1;
    double eta = 0.0;
    std::uint64_t seed = 0;
    bool no_clip_x0 = false;
    std::string denoiser = "gaussian:0,1";
};

void run_sample(const SampleOptions& o) {
    auto den = build_denoiser(o.denoiser);
    int h = o.size, w = o.size, c = o.channels;
    if (const auto* discrete = dynamic_cast<const zip::DiscreteDatasetDenoiser*>(den.get())) {
        h = discrete->refs().front().height;
        w = discrete->refs().front().width;
        c = discrete->refs().front().channels;
    }

    zip::PurifyConfig cfg{
        zip::make_linear_schedule(o.sched.steps, o.sched.beta_start, o.sched.beta_end)};
    cfg.pace = o.pace;
    cfg.eta = o.eta;
    cfg.seed = o.seed;
    cfg.clip_x0 = !o.no_clip_x0;
    cfg.validate();

    fs::create_directories(fs::path(o.out) / "images");
    for (int i = 0; i < o.count; ++i) {
        zip::RngStream rng(zip::RngStream::derive(o.seed, static_cast<std::uint64_t>(i)));
        const zip::Image img = zip::sample_unguided(h, w, c, *den, cfg, rng);
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04d.png", i);
        zip::write_png((fs::path(o.out) / "images" / name).string(), img);
    }
    json meta;
    meta["command"] = "sample";
    meta["seed"] = o.seed;
    meta["count"] = o.count;
    meta["height"] = h;
    meta["width"] = w;
    meta["channels"] = c;
    meta["schedule"] = {{"steps", o.sched.steps},
                        {"beta_start", o.sched.beta_start},
                        {"beta_end", o.sched.beta_end}};
    meta["ddim_pace"] = o.pace;
    meta["eta"] = o.eta;
    meta["clip_x0"] = !o.no_clip_x0;
    meta["denoiser"] = o.denoiser;
    write_json_file(fs::path(o.out) / "metadata.json", meta);
    std::cout << "wrote " << o.count << " samples to " << o.out << "\n";
}

struct EvaluateOptions {
    std::string clean, poisoned, purified_clean, purified_poisoned, model, report, csv;
    int target_label = 0;
};

void run_evaluate(const EvaluateOptions& o) {
    const zip::LinearSoftmaxClassifier clf = load_model(o.model);
    const zip::Dataset clean = load_dataset(o.clean);
    const zip::Dataset poisoned = load_dataset(o.poisoned);
    const zip::Dataset pclean = load_dataset(o.purified_clean);
    const zip::Dataset ppoisoned = load_dataset(o.purified_poisoned);

    const std::size_t n = clean.samples.size();
    if (poisoned.samples.size() != n || pclean.samples.size() != n ||
        ppoisoned.samples.size() != n) {
        throw std::invalid_argument("evaluate: datasets differ in size");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (poisoned.samples[i].name != clean.samples[i].name ||
            pclean.samples[i].name != clean.samples[i].name ||
            ppoisoned.samples[i].name != clean.samples[i].name) {
            throw std::invalid_argument("evaluate: datasets are not aligned by filename");
        }
    }

    const zip::DefenseMetrics m = zip::evaluate(clf, clean, poisoned, zip::images_of(pclean),
                                                zip::images_of(ppoisoned), o.target_label);
    json report;
    report["command"] = "evaluate";
    report["target_label"] = o.target_label;
    report["metrics"] = metrics_json(m);
    write_json_file(o.report, report);
    std::cout << "ca " << m.ca << "  asr " << m.asr << "  pa " << m.pa << "\n";

    if (!o.csv.empty()) {
        std::string csv = "filename,true_label,pred_purified_clean,pred_purified_poisoned\n";
        for (std::size_t i = 0; i < n; ++i) {
            csv += clean.samples[i].name + "," + std::to_string(clean.samples[i].label) + "," +
                   std::to_string(clf.predict(pclean.samples[i].image)) + "," +
                   std::to_string(clf.predict(ppoisoned.samples[i].image)) + "\n";
        }
        write_text_file(o.csv, csv);
    }
}

struct DemoOptions {
    std::string out;
    std::uint64_t seed = 42;
    int per_class_train = 200;
    int per_class_test = 100;
    int refs_per_class = 64;
    int size = 32;
    ScheduleOptions sched;
    double lambda = 0.3;
    int pace = 50;
    double eta = 0.0;
    int pool = 2;
    std::string tile = "8x8";
    double rate = 0.1;
    int target_label = 0;
    std::string trigger = "patch:3x3:white:br";
    int epochs = 60;
    double learning_rate = 0.5;
    int batch_size = 32;
    int threads = 0;
};

// Seed tags for the demo stages; purify seeds are further split per mosaic.
enum DemoStage : std::uint64_t {
    kStageTrain = 1,
    kStageTest = 2,
    kStageRefs = 3,
    kStageAttack = 4,
    kStageFit = 5,
    kStageZipClean = 6,
    kStageZipPoisoned = 7,
};

void run_demo(const DemoOptions& o) {
    const fs::path out(o.out);
    const int threads = o.threads > 0 ? o.threads : default_threads();

    zip::ToyGenConfig gen;
    gen.size = o.size;
    gen.per_class = o.per_class_train;
    zip::RngStream rng_train(zip::RngStream::derive(o.seed, kStageTrain));
    const zip::Dataset train_clean = zip::gen_toy_dataset(gen, rng_train);

    gen.per_class = o.per_class_test;
    zip::RngStream rng_test(zip::RngStream::derive(o.seed, kStageTest));
    const zip::Dataset test_clean = zip::gen_toy_dataset(gen, rng_test);

    gen.per_class = o.refs_per_class;
    zip::RngStream rng_refs(zip::RngStream::derive(o.seed, kStageRefs));
    const zip::Dataset refs = zip::gen_toy_dataset(gen, rng_refs);

    const zip::Image& probe = train_clean.samples.front().image;
    const zip::TriggerSpec spec = parse_trigger(o.trigger, probe.height(), probe.width(),
                                                probe.channels(), o.target_label);

    zip::RngStream rng_attack(zip::RngStream::derive(o.seed, kStageAttack));
    const zip::Dataset train_poisoned = zip::poison_dataset(train_clean, spec, o.rate,
                                                            rng_attack);

    zip::Dataset test_poisoned = test_clean;
    for (zip::Sample& s : test_poisoned.samples) {
        s.image = zip::apply_trigger(s.image, spec);
        s.poisoned = true;
    }

    zip::TrainConfig fit;
    fit.epochs = o.epochs;
    fit.learning_rate = o.learning_rate;
    fit.batch_size = o.batch_size;
    zip::RngStream rng_fit(zip::RngStream::derive(o.seed, kStageFit));
    const zip::LinearSoftmaxClassifier clf = zip::train_classifier(train_poisoned, fit,
                                                                   rng_fit);

    std::vector<zip::Tensor> ref_latents;
    ref_latents.reserve(refs.samples.size());
    for (const zip::Sample& s : refs.samples) ref_latents.push_back(zip::to_latent(s.image));
    auto den = std::make_shared<zip::DiscreteDatasetDenoiser>(std::move(ref_latents));

    zip::PurifyConfig cfg{
        zip::make_linear_schedule(o.sched.steps, o.sched.beta_start, o.sched.beta_end)};
    cfg.lambda = o.lambda;
    cfg.pace = o.pace;
    cfg.eta = o.eta;
    cfg.validate();

    ZipRunOptions run;
    run.pool = o.pool;
    std::tie(run.tile_rows, run.tile_cols) = parse_grid(o.tile);
    run.threads = threads;

    const std::vector<zip::Image> clean_images = zip::images_of(test_clean);
    const std::vector<zip::Image> poisoned_images = zip::images_of(test_poisoned);

    cfg.seed = zip::RngStream::derive(o.seed, kStageZipClean);
    const std::vector<zip::Image> zip_clean = purify_images_zip(clean_images, den, cfg, run);
    cfg.seed = zip::RngStream::derive(o.seed, kStageZipPoisoned);
    const std::vector<zip::Image> zip_poisoned =
        purify_images_zip(poisoned_images, den, cfg, run);

    const std::vector<zip::Image> naive_clean = purify_images_naive(clean_images, o.pool);
    const std::vector<zip::Image> naive_poisoned = purify_images_naive(poisoned_images, o.pool);

    const zip::DefenseMetrics none_m = zip::evaluate(clf, test_clean, test_poisoned,
                                                     clean_images, poisoned_images,
                                                     o.target_label);
    const zip::DefenseMetrics naive_m = zip::evaluate(clf, test_clean, test_poisoned,
                                                      naive_clean, naive_poisoned,
                                                      o.target_label);
    const zip::DefenseMetrics zip_m = zip::evaluate(clf, test_clean, test_poisoned, zip_clean,
                                                    zip_poisoned, o.target_label);

    // Persist every stage so the run can be audited or re-scored.
    auto stage_meta = [&](const std::string& stage) {
        json meta;
        meta["command"] = "demo";
        meta["stage"] = stage;
        meta["seed"] = o.seed;
        return meta;
    };
    save_dataset(out / "train_clean", train_clean, stage_meta("train_clean"));
    save_dataset(out / "train_poisoned", train_poisoned, stage_meta("train_poisoned"));
    save_dataset(out / "test_clean", test_clean, stage_meta("test_clean"));
    save_dataset(out / "test_poisoned", test_poisoned, stage_meta("test_poisoned"));
    save_dataset(out / "refs", refs, stage_meta("refs"));

    auto save_purified = [&](const std::string& stage, const std::vector<zip::Image>& imgs) {
        zip::Dataset d = test_clean;
        for (std::size_t i = 0; i < d.samples.size(); ++i) d.samples[i].image = imgs[i];
        save_dataset(out / "purified" / stage, d, stage_meta(stage));
    };
    save_purified("zip_clean", zip_clean);
    save_purified("zip_poisoned", zip_poisoned);
    save_purified("naive_clean", naive_clean);
    save_purified("naive_poisoned", naive_poisoned);

    save_model(out / "model.json", clf, probe.height(), probe.width(), probe.channels(),
               stage_meta("model"));

    json report;
    report["scenario"] = "toy-backdoor-defense";
    report["seed"] = o.seed;
    json config;
    config["classes"] = gen.classes;
    config["per_class_train"] = o.per_class_train;
    config["per_class_test"] = o.per_class_test;
    config["refs_per_class"] = o.refs_per_class;
    config["size"] = o.size;
    config["trigger"] = o.trigger;
    config["rate"] = o.rate;
    config["target_label"] = o.target_label;
    config["schedule"] = {{"steps", o.sched.steps},
                          {"beta_start", o.sched.beta_start},
                          {"beta_end", o.sched.beta_end}};
    config["lambda"] = o.lambda;
    config["ddim_pace"] = o.pace;
    config["eta"] = o.eta;
    config["pool"] = o.pool;
    config["tile"] = o.tile;
    config["epochs"] = o.epochs;
    config["learning_rate"] = o.learning_rate;
    config["batch_size"] = o.batch_size;
    report["config"] = config;
    report["no_defense"] = metrics_json(none_m);
    report["naive"] = metrics_json(naive_m);
    report["zip"] = metrics_json(zip_m);
    write_json_file(out / "report.json", report);

    std::cout << "no_defense: ca " << none_m.ca << " asr " << none_m.asr << " pa " << none_m.pa
              << "\n";
    std::cout << "naive:      ca " << naive_m.ca << " asr " << naive_m.asr << " pa "
              << naive_m.pa << "\n";
    std::cout << "zip:        ca " << zip_m.ca << " asr " << zip_m.asr << " pa " << zip_m.pa
              << "\n";
}

void add_schedule_flags(CLI::App* cmd, ScheduleOptions& s) {
    cmd->add_option("--steps", s.steps, "Diffusion steps T");
    cmd->add_option("--beta-start", s.beta_start, "First beta of the linear schedule");
    cmd->add_option("--beta-end", s.beta_end, "Last beta of the linear schedule");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot image purification pipeline"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a procedural toy dataset");
    gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
    gen_cmd->add_option("--classes", gen.cfg.classes, "Number of classes (max 4)");
    gen_cmd->add_option("--per-class", gen.cfg.per_class, "Samples per class");
    gen_cmd->add_option("--size", gen.cfg.size, "Image side length");
    gen_cmd->add_option("--channels", gen.cfg.channels, "Channels per pixel");
    gen_cmd->add_option("--amplitude", gen.cfg.amplitude, "Pattern contrast");
    gen_cmd->add_option("--amplitude-jitter", gen.cfg.amplitude_jitter, "Contrast jitter");
    gen_cmd->add_option("--brightness-jitter", gen.cfg.brightness_jitter, "Brightness jitter");
    gen_cmd->add_option("--phase-jitter", gen.cfg.phase_jitter, "Stripe phase jitter (px)");
    gen_cmd->add_option("--pixel-noise", gen.cfg.pixel_noise, "Per-pixel noise sigma");
    gen_cmd->add_option("--stripe-period", gen.cfg.stripe_period, "Stripe period (px)");
    gen_cmd->add_option("--checker-block", gen.cfg.checker_block, "Checker block size (px)");
    gen_cmd->add_option("--seed", gen.seed, "RNG seed");
    gen_cmd->callback([&] { run_gen(gen); });

    AttackOptions atk;
    auto* atk_cmd = app.add_subcommand("attack", "Poison a dataset with a trigger");
    atk_cmd->add_option("--in", atk.in, "Input dataset directory")->required();
    atk_cmd->add_option("--out", atk.out, "Output dataset directory")->required();
    atk_cmd->add_option("--trigger", atk.trigger,
                        "patch:HxW:COLOR:POS | blend:FILE:ALPHA | add:FILE:POS");
    atk_cmd->add_option("--rate", atk.rate, "Fraction of samples to poison");
    atk_cmd->add_option("--target-label", atk.target_label, "Attack target class");
    atk_cmd->add_option("--seed", atk.seed, "RNG seed for sample selection");
    atk_cmd->add_flag("--no-relabel", atk.no_relabel,
                      "Trigger every sample but keep true labels (evaluation copies)");
    atk_cmd->callback([&] { run_attack(atk); });

    TrainOptions trn;
    auto* trn_cmd = app.add_subcommand("train", "Train the linear softmax classifier");
    trn_cmd->add_option("--in", trn.in, "Training dataset directory")->required();
    trn_cmd->add_option("--model", trn.model, "Output model JSON path")->required();
    trn_cmd->add_option("--epochs", trn.cfg.epochs, "Training epochs");
    trn_cmd->add_option("--lr", trn.cfg.learning_rate, "Learning rate");
    trn_cmd->add_option("--batch", trn.cfg.batch_size, "Mini-batch size");
    trn_cmd->add_option("--seed", trn.seed, "Shuffle seed");
    trn_cmd->callback([&] { run_train(trn); });

    PurifyOptions pur;
    auto* pur_cmd = app.add_subcommand("purify", "Purify a dataset directory");
    pur_cmd->add_option("--in", pur.in, "Input dataset directory")->required();
    pur_cmd->add_option("--out", pur.out, "Output dataset directory")->required();
    pur_cmd->add_option("--mode", pur.mode, "none | naive | zip");
    add_schedule_flags(pur_cmd, pur.sched);
    pur_cmd->add_option("--lambda", pur.lambda, "Guided fraction of the trajectory");
    pur_cmd->add_option("--ddim-pace", pur.pace, "Timestep stride (1 = ancestral)");
    pur_cmd->add_option("--eta", pur.eta, "Strided-step noise scale");
    pur_cmd->add_option("--seed", pur.seed, "Purification seed");
    pur_cmd->add_flag("--no-clip-x0", pur.no_clip_x0, "Disable x0 clamping in strided steps");
    pur_cmd->add_option("--pool", pur.pool, "Average pooling kernel");
    pur_cmd->add_option("--tile", pur.tile, "Mosaic grid RxC");
    pur_cmd->add_option("--denoiser", pur.denoiser, "discrete:<dir> | gaussian:<mu>,<s>");
    pur_cmd->add_option("--strict-trigger", pur.strict_trigger,
                        "Known-trigger oracle image (test use)");
    pur_cmd->add_option("--threads", pur.threads, "Worker threads (0 = auto)");
    pur_cmd->add_option("--working-size", pur.working_size,
                        "Downscale larger inputs to this side length (0 = never)");
    pur_cmd->callback([&] { run_purify(pur); });

    SampleOptions smp;
    auto* smp_cmd = app.add_subcommand("sample", "Draw unguided samples from the denoiser");
    smp_cmd->add_option("--out", smp.out, "Output directory")->required();
    smp_cmd->add_option("--count", smp.count, "Number of samples");
    smp_cmd->add_option("--size", smp.size, "Image side length (gaussian denoiser)");
    smp_cmd->add_option("--channels", smp.channels, "Channels (gaussian denoiser)");
    add_schedule_flags(smp_cmd, smp.sched);
    smp_cmd->add_option("--ddim-pace", smp.pace, "Timestep stride (1 = ancestral)");
    smp_cmd->add_option("--eta", smp.eta, "Strided-step noise scale");
    smp_cmd->add_option("--seed", smp.seed, "Sampling seed");
    smp_cmd->add_flag("--no-clip-x0", smp.no_clip_x0, "Disable x0 clamping in strided steps");
    smp_cmd->add_option("--denoiser", smp.denoiser, "discrete:<dir> | gaussian:<mu>,<s>");
    smp_cmd->callback([&] { run_sample(smp); });

    EvaluateOptions ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Compute CA / ASR / PA for purified sets");
    ev_cmd->add_option("--clean", ev.clean, "Clean test dataset")->required();
    ev_cmd->add_option("--poisoned", ev.poisoned, "Poisoned test dataset")->required();
    ev_cmd->add_option("--purified-clean", ev.purified_clean, "Purified clean set")->required();
    ev_cmd->add_option("--purified-poisoned", ev.purified_poisoned, "Purified poisoned set")
        ->required();
    ev_cmd->add_option("--model", ev.model, "Classifier model JSON")->required();
    ev_cmd->add_option("--target-label", ev.target_label, "Attack target class");
    ev_cmd->add_option("--report", ev.report, "Output report JSON")->required();
    ev_cmd->add_option("--csv", ev.csv, "Optional per-sample prediction CSV");
    ev_cmd->callback([&] { run_evaluate(ev); });

    DemoOptions demo;
    auto* demo_cmd = app.add_subcommand("demo", "Run the full seeded pipeline");
    demo_cmd->add_option("--out", demo.out, "Output directory")->required();
    demo_cmd->add_option("--seed", demo.seed, "Master seed");
    demo_cmd->add_option("--per-class-train", demo.per_class_train, "Train samples per class");
    demo_cmd->add_option("--per-class-test", demo.per_class_test, "Test samples per class");
    demo_cmd->add_option("--refs-per-class", demo.refs_per_class, "Denoiser refs per class");
    demo_cmd->add_option("--size", demo.size, "Image side length");
    add_schedule_flags(demo_cmd, demo.sched);
    demo_cmd->add_option("--lambda", demo.lambda, "Guided fraction of the trajectory");
    demo_cmd->add_option("--ddim-pace", demo.pace, "Timestep stride");
    demo_cmd->add_option("--eta", demo.eta, "Strided-step noise scale");
    demo_cmd->add_option("--pool", demo.pool, "Average pooling kernel");
    demo_cmd->add_option("--tile", demo.tile, "Mosaic grid RxC");
    demo_cmd->add_option("--rate", demo.rate, "Training poison rate");
    demo_cmd->add_option("--target-label", demo.target_label, "Attack target class");
    demo_cmd->add_option("--trigger", demo.trigger, "Trigger spec");
    demo_cmd->add_option("--epochs", demo.epochs, "Classifier epochs");
    demo_cmd->add_option("--lr", demo.learning_rate, "Classifier learning rate");
    demo_cmd->add_option("--batch", demo.batch_size, "Classifier batch size");
    demo_cmd->add_option("--threads", demo.threads, "Worker threads (0 = auto)");
    demo_cmd->callback([&] { run_demo(demo); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
