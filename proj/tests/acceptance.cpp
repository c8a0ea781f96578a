// Acceptance gate: prints one [PASS]/[FAIL] line per criterion and exits
// with the number of failures. Criteria 7-9 shell out to the CLI binary
// (path injected at compile time) and inspect its artifacts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "zip/denoiser.hpp"
#include "zip/linops.hpp"
#include "zip/rng.hpp"
#include "zip/sampler.hpp"
#include "zip/schedule.hpp"
#include "zip/tensor.hpp"
#include "zip/tiling.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using zip::AnalyticGaussianDenoiser;
using zip::AvgPoolOperator;
using zip::DiscreteDatasetDenoiser;
using zip::NoiseSchedule;
using zip::PurifyConfig;
using zip::RngStream;
using zip::Tensor;

namespace {

#ifndef ZIPCLI_PATH
#error "ZIPCLI_PATH must point at the CLI binary"
#endif

constexpr const char* kZipcli = ZIPCLI_PATH;
const fs::path kRunRoot = "acceptance_runs";

void require(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error(what);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ------------------------------------------------------ numeric criteria

void criterion_operator_laws() {
    RngStream rng(1);
    for (int k : {2, 4}) {
        const AvgPoolOperator op(k);
        for (int i = 0; i < 500; ++i) {
            const Tensor x = rng.gaussian_tensor(32, 32, 3);
            const Tensor ax = op.apply_A(x);
            const double law = zip::max_abs_diff(op.apply_A(op.apply_A_dagger(ax)), ax);
            require(law < 1e-12, "pseudo-inverse law violated by " + fmt(law));

            const Tensor px = op.project_range(x);
            const double idem = zip::max_abs_diff(op.project_range(px), px);
            require(idem <= 1e-10 * std::max(1.0, zip::max_abs(px)),
                    "projection not idempotent: " + fmt(idem));

            const Tensor y = rng.gaussian_tensor(32, 32, 3);
            const double lhs = zip::dot(px, y);
            const double rhs = zip::dot(x, op.project_range(y));
            require(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)),
                    "projection not self-adjoint: " + fmt(lhs - rhs));

            const double ex = zip::squared_norm(x);
            const double split =
                std::abs(ex - zip::squared_norm(px) - zip::squared_norm(op.project_null(x)));
            require(split <= 1e-10 * ex, "energy split violated by " + fmt(split));
        }
    }
}

void criterion_step_equivalence() {
    const NoiseSchedule s = zip::make_linear_schedule(50, 1e-4, 0.02);
    RngStream rng(2);
    for (int i = 0; i < 100; ++i) {
        const Tensor x = rng.gaussian_tensor(8, 8, 1);
        const Tensor e = rng.gaussian_tensor(8, 8, 1);
        const Tensor n = rng.gaussian_tensor(8, 8, 1);
        for (int t = 1; t <= 50; ++t) {
            const Tensor a = zip::ddpm_step(x, e, t, s, n);
            const Tensor b = zip::ddim_step(x, e, t, t - 1, s, 1.0, n);
            const double diff = zip::max_abs_diff(a, b);
            require(diff <= 1e-9 * std::max(1.0, zip::max_abs(a)),
                    "step mismatch " + fmt(diff) + " at t=" + std::to_string(t));
        }
    }
}

void criterion_gap_identity() {
    const NoiseSchedule s = zip::make_linear_schedule(50, 1e-4, 0.02);
    const AvgPoolOperator op(2);
    RngStream rng(3);
    for (int i = 0; i < 100; ++i) {
        const Tensor x_t = rng.gaussian_tensor(8, 8, 1);
        const Tensor eps = rng.gaussian_tensor(8, 8, 1);
        const Tensor xA = op.apply_A(rng.gaussian_tensor(8, 8, 1));
        const Tensor p = rng.gaussian_tensor(8, 8, 1);
        for (int t = 1; t <= 50; ++t) {
            const Tensor plain = zip::zip_constrained_state(x_t, eps, xA, op, t, s);
            const Tensor strict =
                zip::zip_constrained_state_strict(x_t, eps, xA, p, op, t, s);
            const Tensor expected = std::sqrt(s.alpha_bar(t)) * op.project_range(p);
            const double diff = zip::max_abs_diff(plain - strict, expected);
            require(diff < 1e-12, "gap identity off by " + fmt(diff));
        }
    }
}

void criterion_terminal_constraint() {
    const NoiseSchedule s = zip::make_linear_schedule(100, 1e-4, 0.02);
    const AvgPoolOperator op(2);
    RngStream setup(4);
    std::vector<Tensor> refs;
    for (int i = 0; i < 16; ++i) refs.push_back(0.6 * setup.gaussian_tensor(8, 8, 1));
    const DiscreteDatasetDenoiser den(refs);

    for (int pace : {1, 7}) {
        for (int run = 0; run < 5; ++run) {
            const Tensor input = setup.gaussian_tensor(8, 8, 1);
            const Tensor xA = op.apply_A(input);
            PurifyConfig cfg(s);
            cfg.lambda = 0.0;
            cfg.pace = pace;
            cfg.eta = 0.0;
            cfg.clip_x0 = false;

            RngStream rng(40 + run);
            const Tensor out = zip::purify_latent(input, op, den, cfg, rng);
            const double diff = zip::max_abs_diff(op.apply_A(out), xA);
            require(diff < 1e-6, "pooled content drifted by " + fmt(diff) + " at pace " +
                                     std::to_string(pace));

            const Tensor p = 0.2 * setup.gaussian_tensor(8, 8, 1);
            PurifyConfig strict_cfg = cfg;
            strict_cfg.strict_trigger = p;
            RngStream rng2(40 + run);
            const Tensor out2 = zip::purify_latent(input, op, den, strict_cfg, rng2);
            const double diff2 = zip::max_abs_diff(op.apply_A(out2), xA - op.apply_A(p));
            require(diff2 < 1e-6, "strict pooled content drifted by " + fmt(diff2));
        }
    }
}

void criterion_confinement() {
    const NoiseSchedule s = zip::make_linear_schedule(100, 1e-4, 0.02);
    RngStream setup(5);
    const Tensor r = 0.7 * setup.gaussian_tensor(8, 8, 1);
    const DiscreteDatasetDenoiser single({r});
    PurifyConfig cfg(s);
    cfg.clip_x0 = false;
    for (int run = 0; run < 20; ++run) {
        RngStream rng(500 + run);
        const Tensor out = zip::sample_unguided_latent(8, 8, 1, single, cfg, rng);
        const double diff = zip::max_abs_diff(out, r);
        require(diff < 0.05, "single-reference run " + std::to_string(run) +
                                 " landed " + fmt(diff) + " away");
    }

    const NoiseSchedule s20 = zip::make_linear_schedule(20, 1e-4, 0.02);
    const AnalyticGaussianDenoiser gauss(0.0, 1.0);
    PurifyConfig gcfg(s20);
    gcfg.clip_x0 = false;
    Tensor mean(2, 2, 1, 0.0);
    RngStream rng(501);
    const int runs = 1000;
    for (int run = 0; run < runs; ++run) {
        mean += zip::sample_unguided_latent(2, 2, 1, gauss, gcfg, rng);
    }
    mean = (1.0 / runs) * mean;
    require(zip::max_abs(mean) < 0.1,
            "per-pixel sample mean reached " + fmt(zip::max_abs(mean)));
}

void criterion_tiling() {
    const zip::TileGrid grid(8, 8, 32, 32);
    RngStream rng(6);
    std::vector<Tensor> tiles;
    for (int i = 0; i < grid.count(); ++i) tiles.push_back(rng.gaussian_tensor(32, 32, 1));
    const Tensor mosaic = zip::tile_tensors(tiles, grid);
    const std::vector<Tensor> back = zip::untile_tensor(mosaic, grid);
    for (int i = 0; i < grid.count(); ++i) {
        require(zip::max_abs_diff(back[static_cast<std::size_t>(i)],
                                  tiles[static_cast<std::size_t>(i)]) == 0.0,
                "round trip not bit-exact at tile " + std::to_string(i));
    }

    const AvgPoolOperator op(2);
    const zip::TileGrid pooled_grid(8, 8, 16, 16);
    std::vector<Tensor> pooled;
    for (const Tensor& t : tiles) pooled.push_back(op.apply_A(t));
    require(zip::max_abs_diff(op.apply_A(mosaic), zip::tile_tensors(pooled, pooled_grid)) ==
                0.0,
            "pooling does not commute with tiling");
}

// --------------------------------------------------- end-to-end criteria

int run_demo(const fs::path& out_dir, const fs::path& log) {
    std::ostringstream cmd;
    cmd << kZipcli << " demo --seed 42 --out " << out_dir.string() << " > " << log.string()
        << " 2>&1";
    return std::system(cmd.str().c_str());
}

json load_report(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

std::optional<json> g_report_a;

void criterion_defense_bands() {
    fs::remove_all(kRunRoot);
    fs::create_directories(kRunRoot);
    require(run_demo(kRunRoot / "a", kRunRoot / "demo_a.log") == 0,
            "demo run A exited nonzero");
    const json report = load_report(kRunRoot / "a" / "report.json");
    g_report_a = report;

    const double nd_asr = report.at("no_defense").at("asr").get<double>();
    const double nd_ca = report.at("no_defense").at("ca").get<double>();
    const double zip_asr = report.at("zip").at("asr").get<double>();
    const double zip_pa = report.at("zip").at("pa").get<double>();
    const double zip_ca = report.at("zip").at("ca").get<double>();

    require(nd_asr >= 0.90, "no-defense asr " + fmt(nd_asr) + " < 0.90");
    require(zip_asr <= 0.20, "post-defense asr " + fmt(zip_asr) + " > 0.20");
    require(zip_pa >= 0.60, "post-defense pa " + fmt(zip_pa) + " < 0.60");
    require(nd_ca - zip_ca <= 0.15,
            "clean accuracy dropped by " + fmt(nd_ca - zip_ca) + " > 0.15");
}

void criterion_baseline_ordering() {
    require(g_report_a.has_value(), "demo run A unavailable");
    const json& report = *g_report_a;
    const double nd_asr = report.at("no_defense").at("asr").get<double>();
    const double naive_ca = report.at("naive").at("ca").get<double>();
    const double naive_asr = report.at("naive").at("asr").get<double>();
    const double zip_ca = report.at("zip").at("ca").get<double>();
    const double zip_asr = report.at("zip").at("asr").get<double>();

    require(zip_ca > naive_ca, "guided ca " + fmt(zip_ca) + " does not exceed naive ca " +
                                   fmt(naive_ca));
    require(naive_asr <= nd_asr,
            "naive asr " + fmt(naive_asr) + " exceeds no-defense asr " + fmt(nd_asr));
    require(zip_asr <= nd_asr,
            "guided asr " + fmt(zip_asr) + " exceeds no-defense asr " + fmt(nd_asr));
}

std::vector<fs::path> relative_files(const fs::path& root) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file()) out.push_back(fs::relative(entry.path(), root));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void criterion_determinism() {
    require(fs::exists(kRunRoot / "a"), "demo run A unavailable");
    require(run_demo(kRunRoot / "b", kRunRoot / "demo_b.log") == 0,
            "demo run B exited nonzero");

    const std::vector<fs::path> fa = relative_files(kRunRoot / "a");
    const std::vector<fs::path> fb = relative_files(kRunRoot / "b");
    require(fa == fb, "runs produced different file sets (" + std::to_string(fa.size()) +
                          " vs " + std::to_string(fb.size()) + ")");
    require(!fa.empty(), "demo produced no files");
    for (const fs::path& rel : fa) {
        require(slurp(kRunRoot / "a" / rel) == slurp(kRunRoot / "b" / rel),
                "byte mismatch in " + rel.string());
    }
}

}  // namespace

int main() {
    struct Criterion {
        const char* label;
        std::function<void()> fn;
    };
    const std::vector<Criterion> criteria = {
        {"operator laws", criterion_operator_laws},
        {"ancestral/strided step equivalence", criterion_step_equivalence},
        {"known-trigger gap identity", criterion_gap_identity},
        {"terminal constraint satisfaction", criterion_terminal_constraint},
        {"prior confinement", criterion_confinement},
        {"tiling exactness", criterion_tiling},
        {"end-to-end defense bands", criterion_defense_bands},
        {"naive-baseline ordering", criterion_baseline_ordering},
        {"end-to-end determinism", criterion_determinism},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            criteria[i].fn();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (error.empty()) {
            std::printf("[PASS] criterion %zu: %s (%.1f s)\n", i + 1, criteria[i].label, secs);
        } else {
            std::printf("[FAIL] criterion %zu: %s (%.1f s): %s\n", i + 1, criteria[i].label,
                        secs, error.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
                criteria.size());
    return failures;
}
