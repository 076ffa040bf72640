// strokesimp: command-line front end.

#include "strokesimp/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <thread>

using namespace strokesimp;

namespace {

char32_t codepoint_arg(const std::string& text) {
    const auto cp = parse_codepoint(text);
    if (!cp) {
        throw ConfigError("not a codepoint: '" + text + "' (use U+XXXX, hex, or the character)");
    }
    return *cp;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stroke-removal simplification of multi-stroke characters"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML-like key = value file; command-line flags take precedence");

    RunConfig cfg;
    cfg.threads = std::max(1U, std::thread::hardware_concurrency());
    std::string codepoint_override;
    bool all_chars = false;
    std::string polarity = "ink-high";
    long long timeout_ms = cfg.backend_timeout.count();
    int k = 0;
    bool all_k = false;
    std::size_t beam = 0;
    std::string checkpoint;
    bool no_sheets = false;

    app.add_option("-i,--input", cfg.input, "Glyph directory, single .svg, or manifest file");
    app.add_option("--codepoint-override", codepoint_override, "Class label for SVGs without a KanjiVG id");
    app.add_flag("--all-chars", all_chars, "Keep glyphs outside U+4E00..U+9FFF");
    app.add_option("--classifier", cfg.classifier, "prototype | external:<command line>")->capture_default_str();
    app.add_option("--feature-side", cfg.prototype.feature_side, "Prototype feature grid side")->capture_default_str();
    app.add_option("--blur-radius", cfg.prototype.blur_radius, "Prototype Gaussian sigma (pixels)")
        ->capture_default_str();
    app.add_option("--temperature", cfg.prototype.temperature, "Prototype softmax temperature")->capture_default_str();
    app.add_option("--backend-timeout-ms", timeout_ms, "External backend inactivity timeout")->capture_default_str();
    app.add_option("--backend-processes", cfg.backend_processes, "External backend process count")
        ->capture_default_str();
    app.add_option("--grid", cfg.raster.grid, "Raster side in pixels")->capture_default_str();
    app.add_option("--supersample", cfg.raster.supersample, "Subsamples per pixel side")->capture_default_str();
    app.add_option("--stroke-width", cfg.raster.stroke_width, "Pen width as a fraction of the viewbox")
        ->capture_default_str();
    app.add_option("--flatten-tol", cfg.raster.flatten_tol, "Curve flattening tolerance (glyph units)")
        ->capture_default_str();
    app.add_option("--polarity", polarity, "ink-high | ink-low")
        ->check(CLI::IsMember({"ink-high", "ink-low"}))
        ->capture_default_str();
    app.add_option("--strokes", cfg.stroke_counts, "Stroke counts to process (default: all)")->delimiter(',');
    app.add_option("--limit", cfg.limit, "Max glyphs per stroke count, evenly spaced (0 = all)")
        ->capture_default_str();
    auto* k_opt = app.add_option("--k", k, "Remove exactly k strokes");
    auto* all_k_opt = app.add_flag("--all-k", all_k, "Every k = 1..K-1 (default)");
    k_opt->excludes(all_k_opt);
    app.add_option("--beam", beam, "Beam width (approximate search)");
    app.add_flag("--baseline", cfg.baseline, "Also compute the exact random-removal average");
    app.add_option("--budget", cfg.budget, "Per-glyph cap on exhaustive scorings")->capture_default_str();
    app.add_option("--threads", cfg.threads, "Worker threads")->capture_default_str();
    app.add_option("--batch", cfg.batch, "Images per scoring call")->capture_default_str();
    app.add_option("--ink-threshold", cfg.ink_threshold, "Binarization threshold for ink counts")
        ->capture_default_str();
    app.add_option("--seed", cfg.seed, "Reserved for sampled modes")->capture_default_str();
    app.add_option("-o,--out", cfg.out_dir, "Output directory")->capture_default_str();
    app.add_option("--checkpoint", checkpoint, "Checkpoint file (default <out>/checkpoint.jsonl)");
    app.add_flag("--resume", cfg.resume, "Skip (glyph, k) pairs already in the checkpoint");
    app.add_flag("--no-sheets", no_sheets, "Skip SVG sequence sheets");

    auto* corpus_cmd = app.add_subcommand("corpus", "Count glyphs and print the stroke-count histogram");
    std::string manifest;
    corpus_cmd->add_option("--manifest", manifest, "Write the selected file list here");

    auto* simplify_cmd = app.add_subcommand("simplify", "Optimal removal sequences, tolerances and reports");
    auto* baseline_cmd = app.add_subcommand("baseline", "As simplify, with the random-removal baseline");

    auto* render_cmd = app.add_subcommand("render", "Write one (possibly simplified) glyph as PGM");
    std::string render_cp;
    std::vector<int> remove;
    std::string pgm = "glyph.pgm";
    render_cmd->add_option("codepoint", render_cp, "U+XXXX, hex, or the character")->required();
    render_cmd->add_option("--remove", remove, "Stroke indices to drop (0-based)")->delimiter(',');
    render_cmd->add_option("--pgm", pgm, "Output file")->capture_default_str();

    auto* check_cmd = app.add_subcommand("protocol-check", "Validate an external classifier");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (!codepoint_override.empty()) {
            cfg.codepoint_override = codepoint_arg(codepoint_override);
        }
        cfg.cjk_only = !all_chars;
        cfg.raster.polarity = polarity == "ink-low" ? Polarity::InkLow : Polarity::InkHigh;
        cfg.backend_timeout = std::chrono::milliseconds(timeout_ms);
        if (k_opt->count() > 0) {
            cfg.k = k;
        }
        if (beam > 0) {
            cfg.beam = beam;
        }
        if (!checkpoint.empty()) {
            cfg.checkpoint = checkpoint;
        }
        cfg.write_sheets = !no_sheets;

        if (*corpus_cmd) {
            return cmd_corpus(cfg, manifest.empty() ? std::nullopt : std::optional<std::filesystem::path>(manifest),
                              std::cout);
        }
        if (*simplify_cmd) {
            return cmd_simplify(cfg, std::cout);
        }
        if (*baseline_cmd) {
            return cmd_baseline(cfg, std::cout);
        }
        if (*render_cmd) {
            return cmd_render(cfg, codepoint_arg(render_cp), remove, pgm, std::cout);
        }
        if (*check_cmd) {
            return cmd_protocol_check(cfg, std::cout);
        }
    } catch (const SearchError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == SearchErrorKind::BudgetExceeded ? kExitBudget : kExitConfig;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << '\n';
        return kExitBackend;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const GlyphError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const PathError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const RasterError& e) {
        std::cerr << "raster error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitConfig;
}
