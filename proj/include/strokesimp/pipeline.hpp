#pragma once

// End-to-end runs: corpus loading, backend construction, per-glyph search
// with JSONL checkpoints, and report/CSV/SVG output.

#include "strokesimp/analysis.hpp"
#include "strokesimp/errors.hpp"
#include "strokesimp/ingest.hpp"
#include "strokesimp/legibility.hpp"
#include "strokesimp/raster.hpp"
#include "strokesimp/report.hpp"
#include "strokesimp/search.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace strokesimp {

/// Invalid or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct RunConfig {
    std::filesystem::path input;
    std::optional<char32_t> codepoint_override;
    /// Keep only U+4E00..U+9FFF.
    bool cjk_only = true;

    /// "prototype" or "external:<command line>".
    std::string classifier = "prototype";
    PrototypeParams prototype;
    std::chrono::milliseconds backend_timeout{60000};
    int backend_processes = 1;

    RasterConfig raster;

    /// Stroke counts to process; empty means every stroke count >= 2.
    std::vector<int> stroke_counts;
    /// Cap on glyphs per stroke count (0 = all). Picks evenly spaced glyphs
    /// in codepoint order.
    std::size_t limit = 0;
    /// Single removal level; nullopt means every k.
    std::optional<int> k;
    /// Beam width; nullopt means exhaustive.
    std::optional<std::size_t> beam;
    bool baseline = false;

    std::uint64_t budget = std::uint64_t{1} << 22;
    unsigned threads = 1;
    std::size_t batch = 256;
    int ink_threshold = 128;
    /// Reserved for sampled modes; recorded but unused by exhaustive search.
    std::uint64_t seed = 0;

    std::filesystem::path out_dir = "out";
    /// Defaults to <out_dir>/checkpoint.jsonl.
    std::optional<std::filesystem::path> checkpoint;
    bool resume = false;
    bool write_sheets = true;

    /// Throws ConfigError.
    void validate() const;
    std::filesystem::path checkpoint_path() const;
};

/// Builds the configured backend over the class space of `classes`.
/// External backends announce their own class space.
std::unique_ptr<Backend> make_backend(const RunConfig& cfg, const Corpus& classes);

/// Loads the class space described by the config.
Corpus load_corpus(const RunConfig& cfg, std::size_t* skipped_variants = nullptr);

/// Glyphs of `corpus` selected by stroke count and limit, codepoint order.
std::vector<const GlyphDef*> select_glyphs(const RunConfig& cfg, const Corpus& corpus);

struct RunResult {
    Report report;
    std::vector<GlyphRecord> records;
    std::size_t resumed_steps = 0;
    std::size_t computed_steps = 0;
};

/// Searches the selected glyphs and assembles the report. Writes the
/// checkpoint file when `checkpoint` is set; nothing else touches the disk.
RunResult run_search(const RunConfig& cfg, const Corpus& corpus, const Backend& backend,
                     const std::optional<std::filesystem::path>& checkpoint, std::ostream* log);

/// Writes report.json, the CSV files and the SVG sheets/charts into out_dir.
void write_outputs(const RunConfig& cfg, const Corpus& corpus, const RunResult& result);

/// Hash of everything that affects per-step results; guards resume.
std::string run_fingerprint(const RunConfig& cfg, const Corpus& corpus, const Backend& backend);

struct CorpusStats {
    std::size_t count = 0;
    std::size_t skipped_variants = 0;
    std::vector<std::pair<int, std::size_t>> histogram;  // (K, glyphs)
    std::string hash;
};

CorpusStats corpus_stats(const Corpus& corpus);

// Subcommands. Each returns the process exit code; errors propagate.
int cmd_corpus(const RunConfig& cfg, const std::optional<std::filesystem::path>& manifest, std::ostream& out);
int cmd_simplify(const RunConfig& cfg, std::ostream& out);
int cmd_baseline(RunConfig cfg, std::ostream& out);
int cmd_render(const RunConfig& cfg, char32_t codepoint, const std::vector<int>& removed,
               const std::filesystem::path& pgm, std::ostream& out);
int cmd_protocol_check(const RunConfig& cfg, std::ostream& out);

/// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitBudget = 4;

} // namespace strokesimp
