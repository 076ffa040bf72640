#pragma once

// Aggregation of per-glyph search results into curves, rankings and sheets.

#include "strokesimp/errors.hpp"
#include "strokesimp/ingest.hpp"
#include "strokesimp/raster.hpp"
#include "strokesimp/search.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace strokesimp {

struct StepRecord {
    int k = 0;
    std::uint64_t subset = 0;
    std::vector<int> removed;
    double legibility = 0.0;
    char32_t predicted = 0;
    bool correct = false;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct PixelPoint {
    int k = 0;
    double fraction = 0.0;
    double reference = 0.0;  // (K - k) / K

    friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// Everything the report keeps about one glyph.
struct GlyphRecord {
    char32_t codepoint = 0;
    int stroke_count = 0;
    double full_legibility = 0.0;
    char32_t full_predicted = 0;
    bool full_correct = false;
    bool exhaustive = true;
    std::optional<double> tolerance;
    std::vector<StepRecord> steps;
    std::vector<BaselineStats> baseline;
    std::vector<PixelPoint> pixel_curve;

    const StepRecord* step(int k) const;
    const BaselineStats* baseline_at(int k) const;

    friend bool operator==(const GlyphRecord&, const GlyphRecord&) = default;
};

StepRecord make_step_record(const SimplifiedGlyph& step, const BackendDescriptor& backend, int stroke_count);

struct CurvePoint {
    int k = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct CurveSummary {
    int stroke_count = 0;
    std::size_t glyphs = 0;
    /// Glyphs left out because their full render is misclassified.
    std::size_t excluded = 0;
    CurvePoint full;  // k = 0
    std::vector<CurvePoint> per_k;
    /// Mean/min/max over glyphs of the all-subset average; empty without baseline data.
    std::vector<CurvePoint> baseline;

    friend bool operator==(const CurveSummary&, const CurveSummary&) = default;
};

/// Curves over glyphs with `stroke_count` strokes. Throws EmptyInput when no
/// record has that stroke count.
CurveSummary aggregate_curves(std::span<const GlyphRecord> records, int stroke_count);

constexpr double kFullyLegibleEpsilon = 1e-4;

/// Fraction of (correctly recognized) glyphs whose optimal step-k legibility
/// is at least 1 - epsilon.
double proportion_fully_legible(std::span<const GlyphRecord> records, int k,
                                double epsilon = kFullyLegibleEpsilon);

struct FullyLegibleSummary {
    int stroke_count = 0;
    std::vector<std::pair<int, double>> per_k;

    friend bool operator==(const FullyLegibleSummary&, const FullyLegibleSummary&) = default;
};

FullyLegibleSummary fully_legible_curve(std::span<const GlyphRecord> records, int stroke_count,
                                        double epsilon = kFullyLegibleEpsilon);

struct RankingEntry {
    char32_t codepoint = 0;
    double tolerance = 0.0;
    int rank = 0;  // 1 = most tolerant

    friend bool operator==(const RankingEntry&, const RankingEntry&) = default;
};

struct ToleranceRanking {
    std::vector<RankingEntry> full;
    std::vector<RankingEntry> top;
    std::vector<RankingEntry> bottom;
};

/// Descending tolerance, ties by codepoint ascending. top_n is clamped to the
/// number of reports.
ToleranceRanking tolerance_ranking(std::span<const ToleranceReport> reports, std::size_t top_n);

/// Remaining-ink fraction of each optimal step, with the k = 0 anchor.
std::vector<PixelPoint> pixel_curve(const RemovalSequence& seq, std::span<const StrokeMask> masks,
                                    const RasterConfig& cfg, int threshold = 128);

struct PixelCurveSummary {
    int stroke_count = 0;
    std::vector<CurvePoint> per_k;  // includes k = 0
    std::vector<double> reference;  // aligned with per_k
    /// Share of k in 1..K-1 where the mean lies on or above the reference.
    double above_reference = 0.0;

    friend bool operator==(const PixelCurveSummary&, const PixelCurveSummary&) = default;
};

PixelCurveSummary aggregate_pixel_curves(std::span<const GlyphRecord> records, int stroke_count);

struct RankingSummary {
    int stroke_count = 0;
    std::vector<RankingEntry> ranking;

    friend bool operator==(const RankingSummary&, const RankingSummary&) = default;
};

struct Aggregates {
    std::vector<CurveSummary> curves;
    std::vector<FullyLegibleSummary> fully_legible;
    std::vector<RankingSummary> ranking;
    std::vector<PixelCurveSummary> pixel_curves;

    friend bool operator==(const Aggregates&, const Aggregates&) = default;
};

/// All aggregates for the stroke counts present in `records`.
Aggregates compute_aggregates(std::span<const GlyphRecord> records);

/// Legibility below which a step is flagged on the sheet.
constexpr double kLowLegibilityFlag = 0.01;

/// SVG sheet: one row per glyph, the original then each step. Green frame when
/// recognized as its own class, red frame plus the predicted character
/// otherwise; steps under 1% legibility get a shaded background.
std::string render_sequence_sheet(std::span<const GlyphRecord> records, const Corpus& corpus,
                                  const RasterConfig& cfg);
void export_sequence_sheet(std::span<const GlyphRecord> records, const Corpus& corpus, const RasterConfig& cfg,
                           const std::filesystem::path& out);

/// Line chart of one curve: optimal mean with its min/max band, plus the
/// random-removal mean (dashed) when present.
std::string render_curve_chart(const CurveSummary& curve);

} // namespace strokesimp
