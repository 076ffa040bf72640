#pragma once

// Fixed-size grayscale rendering of stroke subsets.
//
// Each stroke is drawn once into a StrokeMask (round pen, supersampled,
// box-filtered). A subset image is the per-pixel max over the selected masks,
// so any of the 2^K subset renders costs one pass over K small arrays.

#include "strokesimp/errors.hpp"
#include "strokesimp/geometry.hpp"
#include "strokesimp/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace strokesimp {

enum class Polarity { InkHigh, InkLow };

struct RasterConfig {
    int grid = 64;
    int supersample = 4;
    /// Pen diameter as a fraction of the viewbox's larger side.
    double stroke_width = 0.055;
    /// Max chord deviation in glyph units.
    double flatten_tol = 0.1;
    /// InkHigh: 0 = background, 255 = full ink.
    Polarity polarity = Polarity::InkHigh;

    /// Throws RasterError(InvalidConfig).
    void validate() const;

    friend bool operator==(const RasterConfig&, const RasterConfig&) = default;
};

/// Adaptive flattening by midpoint subdivision; a piece is accepted once both
/// inner control points lie within tol of its chord.
std::vector<Point> flatten_segment(const CubicSegment& seg, double tol);
std::vector<Point> flatten_stroke(const StrokePath& stroke, double tol);

/// Maps glyph coordinates into supersample pixel space: uniform scale,
/// aspect preserved, viewbox centered on the square grid.
class PixelMapping {
public:
    PixelMapping(const ViewBox& vb, const RasterConfig& cfg);

    Point to_samples(Point glyph) const;
    /// Squared pen radius in sample units.
    double pen_radius_squared() const { return radius_ * radius_; }
    double pen_radius() const { return radius_; }
    int samples_per_side() const { return side_; }

private:
    ViewBox vb_;
    double extent_;  // samples per side as double
    double max_dim_;
    double radius_;
    int side_;
};

/// Flattened stroke in supersample pixel coordinates.
std::vector<Point> stroke_polyline_in_samples(const StrokePath& stroke, const PixelMapping& map,
                                              double flatten_tol);

/// Box-filter normalization: `hits` of `n` subsamples to an 8-bit coverage.
constexpr std::uint8_t coverage_from_hits(int hits, int n) {
    return static_cast<std::uint8_t>((hits * 255 + n / 2) / n);
}

struct StrokeMask {
    int stroke_index = 0;
    int grid = 0;
    std::vector<std::uint8_t> alpha;  // row-major coverage, 0..255
    // Inclusive pixel bounds of nonzero coverage; empty when x0 > x1.
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

    std::uint8_t at(int x, int y) const { return alpha[static_cast<std::size_t>(y * grid + x)]; }
};

StrokeMask render_stroke_mask(const StrokePath& stroke, const ViewBox& vb, const RasterConfig& cfg);
std::vector<StrokeMask> render_stroke_masks(const GlyphDef& glyph, const RasterConfig& cfg);

struct GlyphImage {
    int grid = 0;
    std::uint64_t subset = 0;  // bit i set: stroke i retained
    Polarity polarity = Polarity::InkHigh;
    std::vector<std::uint8_t> pixels;  // row-major grid x grid

    /// Ink amount regardless of polarity (255 = full ink).
    std::uint8_t ink(std::size_t i) const {
        return polarity == Polarity::InkHigh ? pixels[i] : static_cast<std::uint8_t>(255 - pixels[i]);
    }

    friend bool operator==(const GlyphImage&, const GlyphImage&) = default;
};

/// Per-pixel max over the selected masks. Throws RasterError(EmptySubset)
/// for subset 0 and RasterError(DimensionMismatch) if a set bit has no mask.
GlyphImage composite(std::span<const StrokeMask> masks, std::uint64_t subset, const RasterConfig& cfg);

/// Same as composite but writes into `out`, reusing its storage.
void composite_into(std::span<const StrokeMask> masks, std::uint64_t subset, const RasterConfig& cfg,
                    GlyphImage& out);

/// Fraction of `full`'s ink pixels (ink >= threshold) still inked in `image`.
/// Throws RasterError(ZeroInkFull) when `full` has none.
double ink_proportion(const GlyphImage& image, const GlyphImage& full, int threshold = 128);

/// Binary PGM (P5) dump.
void write_pgm(const GlyphImage& image, const std::filesystem::path& path);

} // namespace strokesimp
