#pragma once

// Random stroke glyphs for property tests.

#include "strokesimp/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace strokesimp::testing {

/// First synthetic class label (private use area).
constexpr char32_t kSyntheticBase = 0xE000;

/// One glyph with `stroke_count` random strokes of 1..3 cubic segments,
/// kept inside a 109-unit viewbox with a margin.
GlyphDef random_glyph(char32_t label, int stroke_count, std::mt19937_64& rng);

/// `count` glyphs with stroke counts cycling through [min_strokes, max_strokes].
std::vector<GlyphDef> random_glyphs(std::size_t count, int min_strokes, int max_strokes, std::uint64_t seed);

/// Straight stroke from a to b as a single cubic.
StrokePath line_stroke(int index, Point a, Point b);

/// Two glyphs where the second equals the first plus one extra stroke,
/// appended last. Labels are `base` and `base + 1`.
std::pair<GlyphDef, GlyphDef> confusable_pair(char32_t base);

/// Horizontal bars that never overlap, all the same length.
GlyphDef disjoint_bars(char32_t label, int stroke_count);

/// Writes one KanjiVG-style SVG per glyph (named by codepoint) into a fresh
/// directory and returns it.
std::filesystem::path write_glyph_dir(const std::vector<GlyphDef>& glyphs, const std::filesystem::path& dir);

/// Path to the unpacked KanjiVG snapshot, or empty when unavailable.
std::string kanjivg_dir();

} // namespace strokesimp::testing
