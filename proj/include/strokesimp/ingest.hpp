#pragma once

// Parsing of KanjiVG-style stroke-decomposed glyphs and corpus construction.

#include "strokesimp/errors.hpp"
#include "strokesimp/geometry.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace strokesimp {

/// Parses an SVG path `d` attribute restricted to the M/m, C/c, S/s, L/l
/// profile. Lines become cubics with control points at the thirds. Throws
/// PathError on anything outside the profile.
std::vector<CubicSegment> parse_path_data(std::string_view d);

/// Absolute `M ... C ...` path data with round-trippable numbers.
std::string format_path_data(std::span<const CubicSegment> segments);

struct StrokePath {
    int index = 0;
    std::vector<CubicSegment> segments;

    friend bool operator==(const StrokePath&, const StrokePath&) = default;
};

struct ViewBox {
    double min_x = 0.0;
    double min_y = 0.0;
    double width = 109.0;
    double height = 109.0;

    double max_dimension() const { return width > height ? width : height; }

    friend bool operator==(const ViewBox&, const ViewBox&) = default;
};

struct GlyphDef {
    char32_t class_label = 0;
    std::vector<StrokePath> strokes;
    ViewBox viewbox;

    int stroke_count() const { return static_cast<int>(strokes.size()); }
    /// Bitmask with one bit per stroke.
    std::uint64_t full_mask() const;

    friend bool operator==(const GlyphDef&, const GlyphDef&) = default;
};

/// Builds a glyph from an SVG document. The codepoint comes from the
/// override when given, else from the KanjiVG id conventions
/// (`kvg:kanji_XXXXX`, `kvg:StrokePaths_XXXXX`, `kvg:XXXXX`).
GlyphDef parse_glyph_svg(std::string_view document,
                         std::optional<char32_t> codepoint_override = std::nullopt);

/// Reads and parses one file. Falls back to a hex filename stem
/// (`07389.svg`) when the document carries no codepoint.
GlyphDef load_glyph_file(const std::filesystem::path& file,
                         std::optional<char32_t> codepoint_override = std::nullopt);

struct LoadedGlyphs {
    std::vector<GlyphDef> glyphs;
    std::vector<std::filesystem::path> files;
    std::size_t skipped_variants = 0;
    std::size_t duplicate_codepoints = 0;
};

/// Loads a directory of `.svg` files (sorted by name, KanjiVG variant files
/// such as `04e14-Kaisho.svg` skipped), a single `.svg` file, or a manifest
/// listing one path per line (relative paths resolve against the manifest).
/// Duplicate codepoints keep the first occurrence.
LoadedGlyphs load_glyphs(const std::filesystem::path& input,
                         std::optional<char32_t> codepoint_override = std::nullopt);

/// One exemplar per class with a dense class index in [0, C).
class Corpus {
public:
    Corpus() = default;
    /// Sorts by codepoint. Throws GlyphError(DuplicateClass) on repeated labels.
    explicit Corpus(std::vector<GlyphDef> glyphs);

    const std::vector<GlyphDef>& glyphs() const { return glyphs_; }
    std::size_t size() const { return glyphs_.size(); }
    bool empty() const { return glyphs_.empty(); }
    const GlyphDef& operator[](std::size_t i) const { return glyphs_[i]; }

    std::optional<int> class_id(char32_t label) const;
    char32_t label(int class_id) const { return glyphs_.at(static_cast<std::size_t>(class_id)).class_label; }
    const GlyphDef* find(char32_t label) const;

    /// FNV-1a over a canonical text serialization, as 16 hex digits.
    std::string content_hash() const;

private:
    std::vector<GlyphDef> glyphs_;
    std::unordered_map<char32_t, int> index_;
};

constexpr char32_t kCjkFirst = 0x4E00;
constexpr char32_t kCjkLast = 0x9FFF;

Corpus filter_corpus_cjk(std::vector<GlyphDef> glyphs);
Corpus select_by_stroke_count(const Corpus& corpus, int stroke_count);

/// "U+7389" style label.
std::string codepoint_label(char32_t cp);
/// UTF-8 encoding of a scalar value.
std::string to_utf8(char32_t cp);
/// Accepts "U+XXXX", bare hex, or a single UTF-8 encoded character.
std::optional<char32_t> parse_codepoint(std::string_view text);
bool is_unicode_scalar(char32_t cp);

} // namespace strokesimp
