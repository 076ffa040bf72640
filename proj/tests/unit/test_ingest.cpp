#include "strokesimp/ingest.hpp"

#include "synthetic.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace strokesimp;
namespace fs = std::filesystem;

namespace {

void check_points(const CubicSegment& s, std::array<Point, 4> want) {
    for (int i = 0; i < 4; ++i) {
        CHECK(s.p[i].x == doctest::Approx(want[i].x).epsilon(1e-12));
        CHECK(s.p[i].y == doctest::Approx(want[i].y).epsilon(1e-12));
    }
}

PathErrorKind path_error(std::string_view d) {
    try {
        parse_path_data(d);
    } catch (const PathError& e) {
        return e.kind();
    }
    FAIL("no PathError for '" << d << "'");
    return PathErrorKind::EmptyPath;
}

GlyphErrorKind glyph_error(std::string_view doc) {
    try {
        parse_glyph_svg(doc);
    } catch (const GlyphError& e) {
        return e.kind();
    }
    FAIL("no GlyphError");
    return GlyphErrorKind::Io;
}

const char* kKanjiHeader = R"(<?xml version="1.0" encoding="UTF-8"?>
<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.0//EN" "http://www.w3.org/TR/2001/REC-SVG-20010904/DTD/svg10.dtd" [
<!ATTLIST g
xmlns:kvg CDATA #FIXED "http://kanjivg.tagaini.net"
kvg:element CDATA #IMPLIED >
]>
<svg xmlns="http://www.w3.org/2000/svg" width="109" height="109" viewBox="0 0 109 109">
)";

fs::path scratch(const std::string& name) {
    fs::path dir = fs::path(STROKESIMP_TEST_TMP) / ("ingest_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::string one_stroke_svg(const std::string& id_hex) {
    return std::string(kKanjiHeader) + "<g id=\"kvg:StrokePaths_" + id_hex +
           "\"><path id=\"kvg:" + id_hex + "-s1\" d=\"M10,10 C30,0 70,0 90,10\"/></g></svg>";
}

} // namespace

TEST_CASE("absolute cubic maps directly") {
    const auto segs = parse_path_data("M0,0 C1,2 3,2 4,0");
    REQUIRE(segs.size() == 1);
    check_points(segs[0], {Point{0, 0}, {1, 2}, {3, 2}, {4, 0}});
}

TEST_CASE("relative cubic equals absolute form") {
    CHECK(parse_path_data("M0,0 c1,2 3,2 4,0") == parse_path_data("M0,0 C1,2 3,2 4,0"));
}

TEST_CASE("line becomes a cubic with collinear thirds") {
    const auto segs = parse_path_data("M0,0 L4,0");
    REQUIRE(segs.size() == 1);
    check_points(segs[0], {Point{0, 0}, {4.0 / 3.0, 0}, {8.0 / 3.0, 0}, {4, 0}});
    CHECK(parse_path_data("M0,0 l4,0") == segs);
}

TEST_CASE("smooth cubic reflects the previous control point") {
    const auto segs = parse_path_data("M0,0 C1,1 2,1 3,0 S5,-1 6,0");
    REQUIRE(segs.size() == 2);
    check_points(segs[1], {Point{3, 0}, {4, -1}, {5, -1}, {6, 0}});
    // Without a preceding curve the first control point is the current point.
    const auto lone = parse_path_data("M1,1 s2,2 3,0");
    check_points(lone[0], {Point{1, 1}, {1, 1}, {3, 3}, {4, 1}});
    CHECK(parse_path_data("M0,0 C1,1 2,1 3,0 s2,-1 3,0") == segs);
}

TEST_CASE("KanjiVG number forms") {
    const auto segs = parse_path_data("M24.25,21.5c0.82,0.41,2.33,0.5,3.16,0.41c-7.5.7-1e1,2E-1,.5-.5");
    REQUIRE(segs.size() == 2);
    check_points(segs[0], {Point{24.25, 21.5}, {25.07, 21.91}, {26.58, 22.0}, {27.41, 21.91}});
    check_points(segs[1], {Point{27.41, 21.91}, {19.91, 22.61}, {17.41, 22.11}, {27.91, 21.41}});
}

TEST_CASE("implicit repeats and lineto after moveto") {
    const auto segs = parse_path_data("M0,0 C1,0 2,0 3,0 4,0 5,0 6,0");
    REQUIRE(segs.size() == 2);
    CHECK(segs[1].start() == Point{3, 0});
    const auto lines = parse_path_data("M0,0 3,0 3,3");
    REQUIRE(lines.size() == 2);
    CHECK(lines[1].end() == Point{3, 3});
}

TEST_CASE("chain is endpoint connected") {
    const auto segs = parse_path_data("M10,10 c5,5 10,5 15,0 s10,-5 15,0 l5,5 C60,40 65,45 70,50");
    for (std::size_t i = 1; i < segs.size(); ++i) {
        CHECK(segs[i].start() == segs[i - 1].end());
    }
}

TEST_CASE("path errors") {
    CHECK(path_error("") == PathErrorKind::EmptyPath);
    CHECK(path_error("   ") == PathErrorKind::EmptyPath);
    CHECK(path_error("M1,1") == PathErrorKind::EmptyPath);
    CHECK(path_error("C1,1 2,2 3,3") == PathErrorKind::EmptyPath);
    CHECK(path_error("M0,0 A1,1 0 0 1 2,2") == PathErrorKind::UnsupportedCommand);
    CHECK(path_error("M0,0 Q1,1 2,2") == PathErrorKind::UnsupportedCommand);
    CHECK(path_error("M0,0 L1,1 Z") == PathErrorKind::UnsupportedCommand);
    CHECK(path_error("M0,0 H5") == PathErrorKind::UnsupportedCommand);
    CHECK(path_error("M0,0 C1,x 2,2 3,3") == PathErrorKind::MalformedNumber);
    CHECK(path_error("M0,0 C1,2 3") == PathErrorKind::MalformedNumber);
    CHECK(path_error("M0,0 L1,1 M5,5 L6,6") == PathErrorKind::Disconnected);
}

TEST_CASE("format then parse round trips") {
    auto glyphs = testing::random_glyphs(20, 1, 6, 99);
    for (const auto& g : glyphs) {
        for (const auto& s : g.strokes) {
            const auto again = parse_path_data(format_path_data(s.segments));
            REQUIRE(again.size() == s.segments.size());
            for (std::size_t i = 0; i < again.size(); ++i) {
                for (int j = 0; j < 4; ++j) {
                    CHECK(std::abs(again[i].p[j].x - s.segments[i].p[j].x) <= 1e-9);
                    CHECK(std::abs(again[i].p[j].y - s.segments[i].p[j].y) <= 1e-9);
                }
            }
        }
    }
}

TEST_CASE("hand-built one-stroke svg with override") {
    const std::string doc = R"(<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 109 109">
<path d="M10,10 C30,0 70,0 90,10"/></svg>)";
    CHECK(glyph_error(doc) == GlyphErrorKind::MissingCodepoint);
    const GlyphDef g = parse_glyph_svg(doc, U'A');
    CHECK(g.class_label == U'A');
    CHECK(g.stroke_count() == 1);
    CHECK(g.strokes[0].segments.size() == 1);
    CHECK(g.strokes[0].index == 0);
    CHECK(g.viewbox == ViewBox{0, 0, 109, 109});
}

TEST_CASE("kanjivg ids give the codepoint") {
    const GlyphDef g = parse_glyph_svg(one_stroke_svg("07389"));
    CHECK(g.class_label == U'玉');
    CHECK(g.full_mask() == 1);
}

TEST_CASE("glyph errors") {
    CHECK(glyph_error(std::string(kKanjiHeader) + "<g id=\"kvg:StrokePaths_07389\"></g></svg>") ==
          GlyphErrorKind::NoStrokes);
    CHECK(glyph_error("<svg><path d=\"M0,0 L1,1\"") == GlyphErrorKind::XmlError);
    CHECK(glyph_error("not xml at all <<<") == GlyphErrorKind::XmlError);
}

TEST_CASE("real KanjiVG glyph") {
    const auto dir = testing::kanjivg_dir();
    if (dir.empty()) {
        MESSAGE("KanjiVG snapshot unavailable");
        return;
    }
    const GlyphDef jade = load_glyph_file(fs::path(dir) / "07389.svg");
    CHECK(jade.class_label == U'玉');
    CHECK(jade.stroke_count() == 5);
    CHECK(jade.viewbox.width == 109);
    for (int i = 0; i < jade.stroke_count(); ++i) {
        CHECK(jade.strokes[static_cast<std::size_t>(i)].index == i);
    }
    const GlyphDef king = load_glyph_file(fs::path(dir) / "0738b.svg");
    CHECK(king.stroke_count() == 4);
}

TEST_CASE("directory loading skips variants and sorts") {
    const fs::path dir = scratch("dir");
    write_file(dir / "04e01.svg", one_stroke_svg("04e01"));
    write_file(dir / "04e00.svg", one_stroke_svg("04e00"));
    write_file(dir / "04e00-Kaisho.svg", one_stroke_svg("04e00"));
    write_file(dir / "notes.txt", "ignored");
    const LoadedGlyphs loaded = load_glyphs(dir);
    REQUIRE(loaded.glyphs.size() == 2);
    CHECK(loaded.skipped_variants == 1);
    CHECK(loaded.glyphs[0].class_label == 0x4E00);
    CHECK(loaded.files.size() == 2);

    write_file(dir / "list.txt", "04e01.svg\n\n" + (dir / "04e00.svg").string() + "\n");
    const LoadedGlyphs listed = load_glyphs(dir / "list.txt");
    REQUIRE(listed.glyphs.size() == 2);
    CHECK(listed.glyphs[0].class_label == 0x4E01);

    CHECK(load_glyphs(dir / "04e01.svg").glyphs.size() == 1);
    CHECK_THROWS_AS(load_glyphs(dir / "missing"), GlyphError);

    const fs::path empty = scratch("empty");
    CHECK(load_glyphs(empty).glyphs.empty());
}

TEST_CASE("filename stem fallback") {
    const fs::path dir = scratch("stem");
    write_file(dir / "04e09.svg",
               R"(<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 109 109"><path d="M1,1 L9,9"/></svg>)");
    CHECK(load_glyph_file(dir / "04e09.svg").class_label == 0x4E09);
}

TEST_CASE("cjk filter bounds and idempotence") {
    std::vector<GlyphDef> glyphs;
    for (const char32_t cp : {U'A', char32_t{0x4E00}, char32_t{0x9FFF}, char32_t{0x4DFF}, char32_t{0xA000},
                              char32_t{0x7389}}) {
        GlyphDef g;
        g.class_label = cp;
        g.strokes.push_back(testing::line_stroke(0, {10, 10}, {90, 90}));
        glyphs.push_back(g);
    }
    const Corpus c = filter_corpus_cjk(glyphs);
    REQUIRE(c.size() == 3);
    CHECK(c[0].class_label == 0x4E00);
    CHECK(c[1].class_label == 0x7389);
    CHECK(c[2].class_label == 0x9FFF);
    CHECK(!c.class_id(U'A'));
    CHECK(*c.class_id(0x9FFF) == 2);
    const Corpus twice = filter_corpus_cjk(c.glyphs());
    CHECK(twice.glyphs() == c.glyphs());
    CHECK(twice.content_hash() == c.content_hash());
}

TEST_CASE("corpus rejects duplicate labels") {
    auto glyphs = testing::random_glyphs(2, 2, 2, 1);
    glyphs[1].class_label = glyphs[0].class_label;
    try {
        Corpus c(glyphs);
        FAIL("expected DuplicateClass");
    } catch (const GlyphError& e) {
        CHECK(e.kind() == GlyphErrorKind::DuplicateClass);
    }
}

TEST_CASE("select by stroke count") {
    const Corpus c(testing::random_glyphs(12, 2, 5, 3));
    const Corpus three = select_by_stroke_count(c, 3);
    CHECK(three.size() == 3);
    for (const auto& g : three.glyphs()) {
        CHECK(g.stroke_count() == 3);
    }
    CHECK(select_by_stroke_count(c, 999).empty());
    CHECK(*three.class_id(three[1].class_label) == 1);
}

TEST_CASE("content hash tracks geometry") {
    auto glyphs = testing::random_glyphs(4, 2, 3, 5);
    const Corpus a(glyphs);
    glyphs[2].strokes[0].segments[0].p[1].x += 0.5;
    const Corpus b(glyphs);
    CHECK(a.content_hash().size() == 16);
    CHECK(a.content_hash() != b.content_hash());
}

TEST_CASE("codepoint helpers") {
    CHECK(codepoint_label(0x7389) == "U+7389");
    CHECK(codepoint_label(0x20B9F) == "U+20B9F");
    CHECK(to_utf8(0x7389) == "\xE7\x8E\x89");
    CHECK(*parse_codepoint("U+7389") == 0x7389);
    CHECK(*parse_codepoint("07389") == 0x7389);
    CHECK(*parse_codepoint("\xE7\x8E\x89") == 0x7389);
    CHECK(*parse_codepoint("A") == U'A');
    CHECK(!parse_codepoint("U+D800"));
    CHECK(!parse_codepoint(""));
    CHECK(!parse_codepoint("hello"));
}

TEST_CASE("full snapshot statistics") {
    const auto dir = testing::kanjivg_dir();
    if (dir.empty()) {
        MESSAGE("KanjiVG snapshot unavailable");
        return;
    }
    const Corpus c = filter_corpus_cjk(load_glyphs(dir).glyphs);
    MESSAGE("CJK glyphs in snapshot: " << c.size());
    CHECK(c.size() > 6000);
    std::size_t total = 0;
    for (const int K : {5, 10, 15, 20}) {
        const auto n = select_by_stroke_count(c, K).size();
        MESSAGE("K=" << K << ": " << n);
        total += n;
    }
    CHECK(total > 1000);
}
