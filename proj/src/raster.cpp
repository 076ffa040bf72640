#include "strokesimp/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace strokesimp {

void RasterConfig::validate() const {
    if (grid < 8) {
        throw RasterError(RasterErrorKind::InvalidConfig, "grid must be >= 8");
    }
    if (supersample < 1 || supersample > 16) {
        throw RasterError(RasterErrorKind::InvalidConfig, "supersample must be in [1, 16]");
    }
    if (!(stroke_width > 0.0 && stroke_width < 1.0)) {
        throw RasterError(RasterErrorKind::InvalidConfig, "stroke_width must be in (0, 1)");
    }
    if (!(flatten_tol > 0.0)) {
        throw RasterError(RasterErrorKind::InvalidConfig, "flatten_tol must be > 0");
    }
}

// ---------------------------------------------------------------------------
// Flattening

namespace {

constexpr int kMaxSubdivisionDepth = 24;

bool flat_enough(const CubicSegment& c, double tol2) {
    return squared_distance_to_segment(c.p[1], c.p[0], c.p[3]) <= tol2 &&
           squared_distance_to_segment(c.p[2], c.p[0], c.p[3]) <= tol2;
}

void subdivide(const CubicSegment& c, double tol2, int depth, std::vector<Point>& out) {
    if (depth >= kMaxSubdivisionDepth || flat_enough(c, tol2)) {
        out.push_back(c.p[3]);
        return;
    }
    const auto halves = split_half(c);
    subdivide(halves[0], tol2, depth + 1, out);
    subdivide(halves[1], tol2, depth + 1, out);
}

} // namespace

std::vector<Point> flatten_segment(const CubicSegment& seg, double tol) {
    std::vector<Point> out{seg.p[0]};
    subdivide(seg, tol * tol, 0, out);
    return out;
}

std::vector<Point> flatten_stroke(const StrokePath& stroke, double tol) {
    std::vector<Point> out;
    for (const auto& seg : stroke.segments) {
        if (out.empty()) {
            out.push_back(seg.p[0]);
        }
        subdivide(seg, tol * tol, 0, out);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Masks

PixelMapping::PixelMapping(const ViewBox& vb, const RasterConfig& cfg)
    : vb_(vb),
      extent_(static_cast<double>(cfg.grid) * cfg.supersample),
      max_dim_(vb.max_dimension()),
      radius_(cfg.stroke_width * static_cast<double>(cfg.grid) * cfg.supersample * 0.5),
      side_(cfg.grid * cfg.supersample) {}

Point PixelMapping::to_samples(Point g) const {
    // Multiply before dividing so that exact midlines stay exact (54.5 * 256 / 109 == 128).
    const double x = (g.x - vb_.min_x) + (max_dim_ - vb_.width) * 0.5;
    const double y = (g.y - vb_.min_y) + (max_dim_ - vb_.height) * 0.5;
    return {x * extent_ / max_dim_, y * extent_ / max_dim_};
}

std::vector<Point> stroke_polyline_in_samples(const StrokePath& stroke, const PixelMapping& map,
                                              double flatten_tol) {
    auto poly = flatten_stroke(stroke, flatten_tol);
    for (auto& p : poly) {
        p = map.to_samples(p);
    }
    return poly;
}

StrokeMask render_stroke_mask(const StrokePath& stroke, const ViewBox& vb, const RasterConfig& cfg) {
    cfg.validate();
    const PixelMapping map(vb, cfg);
    const auto poly = stroke_polyline_in_samples(stroke, map, cfg.flatten_tol);
    const int side = map.samples_per_side();
    const double r = map.pen_radius();
    const double r2 = map.pen_radius_squared();

    std::vector<std::uint8_t> hit(static_cast<std::size_t>(side) * side, 0);
    auto clamp_index = [side](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, side - 1); };

    const std::size_t nseg = poly.size() < 2 ? 1 : poly.size() - 1;
    for (std::size_t s = 0; s < nseg; ++s) {
        const Point a = poly[s];
        const Point b = poly.size() < 2 ? poly[s] : poly[s + 1];
        // Sample centers sit at i + 0.5; the bounding box is padded by one sample.
        const int sx0 = clamp_index(std::min(a.x, b.x) - r - 1.0);
        const int sx1 = clamp_index(std::max(a.x, b.x) + r + 1.0);
        const int sy0 = clamp_index(std::min(a.y, b.y) - r - 1.0);
        const int sy1 = clamp_index(std::max(a.y, b.y) + r + 1.0);
        for (int sy = sy0; sy <= sy1; ++sy) {
            std::uint8_t* row = hit.data() + static_cast<std::size_t>(sy) * side;
            for (int sx = sx0; sx <= sx1; ++sx) {
                if (!row[sx] && inside_capsule({sx + 0.5, sy + 0.5}, a, b, r2)) {
                    row[sx] = 1;
                }
            }
        }
    }

    StrokeMask mask;
    mask.stroke_index = stroke.index;
    mask.grid = cfg.grid;
    mask.alpha.assign(static_cast<std::size_t>(cfg.grid) * cfg.grid, 0);
    const int ss = cfg.supersample;
    const int n = ss * ss;
    mask.x0 = cfg.grid;
    mask.y0 = cfg.grid;
    for (int y = 0; y < cfg.grid; ++y) {
        for (int x = 0; x < cfg.grid; ++x) {
            int count = 0;
            for (int j = 0; j < ss; ++j) {
                const std::uint8_t* row = hit.data() + static_cast<std::size_t>(y * ss + j) * side + x * ss;
                for (int i = 0; i < ss; ++i) {
                    count += row[i];
                }
            }
            const std::uint8_t a = coverage_from_hits(count, n);
            mask.alpha[static_cast<std::size_t>(y * cfg.grid + x)] = a;
            if (a) {
                mask.x0 = std::min(mask.x0, x);
                mask.y0 = std::min(mask.y0, y);
                mask.x1 = std::max(mask.x1, x);
                mask.y1 = std::max(mask.y1, y);
            }
        }
    }
    return mask;
}

std::vector<StrokeMask> render_stroke_masks(const GlyphDef& glyph, const RasterConfig& cfg) {
    std::vector<StrokeMask> masks;
    masks.reserve(glyph.strokes.size());
    for (const auto& s : glyph.strokes) {
        masks.push_back(render_stroke_mask(s, glyph.viewbox, cfg));
    }
    return masks;
}

// ---------------------------------------------------------------------------
// Compositing

void composite_into(std::span<const StrokeMask> masks, std::uint64_t subset, const RasterConfig& cfg,
                    GlyphImage& out) {
    if (subset == 0) {
        throw RasterError(RasterErrorKind::EmptySubset, "cannot composite an empty stroke subset");
    }
    if (masks.size() < 64 && (subset >> masks.size()) != 0) {
        throw RasterError(RasterErrorKind::DimensionMismatch, "subset selects strokes without masks");
    }
    const auto cells = static_cast<std::size_t>(cfg.grid) * cfg.grid;
    out.grid = cfg.grid;
    out.subset = subset;
    out.polarity = cfg.polarity;
    out.pixels.assign(cells, 0);

    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (!((subset >> i) & 1U)) {
            continue;
        }
        const StrokeMask& m = masks[i];
        if (m.grid != cfg.grid) {
            throw RasterError(RasterErrorKind::DimensionMismatch, "mask grid differs from config grid");
        }
        for (int y = m.y0; y <= m.y1; ++y) {
            const std::size_t row = static_cast<std::size_t>(y) * cfg.grid;
            for (int x = m.x0; x <= m.x1; ++x) {
                out.pixels[row + x] = std::max(out.pixels[row + x], m.alpha[row + x]);
            }
        }
    }
    if (cfg.polarity == Polarity::InkLow) {
        for (auto& p : out.pixels) {
            p = static_cast<std::uint8_t>(255 - p);
        }
    }
}

GlyphImage composite(std::span<const StrokeMask> masks, std::uint64_t subset, const RasterConfig& cfg) {
    GlyphImage img;
    composite_into(masks, subset, cfg, img);
    return img;
}

double ink_proportion(const GlyphImage& image, const GlyphImage& full, int threshold) {
    if (image.grid != full.grid || image.pixels.size() != full.pixels.size()) {
        throw RasterError(RasterErrorKind::DimensionMismatch, "images differ in size");
    }
    std::size_t kept = 0;
    std::size_t total = 0;
    for (std::size_t i = 0; i < full.pixels.size(); ++i) {
        total += full.ink(i) >= threshold ? 1 : 0;
        kept += image.ink(i) >= threshold ? 1 : 0;
    }
    if (total == 0) {
        throw RasterError(RasterErrorKind::ZeroInkFull, "full glyph has no ink above threshold");
    }
    return static_cast<double>(kept) / static_cast<double>(total);
}

void write_pgm(const GlyphImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw RasterError(RasterErrorKind::Io, "cannot write " + path.string());
    }
    out << "P5\n" << image.grid << ' ' << image.grid << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
}

} // namespace strokesimp
