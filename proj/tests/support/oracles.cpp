#include "oracles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace strokesimp::testing {

GlyphImage direct_rasterize(const GlyphDef& glyph, std::uint64_t subset, const RasterConfig& cfg) {
    const PixelMapping map(glyph.viewbox, cfg);
    const double r2 = map.pen_radius_squared();
    std::vector<std::vector<Point>> polys;
    for (const auto& s : glyph.strokes) {
        if ((subset >> s.index) & 1U) {
            polys.push_back(stroke_polyline_in_samples(s, map, cfg.flatten_tol));
        }
    }
    const int ss = cfg.supersample;
    const int n = ss * ss;
    GlyphImage img;
    img.grid = cfg.grid;
    img.subset = subset;
    img.polarity = cfg.polarity;
    img.pixels.assign(static_cast<std::size_t>(cfg.grid) * cfg.grid, 0);
    std::vector<int> hits(polys.size());
    for (int y = 0; y < cfg.grid; ++y) {
        for (int x = 0; x < cfg.grid; ++x) {
            std::fill(hits.begin(), hits.end(), 0);
            for (int j = 0; j < ss; ++j) {
                for (int i = 0; i < ss; ++i) {
                    const Point p{x * ss + i + 0.5, y * ss + j + 0.5};
                    for (std::size_t s = 0; s < polys.size(); ++s) {
                        const auto& poly = polys[s];
                        bool in = false;
                        if (poly.size() == 1) {
                            in = inside_capsule(p, poly[0], poly[0], r2);
                        }
                        for (std::size_t e = 0; !in && e + 1 < poly.size(); ++e) {
                            in = inside_capsule(p, poly[e], poly[e + 1], r2);
                        }
                        hits[s] += in ? 1 : 0;
                    }
                }
            }
            int best = 0;
            for (const int h : hits) {
                best = std::max<int>(best, coverage_from_hits(h, n));
            }
            const auto v = static_cast<std::uint8_t>(best);
            img.pixels[static_cast<std::size_t>(y * cfg.grid + x)] =
                cfg.polarity == Polarity::InkLow ? static_cast<std::uint8_t>(255 - v) : v;
        }
    }
    return img;
}

BruteLevel brute_force_level(const GlyphDef& glyph, int removed, const Backend& backend, const RasterConfig& cfg) {
    const int K = glyph.stroke_count();
    const int target = *backend.descriptor().class_id(glyph.class_label);
    BruteLevel out;
    out.legibility = -1.0;
    out.min = std::numeric_limits<double>::infinity();
    out.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << K); ++mask) {
        if (std::popcount(mask) != K - removed) {
            continue;
        }
        const GlyphImage img = direct_rasterize(glyph, mask, cfg);
        const auto scored = backend.score_batch(std::span<const GlyphImage>(&img, 1));
        const double p = scored[0].probs[static_cast<std::size_t>(target)];
        if (p > out.legibility) {
            out.legibility = p;
            out.subset = mask;
            out.predicted = scored[0].predicted;
        }
        sum += p;
        out.min = std::min(out.min, p);
        out.max = std::max(out.max, p);
        ++out.candidates;
    }
    out.mean = sum / static_cast<double>(out.candidates);
    return out;
}

std::vector<double> naive_features(const GlyphImage& image, const PrototypeParams& params) {
    const int n = image.grid;
    const double sigma = params.blur_radius;
    const int half = sigma > 0.0 ? static_cast<int>(std::ceil(3.0 * sigma)) : 0;
    // Full 2D kernel, normalized as the outer product of normalized 1D kernels.
    std::vector<double> k1(static_cast<std::size_t>(2 * half + 1), 1.0);
    double s1 = 0.0;
    for (int i = -half; i <= half; ++i) {
        k1[static_cast<std::size_t>(i + half)] = sigma > 0.0 ? std::exp(-(i * i) / (2.0 * sigma * sigma)) : 1.0;
        s1 += k1[static_cast<std::size_t>(i + half)];
    }
    std::vector<double> blurred(static_cast<std::size_t>(n) * n, 0.0);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            for (int dy = -half; dy <= half; ++dy) {
                for (int dx = -half; dx <= half; ++dx) {
                    const int yy = y + dy;
                    const int xx = x + dx;
                    if (yy < 0 || yy >= n || xx < 0 || xx >= n) {
                        continue;
                    }
                    const double w = k1[static_cast<std::size_t>(dy + half)] * k1[static_cast<std::size_t>(dx + half)] /
                                     (s1 * s1);
                    acc += w * image.ink(static_cast<std::size_t>(yy * n + xx)) / 255.0;
                }
            }
            blurred[static_cast<std::size_t>(y * n + x)] = acc;
        }
    }
    const int side = params.feature_side;
    const int cell = n / side;
    std::vector<double> f(static_cast<std::size_t>(side) * side, 0.0);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            f[static_cast<std::size_t>((y / cell) * side + x / cell)] += blurred[static_cast<std::size_t>(y * n + x)];
        }
    }
    double norm = 0.0;
    for (const double v : f) {
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (auto& v : f) {
            v /= norm;
        }
    }
    return f;
}

std::vector<double> naive_prototype_probs(const Corpus& corpus, const RasterConfig& cfg,
                                          const PrototypeParams& params, const GlyphImage& image) {
    const auto f = naive_features(image, params);
    std::vector<double> logits;
    for (const auto& g : corpus.glyphs()) {
        const GlyphImage full = direct_rasterize(g, g.full_mask(), cfg);
        const auto p = naive_features(full, params);
        double d2 = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) {
            d2 += (f[i] - p[i]) * (f[i] - p[i]);
        }
        logits.push_back(-params.temperature * d2);
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (auto& l : logits) {
        l = std::exp(l - top);
        z += l;
    }
    for (auto& l : logits) {
        l /= z;
    }
    return logits;
}

double max_flatten_deviation(const CubicSegment& seg, std::span<const Point> polyline, int samples) {
    double worst = 0.0;
    for (int i = 0; i <= samples; ++i) {
        const Point p = seg.eval(static_cast<double>(i) / samples);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t e = 0; e + 1 < polyline.size(); ++e) {
            best = std::min(best, distance_to_segment(p, polyline[e], polyline[e + 1]));
        }
        if (polyline.size() == 1) {
            best = distance(p, polyline[0]);
        }
        worst = std::max(worst, best);
    }
    return worst;
}

} // namespace strokesimp::testing
