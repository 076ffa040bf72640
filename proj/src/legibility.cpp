#include "strokesimp/legibility.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace strokesimp {

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) {
        return out;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (auto& v : out) {
        v /= sum;
    }
    return out;
}

ClassProbabilities ClassProbabilities::from_probs(std::vector<double> probs) {
    ClassProbabilities cp;
    cp.probs = std::move(probs);
    if (!cp.probs.empty()) {
        // max_element returns the first maximum, i.e. the lowest class id.
        const auto it = std::max_element(cp.probs.begin(), cp.probs.end());
        cp.predicted = static_cast<int>(it - cp.probs.begin());
        cp.predicted_prob = *it;
    }
    return cp;
}

std::string to_string(BackendKind kind) {
    return kind == BackendKind::Prototype ? "prototype" : "external";
}

BackendDescriptor::BackendDescriptor(BackendKind kind, std::vector<char32_t> class_labels)
    : kind_(kind), labels_(std::move(class_labels)) {
    index_.reserve(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (!index_.emplace(labels_[i], static_cast<int>(i)).second) {
            throw BackendError(BackendErrorKind::ProtocolError,
                               "duplicate class label " + codepoint_label(labels_[i]));
        }
    }
}

std::optional<int> BackendDescriptor::class_id(char32_t label) const {
    const auto it = index_.find(label);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::vector<Verdict> Backend::score_verdicts(std::span<const GlyphImage> images, int target_class) const {
    const auto scored = score_batch(images);
    std::vector<Verdict> out;
    out.reserve(scored.size());
    for (const auto& cp : scored) {
        out.push_back({cp.probs.at(static_cast<std::size_t>(target_class)), cp.predicted});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prototype classifier

namespace {

constexpr std::size_t kLanes = 8;
constexpr std::size_t kClassBlock = 64;

std::vector<double> gaussian_kernel(double sigma) {
    if (sigma <= 0.0) {
        return {1.0};
    }
    const int half = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + half)] = w;
        sum += w;
    }
    for (auto& w : k) {
        w /= sum;
    }
    return k;
}

// Fixed-lane accumulation: the summation order does not depend on the caller,
// so one (image, prototype) pair always yields the same bits.
float dot_lanes(const float* a, const float* b, std::size_t n) {
    float acc[kLanes] = {};
    for (std::size_t i = 0; i < n; i += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) {
            acc[l] += a[i + l] * b[i + l];
        }
    }
    return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

} // namespace

PrototypeClassifier::PrototypeClassifier(const Corpus& corpus, const RasterConfig& cfg, PrototypeParams params)
    : cfg_(cfg), params_(params) {
    cfg_.validate();
    if (corpus.empty()) {
        throw BackendError(BackendErrorKind::EmptyCorpus, "prototype classifier needs a nonempty corpus");
    }
    if (params_.feature_side < 1 || cfg_.grid % params_.feature_side != 0) {
        throw BackendError(BackendErrorKind::DimensionMismatch,
                           "feature_side must divide the raster grid");
    }
    if (!(params_.temperature > 0.0) || params_.blur_radius < 0.0) {
        throw BackendError(BackendErrorKind::DimensionMismatch,
                           "temperature must be > 0 and blur_radius >= 0");
    }
    const auto raw_dim = static_cast<std::size_t>(params_.feature_side) * params_.feature_side;
    dim_ = (raw_dim + kLanes - 1) / kLanes * kLanes;
    kernel_ = gaussian_kernel(params_.blur_radius);

    std::vector<char32_t> labels;
    labels.reserve(corpus.size());
    prototypes_.assign(corpus.size() * dim_, 0.0F);
    for (std::size_t c = 0; c < corpus.size(); ++c) {
        const GlyphDef& g = corpus[c];
        labels.push_back(g.class_label);
        const auto masks = render_stroke_masks(g, cfg_);
        const auto f = features(composite(masks, g.full_mask(), cfg_));
        std::copy(f.begin(), f.end(), prototypes_.begin() + static_cast<std::ptrdiff_t>(c * dim_));
    }
    descriptor_ = BackendDescriptor(BackendKind::Prototype, std::move(labels));
}

void PrototypeClassifier::check_image(const GlyphImage& image) const {
    if (image.grid != cfg_.grid ||
        image.pixels.size() != static_cast<std::size_t>(cfg_.grid) * cfg_.grid) {
        throw BackendError(BackendErrorKind::DimensionMismatch,
                           "image is " + std::to_string(image.grid) + "px, classifier expects " +
                               std::to_string(cfg_.grid));
    }
}

std::vector<float> PrototypeClassifier::features(const GlyphImage& image) const {
    check_image(image);
    const int n = cfg_.grid;
    const int half = static_cast<int>(kernel_.size() / 2);
    const auto cells = static_cast<std::size_t>(n) * n;

    std::vector<double> src(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        src[i] = image.ink(i) / 255.0;
    }
    // Separable blur with zero padding.
    std::vector<double> tmp(cells, 0.0);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            for (int t = -half; t <= half; ++t) {
                const int xx = x + t;
                if (xx >= 0 && xx < n) {
                    acc += kernel_[static_cast<std::size_t>(t + half)] * src[static_cast<std::size_t>(y * n + xx)];
                }
            }
            tmp[static_cast<std::size_t>(y * n + x)] = acc;
        }
    }
    std::vector<double> blurred(cells, 0.0);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            for (int t = -half; t <= half; ++t) {
                const int yy = y + t;
                if (yy >= 0 && yy < n) {
                    acc += kernel_[static_cast<std::size_t>(t + half)] * tmp[static_cast<std::size_t>(yy * n + x)];
                }
            }
            blurred[static_cast<std::size_t>(y * n + x)] = acc;
        }
    }

    const int side = params_.feature_side;
    const int cell = n / side;
    std::vector<double> pooled(static_cast<std::size_t>(side) * side, 0.0);
    for (int fy = 0; fy < side; ++fy) {
        for (int fx = 0; fx < side; ++fx) {
            double acc = 0.0;
            for (int y = fy * cell; y < (fy + 1) * cell; ++y) {
                for (int x = fx * cell; x < (fx + 1) * cell; ++x) {
                    acc += blurred[static_cast<std::size_t>(y * n + x)];
                }
            }
            pooled[static_cast<std::size_t>(fy * side + fx)] = acc / (cell * cell);
        }
    }
    double norm2 = 0.0;
    for (const double v : pooled) {
        norm2 += v * v;
    }
    std::vector<float> out(dim_, 0.0F);
    if (norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            out[i] = static_cast<float>(pooled[i] * inv);
        }
    }
    return out;
}

std::vector<double> PrototypeClassifier::squared_distances(std::span<const GlyphImage> images) const {
    const std::size_t classes = descriptor_.class_count();
    std::vector<float> feats(images.size() * dim_);
    std::vector<double> self_norm(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto f = features(images[i]);
        std::copy(f.begin(), f.end(), feats.begin() + static_cast<std::ptrdiff_t>(i * dim_));
        self_norm[i] = dot_lanes(f.data(), f.data(), dim_);
    }
    std::vector<double> proto_norm(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        const float* p = prototype(static_cast<int>(c));
        proto_norm[c] = dot_lanes(p, p, dim_);
    }

    std::vector<double> d2(images.size() * classes);
    for (std::size_t c0 = 0; c0 < classes; c0 += kClassBlock) {
        const std::size_t c1 = std::min(classes, c0 + kClassBlock);
        for (std::size_t i = 0; i < images.size(); ++i) {
            const float* f = feats.data() + i * dim_;
            double* row = d2.data() + i * classes;
            for (std::size_t c = c0; c < c1; ++c) {
                const double dp = dot_lanes(f, prototypes_.data() + c * dim_, dim_);
                row[c] = std::max(0.0, self_norm[i] + proto_norm[c] - 2.0 * dp);
            }
        }
    }
    return d2;
}

std::vector<ClassProbabilities> PrototypeClassifier::score_batch(std::span<const GlyphImage> images) const {
    const std::size_t classes = descriptor_.class_count();
    const auto d2 = squared_distances(images);
    std::vector<ClassProbabilities> out;
    out.reserve(images.size());
    std::vector<double> logits(classes);
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t c = 0; c < classes; ++c) {
            logits[c] = -params_.temperature * d2[i * classes + c];
        }
        out.push_back(ClassProbabilities::from_probs(softmax(logits)));
    }
    return out;
}

std::vector<Verdict> PrototypeClassifier::score_verdicts(std::span<const GlyphImage> images,
                                                         int target_class) const {
    const std::size_t classes = descriptor_.class_count();
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= classes) {
        throw BackendError(BackendErrorKind::UnknownClass, "target class out of range");
    }
    const auto d2 = squared_distances(images);
    std::vector<Verdict> out;
    out.reserve(images.size());
    std::vector<double> logits(classes);
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t c = 0; c < classes; ++c) {
            logits[c] = -params_.temperature * d2[i * classes + c];
        }
        // Same arithmetic as score_batch so both paths agree bit for bit.
        const auto probs = softmax(logits);
        const auto best = std::max_element(probs.begin(), probs.end());
        out.push_back({probs[static_cast<std::size_t>(target_class)], static_cast<int>(best - probs.begin())});
    }
    return out;
}

std::unique_ptr<PrototypeClassifier> build_prototype_classifier(const Corpus& corpus, const RasterConfig& cfg,
                                                                PrototypeParams params) {
    return std::make_unique<PrototypeClassifier>(corpus, cfg, params);
}

double evaluate_backend_accuracy(const Backend& backend, const Corpus& corpus, const RasterConfig& cfg) {
    if (corpus.empty()) {
        throw BackendError(BackendErrorKind::EmptyCorpus, "accuracy over an empty corpus is undefined");
    }
    std::vector<int> targets;
    targets.reserve(corpus.size());
    for (const auto& g : corpus.glyphs()) {
        const auto id = backend.descriptor().class_id(g.class_label);
        if (!id) {
            throw BackendError(BackendErrorKind::UnknownClass,
                               codepoint_label(g.class_label) + " is outside the backend class space");
        }
        targets.push_back(*id);
    }

    constexpr std::size_t kBatch = 256;
    std::size_t correct = 0;
    std::vector<GlyphImage> batch;
    for (std::size_t start = 0; start < corpus.size(); start += kBatch) {
        const std::size_t end = std::min(corpus.size(), start + kBatch);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) {
            const auto masks = render_stroke_masks(corpus[i], cfg);
            batch.push_back(composite(masks, corpus[i].full_mask(), cfg));
        }
        const auto scored = backend.score_batch(batch);
        for (std::size_t i = start; i < end; ++i) {
            correct += scored[i - start].predicted == targets[i] ? 1 : 0;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(corpus.size());
}

std::vector<ClassProbabilities> CountingBackend::score_batch(std::span<const GlyphImage> images) const {
    calls_ += images.size();
    return inner_.score_batch(images);
}

std::vector<Verdict> CountingBackend::score_verdicts(std::span<const GlyphImage> images, int target_class) const {
    calls_ += images.size();
    return inner_.score_verdicts(images, target_class);
}

} // namespace strokesimp
