#pragma once

// Classifier backends mapping glyph images to class posteriors ("computed
// legibility").

#include "strokesimp/errors.hpp"
#include "strokesimp/ingest.hpp"
#include "strokesimp/raster.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace strokesimp {

struct ClassProbabilities {
    std::vector<double> probs;
    int predicted = 0;
    double predicted_prob = 0.0;

    /// Fills predicted/predicted_prob; ties go to the lowest class id.
    static ClassProbabilities from_probs(std::vector<double> probs);
};

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

enum class BackendKind { Prototype, External };

std::string to_string(BackendKind kind);

class BackendDescriptor {
public:
    BackendDescriptor() = default;
    /// Throws BackendError(ProtocolError) when labels repeat.
    BackendDescriptor(BackendKind kind, std::vector<char32_t> class_labels);

    BackendKind kind() const { return kind_; }
    std::size_t class_count() const { return labels_.size(); }
    const std::vector<char32_t>& class_labels() const { return labels_; }
    char32_t label(int class_id) const { return labels_.at(static_cast<std::size_t>(class_id)); }
    std::optional<int> class_id(char32_t label) const;

private:
    BackendKind kind_ = BackendKind::Prototype;
    std::vector<char32_t> labels_;
    std::unordered_map<char32_t, int> index_;
};

/// What the search needs from one scored image: the posterior of a target
/// class and the argmax.
struct Verdict {
    double legibility = 0.0;
    int predicted = 0;

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// Thread-safe scoring facade. Implementations are stateless per image, so
/// results never depend on how a workload is split into batches.
class Backend {
public:
    virtual ~Backend() = default;

    virtual const BackendDescriptor& descriptor() const = 0;

    /// One probability vector per image, order preserved.
    virtual std::vector<ClassProbabilities> score_batch(std::span<const GlyphImage> images) const = 0;

    /// Posterior of `target_class` plus argmax per image. The default goes
    /// through score_batch; backends may avoid materializing full vectors.
    virtual std::vector<Verdict> score_verdicts(std::span<const GlyphImage> images, int target_class) const;

    /// Expected side length of input images.
    virtual int image_side() const = 0;
};

struct PrototypeParams {
    int feature_side = 16;
    double blur_radius = 1.5;  // Gaussian sigma in pixels
    double temperature = 40.0;

    friend bool operator==(const PrototypeParams&, const PrototypeParams&) = default;
};

/// Nearest-prototype classifier. Each class keeps one template: its full
/// render, Gaussian-blurred, box-downsampled and L2-normalized. Scores are
/// softmax(-temperature * squared distance).
class PrototypeClassifier final : public Backend {
public:
    PrototypeClassifier(const Corpus& corpus, const RasterConfig& cfg, PrototypeParams params);

    const BackendDescriptor& descriptor() const override { return descriptor_; }
    std::vector<ClassProbabilities> score_batch(std::span<const GlyphImage> images) const override;
    std::vector<Verdict> score_verdicts(std::span<const GlyphImage> images, int target_class) const override;
    int image_side() const override { return cfg_.grid; }

    const PrototypeParams& params() const { return params_; }
    /// Feature vector of an image (length feature_side^2, unit norm unless blank).
    std::vector<float> features(const GlyphImage& image) const;
    const float* prototype(int class_id) const {
        return prototypes_.data() + static_cast<std::size_t>(class_id) * dim_;
    }
    std::size_t feature_dim() const { return dim_; }
    /// Squared Euclidean distances from each image to every prototype,
    /// row-major [image][class].
    std::vector<double> squared_distances(std::span<const GlyphImage> images) const;

private:
    void check_image(const GlyphImage& image) const;

    BackendDescriptor descriptor_;
    RasterConfig cfg_;
    PrototypeParams params_;
    std::size_t dim_ = 0;
    std::vector<double> kernel_;
    std::vector<float> prototypes_;  // class-major, padded to dim_
};

/// Throws BackendError(EmptyCorpus).
std::unique_ptr<PrototypeClassifier> build_prototype_classifier(const Corpus& corpus, const RasterConfig& cfg,
                                                                PrototypeParams params = {});

/// Top-1 accuracy over full renders of the corpus. Every corpus class must
/// exist in the backend's class space (BackendError(UnknownClass) otherwise).
double evaluate_backend_accuracy(const Backend& backend, const Corpus& corpus, const RasterConfig& cfg);

/// Decorator counting scored images.
class CountingBackend final : public Backend {
public:
    explicit CountingBackend(const Backend& inner) : inner_(inner) {}

    const BackendDescriptor& descriptor() const override { return inner_.descriptor(); }
    std::vector<ClassProbabilities> score_batch(std::span<const GlyphImage> images) const override;
    std::vector<Verdict> score_verdicts(std::span<const GlyphImage> images, int target_class) const override;
    int image_side() const override { return inner_.image_side(); }

    std::uint64_t calls() const { return calls_.load(); }
    void reset() { calls_ = 0; }

private:
    const Backend& inner_;
    mutable std::atomic<std::uint64_t> calls_{0};
};

} // namespace strokesimp
