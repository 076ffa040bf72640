#pragma once

// Classifier backend served by an external process over a JSON Lines
// protocol on its stdin/stdout.
//
//   handshake (child -> us): {"classes": ["U+4E00", "丁", ...]}
//   request   (us -> child): {"id": 7, "w": 64, "h": 64, "pixels": "<base64>"}
//   response  (child -> us): {"id": 7, "probs": [...]}
//                        or: {"id": 7, "top": [[cls, p], ...], "rest_mass": r}
//
// Responses may arrive in any order; they are matched by id.

#include "strokesimp/legibility.hpp"

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace strokesimp {

struct ExternalOptions {
    /// Shell command line, run through /bin/sh -c.
    std::string command;
    /// Inactivity deadline while waiting for the handshake or a response.
    std::chrono::milliseconds timeout{60000};
    /// Number of protocol processes; batches are spread across them.
    int processes = 1;
    int image_side = 64;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Request line (without trailing newline) for one image.
std::string encode_request(std::uint64_t id, const GlyphImage& image);

struct DecodedResponse {
    std::uint64_t id = 0;
    std::vector<double> probs;
};

/// Parses one response line into a dense probability vector of length
/// `class_count`. Sparse responses spread rest_mass uniformly over unlisted
/// classes. Vectors within 1e-3 of unit mass are renormalized; anything else
/// is a ProtocolError.
DecodedResponse decode_response(std::string_view line, std::size_t class_count);

/// Parses the handshake line into class labels.
std::vector<char32_t> decode_handshake(std::string_view line);

/// Owns a child process with piped stdin/stdout. Killed and reaped on
/// destruction.
class Subprocess {
public:
    explicit Subprocess(const std::string& command);
    ~Subprocess();
    Subprocess(const Subprocess&) = delete;
    Subprocess& operator=(const Subprocess&) = delete;

    /// Writes all of `data` while draining child output into the line buffer,
    /// so a chatty child cannot deadlock against a full pipe.
    void write_all(std::string_view data, std::chrono::milliseconds timeout);
    /// Next complete line, or throws Timeout / Failure / NonzeroExit.
    std::string read_line(std::chrono::milliseconds timeout);

    int pid() const { return pid_; }

private:
    bool pump_output(int wait_ms);
    [[noreturn]] void fail_on_eof();
    std::optional<std::string> pop_line();

    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    bool eof_ = false;
    std::string buffer_;
};

class ExternalClassifier final : public Backend {
public:
    /// Launches the processes and reads their handshakes. All processes must
    /// announce the same class list.
    explicit ExternalClassifier(ExternalOptions options);
    ~ExternalClassifier() override;

    const BackendDescriptor& descriptor() const override { return descriptor_; }
    std::vector<ClassProbabilities> score_batch(std::span<const GlyphImage> images) const override;
    int image_side() const override { return options_.image_side; }

private:
    struct Worker;

    Worker& acquire() const;
    void release(Worker& w) const;

    ExternalOptions options_;
    BackendDescriptor descriptor_;
    std::vector<std::unique_ptr<Worker>> workers_;
    mutable std::mutex mutex_;
    mutable std::condition_variable available_;
};

} // namespace strokesimp
