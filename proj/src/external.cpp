#include "strokesimp/external.hpp"

#include <json.hpp>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <mutex>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>
#include <unordered_map>

namespace strokesimp {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Wire encoding

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    namespace it = boost::archive::iterators;
    using Encoder = it::base64_from_binary<it::transform_width<const std::uint8_t*, 6, 8>>;
    std::string out(Encoder(bytes.data()), Encoder(bytes.data() + bytes.size()));
    out.append((3 - bytes.size() % 3) % 3, '=');
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    namespace it = boost::archive::iterators;
    using Decoder = it::transform_width<it::binary_from_base64<const char*>, 8, 6>;
    while (!text.empty() && text.back() == '=') {
        text.remove_suffix(1);
    }
    try {
        std::vector<std::uint8_t> out(Decoder(text.data()), Decoder(text.data() + text.size()));
        out.resize(text.size() * 6 / 8);
        return out;
    } catch (const std::exception& e) {
        throw BackendError(BackendErrorKind::ProtocolError, std::string("invalid base64: ") + e.what());
    }
}

std::string encode_request(std::uint64_t id, const GlyphImage& image) {
    json j;
    j["id"] = id;
    j["w"] = image.grid;
    j["h"] = image.grid;
    j["pixels"] = base64_encode(image.pixels);
    return j.dump();
}

namespace {

json parse_line(std::string_view line) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw BackendError(BackendErrorKind::ProtocolError,
                           std::string("bad JSON from classifier: ") + e.what());
    }
}

double require_number(const json& v, const char* what) {
    if (!v.is_number()) {
        throw BackendError(BackendErrorKind::ProtocolError, std::string(what) + " must be a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d) || d < 0.0) {
        throw BackendError(BackendErrorKind::ProtocolError, std::string(what) + " must be finite and >= 0");
    }
    return d;
}

} // namespace

DecodedResponse decode_response(std::string_view line, std::size_t class_count) {
    const json j = parse_line(line);
    if (!j.is_object() || !j.contains("id") || !j["id"].is_number_unsigned()) {
        throw BackendError(BackendErrorKind::ProtocolError, "response lacks an unsigned integer id");
    }
    if (j.contains("error")) {
        throw BackendError(BackendErrorKind::ProtocolError, "classifier reported: " + j["error"].dump());
    }
    DecodedResponse out;
    out.id = j["id"].get<std::uint64_t>();

    if (j.contains("probs")) {
        const auto& arr = j["probs"];
        if (!arr.is_array() || arr.size() != class_count) {
            throw BackendError(BackendErrorKind::ProtocolError,
                               "probs has length " + std::to_string(arr.is_array() ? arr.size() : 0) +
                                   ", expected " + std::to_string(class_count));
        }
        out.probs.reserve(class_count);
        for (const auto& v : arr) {
            out.probs.push_back(require_number(v, "probability"));
        }
    } else if (j.contains("top")) {
        const auto& top = j["top"];
        if (!top.is_array()) {
            throw BackendError(BackendErrorKind::ProtocolError, "top must be an array");
        }
        const double rest = j.contains("rest_mass") ? require_number(j["rest_mass"], "rest_mass") : 0.0;
        out.probs.assign(class_count, -1.0);
        std::size_t listed = 0;
        for (const auto& entry : top) {
            if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_unsigned()) {
                throw BackendError(BackendErrorKind::ProtocolError, "top entries must be [class_id, prob]");
            }
            const auto cls = entry[0].get<std::uint64_t>();
            if (cls >= class_count || out.probs[cls] >= 0.0) {
                throw BackendError(BackendErrorKind::ProtocolError, "top entry class id invalid or repeated");
            }
            out.probs[cls] = require_number(entry[1], "probability");
            ++listed;
        }
        const std::size_t unlisted = class_count - listed;
        if (unlisted == 0 && rest > 1e-3) {
            throw BackendError(BackendErrorKind::ProtocolError, "rest_mass given but every class is listed");
        }
        const double share = unlisted ? rest / static_cast<double>(unlisted) : 0.0;
        for (auto& p : out.probs) {
            if (p < 0.0) {
                p = share;
            }
        }
    } else {
        throw BackendError(BackendErrorKind::ProtocolError, "response has neither probs nor top");
    }

    double sum = 0.0;
    for (const double p : out.probs) {
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-3) {
        throw BackendError(BackendErrorKind::ProtocolError,
                           "probabilities sum to " + std::to_string(sum) + ", not 1");
    }
    for (auto& p : out.probs) {
        p /= sum;
    }
    return out;
}

std::vector<char32_t> decode_handshake(std::string_view line) {
    const json j = parse_line(line);
    if (!j.is_object() || !j.contains("classes") || !j["classes"].is_array() || j["classes"].empty()) {
        throw BackendError(BackendErrorKind::ProtocolError, "handshake must be {\"classes\": [...]}");
    }
    std::vector<char32_t> labels;
    labels.reserve(j["classes"].size());
    for (const auto& v : j["classes"]) {
        std::optional<char32_t> cp;
        if (v.is_string()) {
            cp = parse_codepoint(v.get<std::string>());
        } else if (v.is_number_unsigned()) {
            const auto n = v.get<std::uint64_t>();
            if (n <= 0x10FFFF && is_unicode_scalar(static_cast<char32_t>(n))) {
                cp = static_cast<char32_t>(n);
            }
        }
        if (!cp) {
            throw BackendError(BackendErrorKind::ProtocolError, "handshake class " + v.dump() + " is not a codepoint");
        }
        labels.push_back(*cp);
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Subprocess

namespace {

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

void set_nonblocking(int fd) {
    const int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

int timeout_ms(std::chrono::milliseconds t) {
    return static_cast<int>(std::min<std::chrono::milliseconds::rep>(t.count(), 1 << 30));
}

} // namespace

Subprocess::Subprocess(const std::string& command) {
    ignore_sigpipe();
    int in_pipe[2];
    int out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0) {
        throw BackendError(BackendErrorKind::Failure, std::string("pipe: ") + std::strerror(errno));
    }
    if (pipe2(out_pipe, O_CLOEXEC) != 0) {
        close(in_pipe[0]);
        close(in_pipe[1]);
        throw BackendError(BackendErrorKind::Failure, std::string("pipe: ") + std::strerror(errno));
    }
    pid_ = fork();
    if (pid_ < 0) {
        throw BackendError(BackendErrorKind::Failure, std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
        // Own process group, so the shell and whatever it starts die together.
        setpgid(0, 0);
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid_, pid_);
    close(in_pipe[0]);
    close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    set_nonblocking(to_child_);
    set_nonblocking(from_child_);
}

Subprocess::~Subprocess() {
    if (to_child_ >= 0) {
        close(to_child_);
    }
    if (from_child_ >= 0) {
        close(from_child_);
    }
    if (pid_ > 0) {
        for (int i = 0; i < 20; ++i) {
            siginfo_t info{};
            if (waitid(P_PID, static_cast<id_t>(pid_), &info, WEXITED | WNOHANG | WNOWAIT) == 0 && info.si_pid == pid_) {
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        // The leader is not reaped yet, so the group id cannot have been reused.
        kill(-pid_, SIGKILL);
        kill(pid_, SIGKILL);
        int status = 0;
        waitpid(pid_, &status, 0);
    }
}

bool Subprocess::pump_output(int wait_ms) {
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = poll(&pfd, 1, wait_ms);
    if (ready < 0) {
        if (errno == EINTR) {
            return true;
        }
        throw BackendError(BackendErrorKind::Failure, std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) {
        return false;
    }
    char buf[65536];
    const ssize_t n = read(from_child_, buf, sizeof(buf));
    if (n > 0) {
        buffer_.append(buf, static_cast<std::size_t>(n));
    } else if (n == 0) {
        eof_ = true;
    } else if (errno != EAGAIN && errno != EINTR) {
        throw BackendError(BackendErrorKind::Failure, std::string("read: ") + std::strerror(errno));
    }
    return true;
}

std::optional<std::string> Subprocess::pop_line() {
    const auto nl = buffer_.find('\n');
    if (nl == std::string::npos) {
        return std::nullopt;
    }
    std::string line = buffer_.substr(0, nl);
    buffer_.erase(0, nl + 1);
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    return line;
}

void Subprocess::fail_on_eof() {
    int status = 0;
    for (int i = 0; i < 100; ++i) {
        const pid_t r = waitpid(pid_, &status, WNOHANG);
        if (r == pid_) {
            pid_ = -1;
            if (WIFEXITED(status) && WEXITSTATUS(status) != 0) {
                throw BackendError(BackendErrorKind::NonzeroExit,
                                   "classifier exited with status " + std::to_string(WEXITSTATUS(status)));
            }
            if (WIFSIGNALED(status)) {
                throw BackendError(BackendErrorKind::NonzeroExit,
                                   "classifier killed by signal " + std::to_string(WTERMSIG(status)));
            }
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    throw BackendError(BackendErrorKind::Failure, "classifier closed its output stream");
}

std::string Subprocess::read_line(std::chrono::milliseconds timeout) {
    for (;;) {
        if (auto line = pop_line()) {
            return *line;
        }
        if (eof_) {
            fail_on_eof();
        }
        if (!pump_output(timeout_ms(timeout))) {
            throw BackendError(BackendErrorKind::Timeout,
                               "classifier did not answer within " + std::to_string(timeout.count()) + " ms");
        }
    }
}

void Subprocess::write_all(std::string_view data, std::chrono::milliseconds timeout) {
    std::size_t off = 0;
    while (off < data.size()) {
        pollfd pfds[2] = {{to_child_, POLLOUT, 0}, {from_child_, POLLIN, 0}};
        const int ready = poll(pfds, eof_ ? 1 : 2, timeout_ms(timeout));
        if (ready < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw BackendError(BackendErrorKind::Failure, std::string("poll: ") + std::strerror(errno));
        }
        if (ready == 0) {
            throw BackendError(BackendErrorKind::Timeout, "classifier stopped reading its input");
        }
        if (!eof_ && (pfds[1].revents & (POLLIN | POLLHUP))) {
            pump_output(0);
        }
        if (pfds[0].revents & (POLLERR | POLLHUP)) {
            fail_on_eof();
        }
        if (pfds[0].revents & POLLOUT) {
            const ssize_t n = write(to_child_, data.data() + off, data.size() - off);
            if (n > 0) {
                off += static_cast<std::size_t>(n);
            } else if (n < 0 && errno == EPIPE) {
                fail_on_eof();
            } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
                throw BackendError(BackendErrorKind::Failure, std::string("write: ") + std::strerror(errno));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// ExternalClassifier

struct ExternalClassifier::Worker {
    explicit Worker(const std::string& command) : proc(command) {}

    Subprocess proc;
    std::uint64_t next_id = 0;
    bool busy = false;
    bool broken = false;
};

ExternalClassifier::ExternalClassifier(ExternalOptions options) : options_(std::move(options)) {
    if (options_.command.empty()) {
        throw BackendError(BackendErrorKind::Failure, "empty external classifier command");
    }
    const int n = std::max(1, options_.processes);
    std::vector<char32_t> labels;
    for (int i = 0; i < n; ++i) {
        auto w = std::make_unique<Worker>(options_.command);
        auto announced = decode_handshake(w->proc.read_line(options_.timeout));
        if (i == 0) {
            labels = std::move(announced);
        } else if (announced != labels) {
            throw BackendError(BackendErrorKind::ProtocolError, "classifier processes disagree on class list");
        }
        workers_.push_back(std::move(w));
    }
    descriptor_ = BackendDescriptor(BackendKind::External, std::move(labels));
}

ExternalClassifier::~ExternalClassifier() = default;

ExternalClassifier::Worker& ExternalClassifier::acquire() const {
    std::unique_lock lock(mutex_);
    for (;;) {
        bool any_alive = false;
        for (const auto& w : workers_) {
            if (w->broken) {
                continue;
            }
            any_alive = true;
            if (!w->busy) {
                w->busy = true;
                return *w;
            }
        }
        if (!any_alive) {
            throw BackendError(BackendErrorKind::Failure, "no usable classifier process left");
        }
        available_.wait(lock);
    }
}

void ExternalClassifier::release(Worker& w) const {
    {
        std::lock_guard lock(mutex_);
        w.busy = false;
    }
    available_.notify_all();
}

std::vector<ClassProbabilities> ExternalClassifier::score_batch(std::span<const GlyphImage> images) const {
    for (const auto& img : images) {
        if (img.grid != options_.image_side ||
            img.pixels.size() != static_cast<std::size_t>(img.grid) * img.grid) {
            throw BackendError(BackendErrorKind::DimensionMismatch,
                               "external classifier expects " + std::to_string(options_.image_side) + "px images");
        }
    }
    Worker& w = acquire();
    try {
        const std::uint64_t first = w.next_id;
        w.next_id += images.size();
        std::string payload;
        for (std::size_t i = 0; i < images.size(); ++i) {
            // The wire format is always ink-high (255 = ink).
            GlyphImage wire = images[i];
            for (std::size_t p = 0; p < wire.pixels.size(); ++p) {
                wire.pixels[p] = images[i].ink(p);
            }
            payload += encode_request(first + i, wire);
            payload += '\n';
        }
        w.proc.write_all(payload, options_.timeout);

        std::vector<std::optional<std::vector<double>>> got(images.size());
        std::size_t remaining = images.size();
        while (remaining > 0) {
            auto resp = decode_response(w.proc.read_line(options_.timeout), descriptor_.class_count());
            if (resp.id < first || resp.id >= first + images.size()) {
                throw BackendError(BackendErrorKind::ProtocolError, "response for unknown id " + std::to_string(resp.id));
            }
            auto& slot = got[resp.id - first];
            if (slot) {
                throw BackendError(BackendErrorKind::ProtocolError, "duplicate response for id " + std::to_string(resp.id));
            }
            slot = std::move(resp.probs);
            --remaining;
        }
        release(w);

        std::vector<ClassProbabilities> out;
        out.reserve(images.size());
        for (auto& g : got) {
            out.push_back(ClassProbabilities::from_probs(std::move(*g)));
        }
        return out;
    } catch (...) {
        {
            std::lock_guard lock(mutex_);
            w.broken = true;
            w.busy = false;
        }
        available_.notify_all();
        throw;
    }
}

} // namespace strokesimp
