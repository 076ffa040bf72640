// Test double for the external classifier protocol. Misbehaves on request.

#include "strokesimp/external.hpp"
#include "strokesimp/ingest.hpp"
#include "strokesimp/legibility.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <poll.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

using json = nlohmann::json;
using namespace strokesimp;

namespace {

std::string pending;

// Next line from stdin; nullopt on EOF. With wait_ms >= 0, also nullopt when
// nothing arrives in time.
std::optional<std::string> next_line(int wait_ms = -1) {
    for (;;) {
        const auto nl = pending.find('\n');
        if (nl != std::string::npos) {
            std::string line = pending.substr(0, nl);
            pending.erase(0, nl + 1);
            return line;
        }
        if (wait_ms >= 0) {
            pollfd p{0, POLLIN, 0};
            if (::poll(&p, 1, wait_ms) <= 0) {
                return std::nullopt;
            }
        }
        char buf[65536];
        const ssize_t n = ::read(0, buf, sizeof(buf));
        if (n <= 0) {
            return std::nullopt;
        }
        pending.append(buf, static_cast<std::size_t>(n));
    }
}

void emit(const std::string& line) {
    std::fwrite(line.data(), 1, line.size(), stdout);
    std::fputc('\n', stdout);
    std::fflush(stdout);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"protocol stub"};
    std::string mode = "uniform";
    std::string corpus_path;
    int class_count = 3;
    int sleep_ms = 60000;
    app.add_option("--mode", mode);
    app.add_option("--corpus", corpus_path, "Serve a prototype classifier over this glyph directory");
    app.add_option("--classes", class_count);
    app.add_option("--sleep-ms", sleep_ms);
    CLI11_PARSE(app, argc, argv);

    std::unique_ptr<PrototypeClassifier> proto;
    std::vector<char32_t> labels;
    if (!corpus_path.empty()) {
        Corpus corpus(load_glyphs(corpus_path).glyphs);
        proto = build_prototype_classifier(corpus, RasterConfig{});
        labels = proto->descriptor().class_labels();
    } else {
        for (int i = 0; i < class_count; ++i) {
            labels.push_back(0xE000 + static_cast<char32_t>(i));
        }
    }
    const std::size_t C = labels.size();

    if (mode == "no-handshake") {
        return 0;
    }
    if (mode == "bad-handshake") {
        emit("{\"labels\": []}");
        return 0;
    }
    json hs;
    hs["classes"] = json::array();
    for (const char32_t c : labels) {
        hs["classes"].push_back(codepoint_label(c));
    }
    emit(hs.dump());
    if (mode == "sleep") {
        std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms));
        return 0;
    }

    auto respond = [&](const json& req) -> std::string {
        const auto id = req.at("id").get<std::uint64_t>();
        const auto w = req.at("w").get<int>();
        const auto h = req.at("h").get<int>();
        const auto bytes = base64_decode(req.at("pixels").get<std::string>());
        json out;
        out["id"] = id;
        if (mode == "unknown-id") {
            out["id"] = id + 1000;
        }
        std::vector<double> probs(C, 1.0 / static_cast<double>(C));
        if (proto) {
            GlyphImage img{w, 0, Polarity::InkHigh, bytes};
            probs = proto->score_batch(std::span<const GlyphImage>(&img, 1))[0].probs;
        } else if (mode == "ink") {
            double ink = 0.0;
            for (const auto b : bytes) {
                ink += b;
            }
            ink /= 255.0 * static_cast<double>(w) * static_cast<double>(h);
            probs.assign(C, 0.0);
            probs[0] = ink;
            probs[1] = 1.0 - ink;
        }
        if (mode == "wrong-length") {
            probs.push_back(0.0);
        }
        if (mode == "bad-sum") {
            for (auto& p : probs) {
                p *= 0.5;
            }
        }
        if (mode == "sparse") {
            // Report the two most likely classes and lump the rest.
            std::vector<std::size_t> order(C);
            for (std::size_t i = 0; i < C; ++i) {
                order[i] = i;
            }
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
            json top = json::array();
            double listed = 0.0;
            for (std::size_t i = 0; i < std::min<std::size_t>(2, C); ++i) {
                top.push_back({order[i], probs[order[i]]});
                listed += probs[order[i]];
            }
            out["top"] = top;
            out["rest_mass"] = 1.0 - listed;
        } else {
            out["probs"] = probs;
        }
        return out.dump();
    };

    std::size_t served = 0;
    for (;;) {
        auto line = next_line();
        if (!line) {
            return 0;
        }
        if (line->empty()) {
            continue;
        }
        if (mode == "crash") {
            return 3;
        }
        if (mode == "badjson") {
            emit("this is not json");
            continue;
        }
        if (mode == "crash-later" && ++served > 4) {
            return 5;
        }
        if (mode == "reverse") {
            // Collect whatever arrives together, then answer last-first.
            std::vector<std::string> batch{*line};
            while (auto more = next_line(30)) {
                batch.push_back(*more);
            }
            for (auto it = batch.rbegin(); it != batch.rend(); ++it) {
                emit(respond(json::parse(*it)));
            }
            continue;
        }
        emit(respond(json::parse(*line)));
    }
}
