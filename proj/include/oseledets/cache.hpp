#pragma once
// Content-addressed result cache. The key hashes everything that determines a
// stage result (system description, base point, horizon, stage name) plus the
// tool version, so entries written by another version are simply never looked
// up. Files carry a trailing checksum line; a corrupt entry is deleted and the
// caller recomputes.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <thread>

#include "oseledets/io.hpp"

namespace oseledets {

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// system_desc must pin the system exactly (name, parameters, seed); the base
// point is rendered in hex float so distinct bit patterns never collide.
inline std::string cache_key(const std::string& system_desc, const Point& x, int horizon,
                             const std::string& stage) {
    std::string material = std::string(kToolVersion) + "|" + system_desc + "|x:";
    char buf[40];
    for (int i = 0; i < x.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%a,", x(i));
        material += buf;
    }
    material += "|h:" + std::to_string(horizon) + "|" + stage;
    return hex64(fnv1a64(material));
}

inline std::filesystem::path cache_dir() {
    if (const char* env = std::getenv("OSELEDETS_CACHE_DIR"); env && *env)
        return std::filesystem::path(env);
    return std::filesystem::path(".oseledets_cache");
}

inline std::filesystem::path cache_entry_path(const std::filesystem::path& dir,
                                              const std::string& key) {
    return dir / (key + ".entry");
}

inline std::optional<std::string> cache_get(const std::filesystem::path& dir,
                                            const std::string& key) {
    namespace fs = std::filesystem;
    const fs::path file = cache_entry_path(dir, key);
    std::error_code ec;
    if (!fs::exists(file, ec)) return std::nullopt;
    std::string text;
    try {
        text = read_text(file);
    } catch (const Error&) {
        return std::nullopt;
    }
    // Payload is everything up to the final "checksum <hex>" line.
    const auto nl = text.rfind('\n', text.empty() ? std::string::npos : text.size() - 2);
    const std::string last = nl == std::string::npos ? text : text.substr(nl + 1);
    const std::string payload = nl == std::string::npos ? std::string() : text.substr(0, nl + 1);
    const std::string expect = "checksum " + hex64(fnv1a64(payload)) + "\n";
    if (last != expect) {
        fs::remove(file, ec);  // corrupt or foreign: drop it and recompute
        return std::nullopt;
    }
    return payload;
}

inline void cache_put(const std::filesystem::path& dir, const std::string& key,
                      const std::string& payload) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    const std::string body = payload + "checksum " + hex64(fnv1a64(payload)) + "\n";
    // Unique temp name per writer, atomic rename: concurrent writers of the
    // same key are harmless because they write identical content.
    const fs::path file = cache_entry_path(dir, key);
    const fs::path tmp = file.string() + "." + std::to_string(
        static_cast<unsigned long long>(fnv1a64(payload)) ^
        static_cast<unsigned long long>(
            std::hash<std::thread::id>{}(std::this_thread::get_id()))) + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) return;  // cache is best-effort; losing a write only costs time
        out << body;
        if (!out.flush()) {
            out.close();
            fs::remove(tmp, ec);
            return;
        }
    }
    fs::rename(tmp, file, ec);
    if (ec) fs::remove(tmp, ec);
}

}  // namespace oseledets
