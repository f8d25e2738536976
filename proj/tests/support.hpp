// Shared fixtures for the unit and acceptance tests.

#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "citegauge/corpus.hpp"

namespace testsupport {

inline std::filesystem::path source_dir() { return CITEGAUGE_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& name) { return source_dir() / "tests" / "fixtures" / name; }
inline std::filesystem::path golden(const std::string& name) { return source_dir() / "tests" / "golden" / name; }

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("citegauge-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

inline citegauge::corpus::DialogueExample make_example(std::string id, std::string query,
                                                       const std::vector<std::string>& passages,
                                                       std::string reference = {},
                                                       citegauge::Language language = citegauge::Language::en) {
    citegauge::corpus::DialogueExample ex;
    ex.id = std::move(id);
    ex.query = std::move(query);
    ex.knowledge = citegauge::corpus::make_knowledge(passages);
    ex.reference = std::move(reference);
    ex.language = language;
    ex.flags = citegauge::corpus::validate_example(ex);
    return ex;
}

}  // namespace testsupport
