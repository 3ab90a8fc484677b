#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "codelabel/dataset.hpp"
#include "codelabel/matrix.hpp"

namespace fixture {

inline codelabel::TimeSeriesInstance instance(const std::string& id, const std::vector<std::vector<double>>& channels,
                                            std::optional<std::size_t> label = std::nullopt) {
    codelabel::TimeSeriesInstance inst;
    inst.id = id;
    inst.label = label;
    inst.values = codelabel::Matrix(channels.size(), channels.empty() ? 0 : channels[0].size());
    for (std::size_t d = 0; d < channels.size(); ++d)
        for (std::size_t t = 0; t < channels[d].size(); ++t) inst.values(d, t) = channels[d][t];
    return inst;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("codelabel_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

}  // namespace fixture
