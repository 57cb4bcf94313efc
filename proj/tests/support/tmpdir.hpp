#pragma once

#include <filesystem>
#include <string>

namespace odg::testing {

// Self-cleaning scratch directory under the system temp root.
class TmpDir {
public:
    explicit TmpDir(const std::string& tag) {
        path_ = (std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(counter_++)))
                    .string();
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TmpDir() { std::filesystem::remove_all(path_); }
    TmpDir(const TmpDir&) = delete;
    TmpDir& operator=(const TmpDir&) = delete;

    const std::string& path() const { return path_; }

private:
    static inline int counter_ = 0;
    std::string path_;
};

}  // namespace odg::testing
