#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vps {

/// The assets directory: $VPSYNTH_ASSETS if set, else the build-time default.
std::filesystem::path assets_dir();

/// Thrown for a missing or unreadable asset file.
class AssetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string read_asset(const std::filesystem::path& path);

/// Text with {{slot}} placeholders.
class PromptTemplate {
public:
    static PromptTemplate parse(std::string text);
    static PromptTemplate load(const std::filesystem::path& path);

    const std::vector<std::string>& slots() const noexcept { return slots_; }
    /// Throws std::invalid_argument if a slot has no value.
    std::string fill(const std::map<std::string, std::string>& values) const;

private:
    std::string text_;
    std::vector<std::string> slots_;
};

}  // namespace vps
