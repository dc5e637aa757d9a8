#include "vpsynth/prompts.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifndef VPSYNTH_DEFAULT_ASSETS
#define VPSYNTH_DEFAULT_ASSETS "assets"
#endif

namespace vps {

std::filesystem::path assets_dir() {
    if (const char* env = std::getenv("VPSYNTH_ASSETS"); env && *env) return env;
    return VPSYNTH_DEFAULT_ASSETS;
}

std::string read_asset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AssetError("cannot read asset " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

PromptTemplate PromptTemplate::parse(std::string text) {
    PromptTemplate t;
    t.text_ = std::move(text);
    std::size_t pos = 0;
    while ((pos = t.text_.find("{{", pos)) != std::string::npos) {
        const auto end = t.text_.find("}}", pos + 2);
        if (end == std::string::npos) throw std::invalid_argument("unterminated {{ in prompt template");
        std::string name = t.text_.substr(pos + 2, end - pos - 2);
        if (std::find(t.slots_.begin(), t.slots_.end(), name) == t.slots_.end()) t.slots_.push_back(name);
        pos = end + 2;
    }
    return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) { return parse(read_asset(path)); }

std::string PromptTemplate::fill(const std::map<std::string, std::string>& values) const {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto open = text_.find("{{", pos);
        if (open == std::string::npos) {
            out += text_.substr(pos);
            break;
        }
        const auto close = text_.find("}}", open + 2);
        out += text_.substr(pos, open - pos);
        const std::string name = text_.substr(open + 2, close - open - 2);
        auto it = values.find(name);
        if (it == values.end()) throw std::invalid_argument("prompt slot '" + name + "' has no value");
        out += it->second;
        pos = close + 2;
    }
    return out;
}

}  // namespace vps
