#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "vpsynth/prompts.hpp"
#include "vpsynth/scene.hpp"
#include "vpsynth/tools.hpp"

namespace vps::test {

inline std::shared_ptr<const Vocabulary> vocab() {
    static const auto v = std::make_shared<const Vocabulary>(Vocabulary::load(assets_dir() / "vocab_v1.txt"));
    return v;
}

inline std::shared_ptr<const KnowledgeTable> knowledge() {
    static const auto k =
        std::make_shared<const KnowledgeTable>(KnowledgeTable::load(assets_dir() / "knowledge_v1.tsv"));
    return k;
}

inline SceneObject object(std::string id, std::string category, Box box, std::vector<std::string> attrs = {},
                          double depth = 0.5) {
    std::sort(attrs.begin(), attrs.end());
    return SceneObject{std::move(id), std::move(category), box, std::move(attrs), depth};
}

inline SceneGraph scene(std::vector<SceneObject> objects, int width = 640, int height = 480,
                        std::string id = "fixture") {
    SceneGraph s;
    s.scene_id = std::move(id);
    s.width = width;
    s.height = height;
    s.objects = std::move(objects);
    return s;
}

inline std::filesystem::path golden(const std::string& name) {
    return std::filesystem::path(VPSYNTH_FIXTURES) / "golden" / name;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

/// Compares `actual` with a frozen fixture. With VPSYNTH_FREEZE_GOLDEN=1 a
/// missing fixture is written instead; an existing one is never overwritten.
inline std::string check_golden(const std::string& name, const std::string& actual) {
    const auto path = golden(name);
    if (!std::filesystem::exists(path)) {
        const char* freeze = std::getenv("VPSYNTH_FREEZE_GOLDEN");
        if (freeze && std::string(freeze) == "1") {
            std::filesystem::create_directories(path.parent_path());
            std::ofstream(path, std::ios::binary) << actual;
            return actual;
        }
        return "<missing golden fixture " + name + ">";
    }
    return slurp(path);
}

}  // namespace vps::test
