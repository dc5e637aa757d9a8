#include "vpsynth/value.hpp"

#include <cstdio>

namespace vps {

std::string format_fixed3(double d) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", d);
    std::string s(buf);
    if (s == "-0.000") s = "0.000";
    return s;
}

std::string_view type_name(const Value& v) {
    switch (v.v.index()) {
        case 0: return "int";
        case 1: return "float";
        case 2: return "str";
        case 3: return "bool";
        case 4: return "patch";
        default: return "patch_list";
    }
}

std::string render(const Value& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(x);
            } else if constexpr (std::is_same_v<T, double>) {
                return format_fixed3(x);
            } else if constexpr (std::is_same_v<T, std::string>) {
                return x;
            } else if constexpr (std::is_same_v<T, bool>) {
                return x ? "True" : "False";
            } else if constexpr (std::is_same_v<T, PatchHandle>) {
                return x.grid_box();
            } else {
                std::string out = "[";
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (i) out += "; ";
                    out += x[i].grid_box();
                }
                return out + "]";
            }
        },
        v.v);
}

}  // namespace vps
