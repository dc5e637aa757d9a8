#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vpsynth/scene.hpp"

namespace vps {

/// A region of a visual input. `object_id` links a detection back to the
/// scene object it came from; it is empty for the whole image and for crops,
/// and starts with "fp:" for spurious detections.
struct PatchHandle {
    std::string patch_id;
    std::string scene_ref;
    Box box;
    int image_width = 0;
    int image_height = 0;
    std::string label;
    std::string object_id;

    std::string grid_box() const { return quantize_box(box, image_width, image_height); }
    friend bool operator==(const PatchHandle&, const PatchHandle&) = default;
};

using PatchList = std::vector<PatchHandle>;

struct Value {
    std::variant<std::int64_t, double, std::string, bool, PatchHandle, PatchList> v;

    Value() : v(std::int64_t{0}) {}
    Value(std::int64_t i) : v(i) {}
    Value(int i) : v(std::int64_t{i}) {}
    Value(double d) : v(d) {}
    Value(std::string s) : v(std::move(s)) {}
    Value(const char* s) : v(std::string(s)) {}
    Value(bool b) : v(b) {}
    Value(PatchHandle p) : v(std::move(p)) {}
    Value(PatchList l) : v(std::move(l)) {}

    template <typename T>
    bool is() const noexcept {
        return std::holds_alternative<T>(v);
    }
    template <typename T>
    const T& as() const {
        return std::get<T>(v);
    }

    friend bool operator==(const Value&, const Value&) = default;
};

/// A runtime type mismatch inside a builtin or operator.
class TypeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// "int", "float", "str", "bool", "patch", "patch_list".
std::string_view type_name(const Value& v);

/// Trace/result rendering: decimal ints, floats to 3 places, True/False,
/// patches as their 0-999 grid box, lists as "[b1; b2]".
std::string render(const Value& v);
std::string format_fixed3(double d);

}  // namespace vps
