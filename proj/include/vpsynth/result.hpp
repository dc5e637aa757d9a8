#pragma once

#include <stdexcept>
#include <utility>
#include <variant>

namespace vps {

/// Value-or-error for outcomes that are expected in normal operation
/// (malformed LLM code, scenes that cannot host a query kind). Hard failures
/// are exceptions.
template <typename T, typename E>
class Result {
public:
    Result(T value) : data_(std::in_place_index<0>, std::move(value)) {}
    Result(E error) : data_(std::in_place_index<1>, std::move(error)) {}

    bool ok() const noexcept { return data_.index() == 0; }
    explicit operator bool() const noexcept { return ok(); }

    const T& value() const& {
        if (!ok()) throw std::logic_error("Result::value() on error");
        return std::get<0>(data_);
    }
    T&& value() && {
        if (!ok()) throw std::logic_error("Result::value() on error");
        return std::get<0>(std::move(data_));
    }
    const E& error() const& {
        if (ok()) throw std::logic_error("Result::error() on value");
        return std::get<1>(data_);
    }

    const T* operator->() const { return &value(); }
    const T& operator*() const& { return value(); }

private:
    std::variant<T, E> data_;
};

}  // namespace vps
