#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vpsynth/tools.hpp"
#include "vpsynth/value.hpp"
#include "vpsynth/vpl.hpp"

namespace vps {

struct TraceReceiver {
    std::string patch_id;
    std::string box;  // 0-999 grid
    std::string label;
    friend bool operator==(const TraceReceiver&, const TraceReceiver&) = default;
};

struct TraceEntry {
    std::size_t step = 0;
    std::string tool;
    std::optional<TraceReceiver> receiver;
    std::vector<std::string> args;
    std::string result;
    /// Set when this attempt raised a tool error; `result` is then empty.
    std::optional<std::string> error;
    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

enum class FailureKind { TypeError, IndexOutOfBounds, DivisionByZero, BudgetExhausted, ToolError };

std::string_view to_string(FailureKind k);
std::optional<FailureKind> failure_kind_from_string(std::string_view s);

struct Outcome {
    bool returned = false;
    std::string value;  // Returned
    FailureKind error_kind = FailureKind::TypeError;
    std::string message;
    std::size_t step = 0;
    friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct ExecutionTrace {
    std::vector<TraceEntry> entries;
    Outcome outcome;
    std::size_t step_budget_used = 0;

    ojson to_json() const;
    static ExecutionTrace from_json(const ojson& j);
    /// One line per entry then the outcome, for `exec` and debug dumps.
    std::string dump() const;
    friend bool operator==(const ExecutionTrace&, const ExecutionTrace&) = default;
};

struct VisualInput {
    std::string scene_ref;
    int width = 0;
    int height = 0;

    static VisualInput of(const SceneGraph& scene) { return {scene.scene_id, scene.width, scene.height}; }
    PatchHandle image_patch() const;
};

struct StepBudget {
    std::size_t max_steps = 10000;
};

struct ExecResult {
    std::optional<std::string> result;
    ExecutionTrace trace;
};

/// Never throws for program-level faults; they end up in trace.outcome.
ExecResult execute(const vpl::Program& program, const VisualInput& input, const ToolRegistry& tools,
                   StepBudget budget = {});

}  // namespace vps
