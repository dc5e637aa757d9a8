#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vpsynth/cot.hpp"
#include "vpsynth/filter.hpp"
#include "vpsynth/scene.hpp"

namespace vps {

inline constexpr std::string_view kPipelineVersion = "vpsynth-jsonl/1";
inline constexpr std::string_view kFreeformInstruction = "Answer with a single word or phrase";
inline constexpr std::string_view kMultipleChoiceInstruction =
    "Answer with the option letter from the given choices directly";
inline constexpr std::string_view kRationaleSuffix = "Explain the rationale to answer the question";

std::string_view task_instruction(TaskType task);

enum class Objective { Label, Rationale };

std::string_view to_string(Objective o);
std::optional<Objective> objective_from_string(std::string_view s);

struct RecordMeta {
    std::optional<std::string> program_hash;  // 16 hex digits
    std::size_t trace_len = 0;
    std::string filter_status;
    std::string pipeline_version{kPipelineVersion};
    std::uint64_t global_seed = 0;
    friend bool operator==(const RecordMeta&, const RecordMeta&) = default;
};

struct TrainingRecord {
    std::string id;
    std::string image_ref;
    std::string query;
    TaskType task = TaskType::VqaFreeform;
    std::string instruction;
    std::string target;
    Objective objective = Objective::Label;
    RecordMeta meta;
    /// Fields not in the schema, kept by lenient reads and written back out.
    ojson extra = ojson::object();

    friend bool operator==(const TrainingRecord&, const TrainingRecord&) = default;
};

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two records (label, rationale) for SelectedProgram/UnlabeledTop, one label
/// record for LabelOnly, none for GenerationFailed. Throws DatasetError when a
/// required rationale is missing.
std::vector<TrainingRecord> emit_records(const Sample& sample, const FilterOutcome& outcome,
                                         const std::optional<Rationale>& rationale, std::uint64_t global_seed);

ojson to_json(const TrainingRecord& r);
/// Strict mode rejects unknown fields; lenient mode keeps them in `extra`.
TrainingRecord record_from_json(const ojson& j, bool strict = true);

enum class ReadMode { Strict, Lenient };

void write_jsonl(const std::vector<TrainingRecord>& records, const std::filesystem::path& path);
std::string to_jsonl(const std::vector<TrainingRecord>& records);
/// Throws DatasetError naming the 1-based line of the first bad record.
std::vector<TrainingRecord> read_jsonl(const std::filesystem::path& path, ReadMode mode = ReadMode::Strict);
std::vector<TrainingRecord> parse_jsonl(std::string_view text, ReadMode mode = ReadMode::Strict);

}  // namespace vps
