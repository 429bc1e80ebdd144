#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gridcosim::orchestrator {

struct RecordEntry {
    std::string channel;
    double t = 0.0;
    nlohmann::json data;

    bool operator==(const RecordEntry&) const = default;
};

/// Every recorded stream of a run plus its manifest. On disk: record.jsonl
/// (one entry per line, in event order) and manifest.json.
struct RunRecord {
    std::vector<RecordEntry> entries;
    nlohmann::json manifest = nlohmann::json::object();

    std::vector<const RecordEntry*> channel(std::string_view name) const;
    std::set<std::string> channels() const;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t v);

std::string entry_to_line(const RecordEntry& e);
RecordEntry entry_from_line(const std::string& line);

void write_record(const RunRecord& r, const std::filesystem::path& dir);
RunRecord read_record(const std::filesystem::path& dir);

/// Keeps only the configured channels (all when the list is empty).
class Recorder {
public:
    explicit Recorder(std::vector<std::string> channels = {});

    void add(std::string channel, double t, nlohmann::json data);
    bool wants(std::string_view channel) const;

    RunRecord& record() noexcept { return record_; }

private:
    std::set<std::string, std::less<>> filter_;
    RunRecord record_;
};

}  // namespace gridcosim::orchestrator
