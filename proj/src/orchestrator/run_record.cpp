#include "gridcosim/orchestrator/run_record.hpp"

#include <cstdio>
#include <fstream>

namespace gridcosim::orchestrator {

using nlohmann::json;

std::vector<const RecordEntry*> RunRecord::channel(std::string_view name) const
{
    std::vector<const RecordEntry*> out;
    for (const auto& e : entries)
        if (e.channel == name)
            out.push_back(&e);
    return out;
}

std::set<std::string> RunRecord::channels() const
{
    std::set<std::string> out;
    for (const auto& e : entries)
        out.insert(e.channel);
    return out;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string entry_to_line(const RecordEntry& e)
{
    return json{{"channel", e.channel}, {"t", e.t}, {"data", e.data}}.dump();
}

RecordEntry entry_from_line(const std::string& line)
{
    const auto j = json::parse(line);
    return {j.at("channel").get<std::string>(), j.at("t").get<double>(), j.at("data")};
}

void write_record(const RunRecord& r, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::ofstream out(dir / "record.jsonl", std::ios::binary);
    if (!out)
        throw IoError("cannot write " + (dir / "record.jsonl").string());
    for (const auto& e : r.entries)
        out << entry_to_line(e) << '\n';
    std::ofstream man(dir / "manifest.json", std::ios::binary);
    if (!man)
        throw IoError("cannot write " + (dir / "manifest.json").string());
    man << r.manifest.dump(2) << '\n';
    if (!out || !man)
        throw IoError("write failed in " + dir.string());
}

RunRecord read_record(const std::filesystem::path& dir)
{
    RunRecord r;
    std::ifstream in(dir / "record.jsonl", std::ios::binary);
    if (!in)
        throw IoError("cannot read " + (dir / "record.jsonl").string());
    std::string line;
    while (std::getline(in, line))
        if (!line.empty())
            r.entries.push_back(entry_from_line(line));
    std::ifstream man(dir / "manifest.json", std::ios::binary);
    if (man)
        man >> r.manifest;
    return r;
}

Recorder::Recorder(std::vector<std::string> channels) : filter_(channels.begin(), channels.end()) {}

bool Recorder::wants(std::string_view channel) const
{
    return filter_.empty() || filter_.contains(channel);
}

void Recorder::add(std::string channel, double t, json data)
{
    if (wants(channel))
        record_.entries.push_back({std::move(channel), t, std::move(data)});
}

}  // namespace gridcosim::orchestrator
