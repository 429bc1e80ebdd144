#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gridcosim/orchestrator/run_record.hpp"
#include "gridcosim/orchestrator/scenario.hpp"

namespace gridcosim::orchestrator {

enum class ExportFormat { Csv, Jsonl, Contour };

ExportFormat parse_format(const std::string& s);

/// csv: <channel>.csv per channel, nested fields flattened to dotted and
/// [i]-indexed columns, numbers printed with %.17g.
/// jsonl: <channel>.jsonl per channel.
/// contour: contour.csv with one (snapshot, t, bus, lat, lon, value) row per
/// bus per sim.truth snapshot; needs the case for bus ids and geography.
std::vector<std::filesystem::path> export_record(const RunRecord& r, const std::filesystem::path& dir,
                                                 ExportFormat format, const powersim::GridCase* grid = nullptr,
                                                 const ContourConfig& contour = {});

/// Flattened view of one entry: "t" then the data fields.
std::map<std::string, std::string> flatten(const RecordEntry& e);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column as doubles; empty cells become NaN.
    std::vector<double> column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
std::vector<RecordEntry> read_jsonl(const std::filesystem::path& path);

/// File-system safe name for a channel ("ems.aligned" stays as is).
std::string channel_file_stem(const std::string& channel);

}  // namespace gridcosim::orchestrator
