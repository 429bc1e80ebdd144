#include "gridcosim/orchestrator/export.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace gridcosim::orchestrator {

using nlohmann::json;

namespace {

using Fields = std::vector<std::pair<std::string, std::string>>;

std::string number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void flatten_into(const json& j, const std::string& prefix, Fields& out)
{
    switch (j.type()) {
    case json::value_t::object:
        for (const auto& [k, v] : j.items())
            flatten_into(v, prefix.empty() ? k : prefix + "." + k, out);
        break;
    case json::value_t::array:
        for (std::size_t i = 0; i < j.size(); ++i)
            flatten_into(j[i], prefix + "[" + std::to_string(i) + "]", out);
        break;
    case json::value_t::number_float:
        out.emplace_back(prefix, number(j.get<double>()));
        break;
    case json::value_t::number_integer:
        out.emplace_back(prefix, std::to_string(j.get<std::int64_t>()));
        break;
    case json::value_t::number_unsigned:
        out.emplace_back(prefix, std::to_string(j.get<std::uint64_t>()));
        break;
    case json::value_t::boolean:
        out.emplace_back(prefix, j.get<bool>() ? "true" : "false");
        break;
    case json::value_t::string:
        out.emplace_back(prefix, j.get<std::string>());
        break;
    default:
        out.emplace_back(prefix, "");
        break;
    }
}

Fields flatten_ordered(const RecordEntry& e)
{
    Fields f{{"t", number(e.t)}};
    if (e.data.is_object() || e.data.is_array())
        flatten_into(e.data, "", f);
    else
        flatten_into(e.data, "value", f);
    return f;
}

std::string csv_cell(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s)
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + p.string());
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace

ExportFormat parse_format(const std::string& s)
{
    if (s == "csv")
        return ExportFormat::Csv;
    if (s == "jsonl")
        return ExportFormat::Jsonl;
    if (s == "contour")
        return ExportFormat::Contour;
    throw std::invalid_argument("format must be csv, jsonl or contour, got '" + s + "'");
}

std::string channel_file_stem(const std::string& channel)
{
    std::string s = channel;
    for (auto& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-'))
            c = '_';
    return s;
}

std::map<std::string, std::string> flatten(const RecordEntry& e)
{
    const auto f = flatten_ordered(e);
    return {f.begin(), f.end()};
}

std::vector<std::filesystem::path> export_record(const RunRecord& r, const std::filesystem::path& dir,
                                                 ExportFormat format, const powersim::GridCase* grid,
                                                 const ContourConfig& contour)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;

    if (format == ExportFormat::Contour) {
        if (!grid)
            throw std::invalid_argument("contour export needs the case");
        const auto p = dir / "contour.csv";
        auto out = open_out(p);
        out << "snapshot,t,bus,lat,lon,value\n";
        std::size_t row = 0, snapshot = 0;
        for (const auto* e : r.channel("sim.truth")) {
            if (row++ % static_cast<std::size_t>(std::max(contour.decimation, 1)) != 0)
                continue;
            const auto& values = e->data.at(contour.variable);
            for (std::size_t b = 0; b < grid->buses.size(); ++b) {
                const auto& bus = grid->buses[b];
                out << snapshot << ',' << number(e->t) << ',' << bus.id << ',';
                if (bus.geo)
                    out << number(bus.geo->lat) << ',' << number(bus.geo->lon);
                else
                    out << ',';
                out << ',' << number(values.at(b).get<double>()) << '\n';
            }
            ++snapshot;
        }
        if (!out)
            throw IoError("write failed: " + p.string());
        written.push_back(p);
        return written;
    }

    for (const auto& ch : r.channels()) {
        const auto entries = r.channel(ch);
        if (format == ExportFormat::Jsonl) {
            const auto p = dir / (channel_file_stem(ch) + ".jsonl");
            auto out = open_out(p);
            for (const auto* e : entries)
                out << entry_to_line(*e) << '\n';
            if (!out)
                throw IoError("write failed: " + p.string());
            written.push_back(p);
            continue;
        }
        std::vector<Fields> rows;
        std::vector<std::string> header;
        std::set<std::string> seen;
        for (const auto* e : entries) {
            rows.push_back(flatten_ordered(*e));
            for (const auto& [k, v] : rows.back())
                if (seen.insert(k).second)
                    header.push_back(k);
        }
        const auto p = dir / (channel_file_stem(ch) + ".csv");
        auto out = open_out(p);
        for (std::size_t c = 0; c < header.size(); ++c)
            out << (c ? "," : "") << csv_cell(header[c]);
        out << '\n';
        for (const auto& row : rows) {
            const std::map<std::string, std::string> cells(row.begin(), row.end());
            for (std::size_t c = 0; c < header.size(); ++c) {
                const auto it = cells.find(header[c]);
                out << (c ? "," : "") << (it == cells.end() ? "" : csv_cell(it->second));
            }
            out << '\n';
        }
        if (!out)
            throw IoError("write failed: " + p.string());
        written.push_back(p);
    }
    return written;
}

std::vector<double> CsvTable::column(const std::string& name) const
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
        throw std::out_of_range("no column '" + name + "'");
    const auto c = static_cast<std::size_t>(it - header.begin());
    std::vector<double> out;
    for (const auto& row : rows)
        out.push_back(c < row.size() && !row[c].empty() ? std::stod(row[c]) : std::numeric_limits<double>::quiet_NaN());
    return out;
}

CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    CsvTable t;
    std::string line;
    if (std::getline(in, line))
        t.header = split_csv_line(line);
    while (std::getline(in, line))
        t.rows.push_back(split_csv_line(line));
    return t;
}

std::vector<RecordEntry> read_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    std::vector<RecordEntry> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty())
            out.push_back(entry_from_line(line));
    return out;
}

}  // namespace gridcosim::orchestrator
