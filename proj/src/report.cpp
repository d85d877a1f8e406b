#include "spikecal/report.hpp"

#include <charconv>

#include "spikecal/error.hpp"
#include "spikecal/model_ir.hpp"

namespace spikecal {

std::string format_number(double v)
{
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

void CsvTable::add(std::vector<std::string> row)
{
    if (row.size() != header_.size())
        throw ParameterError("csv row has " + std::to_string(row.size()) + " cells, header has " +
                             std::to_string(header_.size()));
    rows_.push_back(std::move(row));
}

std::string CsvTable::str() const
{
    auto line = [](const std::vector<std::string>& cells) {
        std::string s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) s += ',';
            s += cells[i];
        }
        return s + '\n';
    };
    std::string out = line(header_);
    for (const auto& r : rows_) out += line(r);
    return out;
}

void write_json(const std::filesystem::path& path, const Json& doc)
{
    write_file_atomic(path, doc.dump(2) + "\n");
}

void write_csv(const std::filesystem::path& path, const CsvTable& table)
{
    write_file_atomic(path, table.str());
}

}  // namespace spikecal
