#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace spikecal {

using Json = nlohmann::ordered_json;

/// Shortest decimal text that reads back as the same double.
std::string format_number(double v);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    /// Appends one row; the cell count must match the header.
    void add(std::vector<std::string> row);
    std::string str() const;
    std::size_t rows() const noexcept { return rows_.size(); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

void write_json(const std::filesystem::path& path, const Json& doc);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

}  // namespace spikecal
