#pragma once

// Tables as CSV (header row, %.17e) or JSON (column arrays); reports as JSON.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace tdd {

/// Scientific notation with round-trip precision; deterministic across runs.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17e", v == 0.0 ? 0.0 : v);
    return buf;
}

class Table {
public:
    explicit Table(std::vector<std::string> columns) : cols_(std::move(columns)) {}

    void add(std::vector<double> row) {
        if (row.size() != cols_.size()) throw PreconditionError("table: row width mismatch");
        rows_.push_back(std::move(row));
    }

    const std::vector<std::string>& columns() const { return cols_; }
    const std::vector<std::vector<double>>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    void write_csv(std::ostream& os) const {
        for (std::size_t c = 0; c < cols_.size(); ++c) os << (c ? "," : "") << cols_[c];
        os << '\n';
        for (const auto& r : rows_) {
            for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_double(r[c]);
            os << '\n';
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        for (std::size_t c = 0; c < cols_.size(); ++c) {
            nlohmann::json col = nlohmann::json::array();
            for (const auto& r : rows_) col.push_back(r[c]);
            j[cols_[c]] = std::move(col);
        }
        return j;
    }

    /// CSV unless the extension is .json.
    std::string save(const std::filesystem::path& p) const {
        std::ofstream os(p);
        if (!os) throw Error("cannot write '" + p.string() + "'");
        if (p.extension() == ".json") os << to_json().dump() << '\n';
        else write_csv(os);
        if (!os) throw Error("write failed for '" + p.string() + "'");
        return p.string();
    }

private:
    std::vector<std::string> cols_;
    std::vector<std::vector<double>> rows_;
};

inline std::string save_json(const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream os(p);
    if (!os) throw Error("cannot write '" + p.string() + "'");
    os << j.dump(2) << '\n';
    return p.string();
}

} // namespace tdd
