#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfield {

/// How a row's measured value is compared with its target.
enum class Relation {
    near,       // |measured - target| <= tolerance
    at_most,    // measured <= target + tolerance
    at_least,   // measured >= target - tolerance
    all_passed  // summary row: measured counts failed sub-checks
};

inline const char* to_string(Relation r)
{
    switch (r) {
    case Relation::near: return "near";
    case Relation::at_most: return "at_most";
    case Relation::at_least: return "at_least";
    case Relation::all_passed: return "all_passed";
    }
    return "?";
}

struct ReportRow {
    std::string id;      // criterion id, with a dotted suffix for sub-checks
    std::string anchor;  // what is being checked
    double measured = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    Relation relation = Relation::near;
    bool pass = false;
    std::string note;
};

inline bool evaluate(double measured, double target, double tolerance, Relation r)
{
    if (!std::isfinite(measured)) return false;
    switch (r) {
    case Relation::near: return std::abs(measured - target) <= tolerance;
    case Relation::at_most: return measured <= target + tolerance;
    case Relation::at_least: return measured >= target - tolerance;
    case Relation::all_passed: return measured == 0.0;
    }
    return false;
}

inline ReportRow make_row(std::string id, std::string anchor, double measured, double target, double tolerance,
                          Relation r, std::string note = {})
{
    return {std::move(id), std::move(anchor), measured, target, tolerance, r, evaluate(measured, target, tolerance, r),
            std::move(note)};
}

/// One criterion: a summary row plus the sub-checks behind it.
struct CriterionResult {
    ReportRow summary;
    std::vector<ReportRow> details;
};

inline CriterionResult summarize(std::string id, std::string anchor, std::vector<ReportRow> details,
                                 std::string note = {})
{
    double failed = 0;
    for (const auto& d : details)
        if (!d.pass) failed += 1;
    if (details.empty()) failed = 1;
    auto row = make_row(std::move(id), std::move(anchor), failed, 0.0, 0.0, Relation::all_passed, std::move(note));
    return {row, std::move(details)};
}

inline std::string format17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace detail

inline std::string rows_to_csv(const std::vector<ReportRow>& rows)
{
    std::ostringstream os;
    os << "id,anchor,measured,target,tolerance,relation,pass,note\n";
    for (const auto& r : rows)
        os << detail::csv_field(r.id) << ',' << detail::csv_field(r.anchor) << ',' << format17(r.measured) << ','
           << format17(r.target) << ',' << format17(r.tolerance) << ',' << to_string(r.relation) << ','
           << (r.pass ? "true" : "false") << ',' << detail::csv_field(r.note) << '\n';
    return os.str();
}

inline std::string rows_to_json(const std::vector<ReportRow>& rows)
{
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["anchor"] = r.anchor;
        j["measured"] = r.measured;
        j["target"] = r.target;
        j["tolerance"] = r.tolerance;
        j["relation"] = to_string(r.relation);
        j["pass"] = r.pass;
        j["note"] = r.note;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

inline void write_text(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path);
}

/// Plain CSV table: header row, '\n' endings, numbers at 17 digits.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(const std::vector<double>& row)
    {
        if (row.size() != header_.size()) throw std::invalid_argument("CsvTable: row width differs from header");
        rows_.push_back(row);
    }

    std::string str() const
    {
        std::ostringstream os;
        for (std::size_t i = 0; i < header_.size(); ++i) os << (i ? "," : "") << header_[i];
        os << '\n';
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format17(r[i]);
            os << '\n';
        }
        return os.str();
    }

    const std::vector<std::string>& header() const noexcept { return header_; }
    const std::vector<std::vector<double>>& rows() const noexcept { return rows_; }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<double>> rows_;
};

/// Reads a numeric CSV written by CsvTable.
inline CsvTable read_csv(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::invalid_argument(path + ": empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        for (std::string tok; std::getline(ss, tok, ',');) header.push_back(tok);
    }
    CsvTable t(header);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        for (std::string tok; std::getline(ss, tok, ',');) {
            std::size_t used = 0;
            row.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(path + ": non-numeric field '" + tok + "'");
        }
        t.add(row);
    }
    return t;
}

}  // namespace gfield
