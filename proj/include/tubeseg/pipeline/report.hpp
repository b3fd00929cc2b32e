#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "tubeseg/core/error.hpp"

namespace tubeseg {

/// Append-only run record. Keys serialize sorted (nlohmann objects are
/// std::map backed), so equal runs give byte-equal text apart from timings.
class RunReport {
public:
    using json = nlohmann::json;

    RunReport() : doc_(json::object()) { doc_["artifacts"] = json::array(); }

    /// Sets `section.key` once; a second write is a logic error.
    void put(const std::string& section, const std::string& key, json value)
    {
        json& s = doc_[section];
        if (s.is_null())
            s = json::object();
        if (s.contains(key))
            throw std::logic_error("report: " + section + "." + key + " already recorded");
        s[key] = std::move(value);
    }

    void timing(const std::string& stage, double seconds) { put("timings", stage, seconds); }

    /// Paths are relative to the run's output directory.
    void artifact(const std::string& path) { doc_["artifacts"].push_back(path); }

    const json& doc() const { return doc_; }

    /// The report without the timings section, for run-to-run comparison.
    json without_timings() const
    {
        json j = doc_;
        j.erase("timings");
        return j;
    }

    std::string dump() const { return doc_.dump(2) + "\n"; }

    void write(const std::string& path) const
    {
        std::ofstream os(path);
        if (!os)
            throw DataError("report: cannot write " + path);
        os << dump();
        if (!os)
            throw DataError("report: write failed: " + path);
    }

private:
    json doc_;
};

} // namespace tubeseg
