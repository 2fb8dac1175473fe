#pragma once
// Run artifacts: canonical parameter digests, %.17g CSV rows, and file
// helpers shared by the command-line tool and its tests.
//
// A run's digest is a 64-bit FNV-1a hash of the canonical (sorted-key) JSON
// dump of its semantic parameters.  Scheduling knobs (worker count, output
// paths, labels) and timing never enter the digest, so reruns of the same
// computation compare equal byte-for-byte.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace pam {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline nlohmann::json strip_nonsemantic(nlohmann::json params) {
    params.erase("workers");
    params.erase("out");
    params.erase("label");
    params.erase("config");
    return params;
}

inline std::string config_digest(const nlohmann::json& params) {
    std::string canonical = strip_nonsemantic(params).dump();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical)));
    return std::string(buf);
}

inline std::string format_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
}

// Minimal CSV accumulator; numeric cells go through %.17g.
class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) { row_of_strings(header); }

    void row(const std::vector<std::string>& cells) { row_of_strings(cells); }

    std::string& cell(std::string s) {
        pending_.push_back(std::move(s));
        return pending_.back();
    }
    CsvWriter& add(const std::string& s) {
        pending_.push_back(s);
        return *this;
    }
    CsvWriter& add(double x) {
        pending_.push_back(format_g17(x));
        return *this;
    }
    CsvWriter& add(long x) {
        pending_.push_back(std::to_string(x));
        return *this;
    }
    CsvWriter& add(int x) {
        pending_.push_back(std::to_string(x));
        return *this;
    }
    CsvWriter& add(bool x) {
        pending_.push_back(x ? "1" : "0");
        return *this;
    }
    void end_row() {
        row_of_strings(pending_);
        pending_.clear();
    }

    const std::string& str() const { return out_; }

private:
    void row_of_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ += ',';
            out_ += cells[i];
        }
        out_ += '\n';
    }
    std::string out_;
    std::vector<std::string> pending_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << content;
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct RunPaths {
    std::string results_csv;
    std::string report_json;
    std::string manifest_json;
};

inline RunPaths run_paths(const std::string& out_dir, const std::string& label) {
    RunPaths p;
    p.results_csv = out_dir + "/" + label + ".results.csv";
    p.report_json = out_dir + "/" + label + ".report.json";
    p.manifest_json = out_dir + "/" + label + ".manifest.json";
    return p;
}

} // namespace pam
