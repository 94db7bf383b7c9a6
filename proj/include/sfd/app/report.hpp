#pragma once

// Run reports (versioned JSON) and their aggregation into CSV and SVG.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sfd/pipeline/episode_run.hpp"

namespace sfd::app {

inline constexpr const char* kReportSchema = "sfd-run-report";
inline constexpr int kReportVersion = 1;

struct ReportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EpisodeResult {
    std::uint64_t seed = 0;
    bool success = false;
    std::vector<std::string> reasons;
    int collisions = 0;
    double makespan = 0.0;
    double sim_time = 0.0;
    int slots = 0;
    std::string allocator;
    std::optional<std::string> fallback;
};

struct RunReport {
    std::string task;
    std::string mode;
    std::string flows; // "oracle" or "predicted"
    std::uint64_t seed = 0;
    std::vector<EpisodeResult> episodes;
};

inline EpisodeResult episode_result(const pipeline::EpisodeOutcome& o)
{
    return {o.seed, o.success, o.reasons, o.collisions, o.makespan, o.sim_time, o.slots, o.allocator, o.fallback};
}

// A failure before execution (grounding, lifting, allocation) still counts as
// an attempted episode.
inline EpisodeResult failed_episode(std::uint64_t seed, const std::string& why)
{
    EpisodeResult r;
    r.seed = seed;
    r.reasons = {"pipeline error: " + why};
    r.allocator = "none";
    return r;
}

inline nlohmann::json report_to_json(const RunReport& r)
{
    nlohmann::json eps = nlohmann::json::array();
    int ok = 0;
    int collided = 0;
    for (const auto& e : r.episodes) {
        eps.push_back({{"seed", e.seed},
                       {"success", e.success},
                       {"reasons", e.reasons},
                       {"collisions", e.collisions},
                       {"makespan", e.makespan},
                       {"sim_time", e.sim_time},
                       {"slots", e.slots},
                       {"allocator", e.allocator},
                       {"fallback", e.fallback ? nlohmann::json(*e.fallback) : nlohmann::json()}});
        ok += e.success ? 1 : 0;
        collided += e.collisions > 0 ? 1 : 0;
    }
    return {{"schema", kReportSchema},
            {"version", kReportVersion},
            {"task", r.task},
            {"mode", r.mode},
            {"flows", r.flows},
            {"seed", r.seed},
            {"episodes", eps},
            {"successes", ok},
            {"collided", collided}};
}

inline RunReport report_from_json(const nlohmann::json& j)
{
    if (!j.is_object() || j.value("schema", std::string{}) != kReportSchema) {
        throw ReportError("not a run report");
    }
    if (const int v = j.at("version").get<int>(); v != kReportVersion) {
        throw ReportError("report schema version " + std::to_string(v) + " is not supported (expected " +
                          std::to_string(kReportVersion) + ")");
    }
    RunReport r;
    r.task = j.at("task").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.flows = j.at("flows").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("episodes")) {
        EpisodeResult x;
        x.seed = e.at("seed").get<std::uint64_t>();
        x.success = e.at("success").get<bool>();
        x.reasons = e.at("reasons").get<std::vector<std::string>>();
        x.collisions = e.at("collisions").get<int>();
        x.makespan = e.at("makespan").get<double>();
        x.sim_time = e.at("sim_time").get<double>();
        x.slots = e.at("slots").get<int>();
        x.allocator = e.at("allocator").get<std::string>();
        if (!e.at("fallback").is_null()) {
            x.fallback = e.at("fallback").get<std::string>();
        }
        r.episodes.push_back(std::move(x));
    }
    return r;
}

inline void save_report(const std::string& path, const RunReport& r)
{
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    os << report_to_json(r).dump(1) << '\n';
}

inline RunReport load_report(const std::string& path)
{
    std::ifstream is(path);
    if (!is) {
        throw ReportError("cannot open report " + path);
    }
    try {
        return report_from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::exception& e) {
        throw ReportError(path + ": " + e.what());
    } catch (const ReportError& e) {
        throw ReportError(path + ": " + e.what());
    }
}

struct SummaryRow {
    std::string task;
    std::string mode;
    std::string flows;
    int episodes = 0;
    int successes = 0;
    double success_rate = 0.0;
    double mean_makespan = 0.0;
    double collision_rate = 0.0; // fraction of episodes with at least one collision
};

// Rows sorted by (task, mode, flows). Reports sharing a key are pooled.
inline std::vector<SummaryRow> aggregate(const std::vector<RunReport>& reports)
{
    if (reports.empty()) {
        throw ReportError("no reports to aggregate");
    }
    std::map<std::tuple<std::string, std::string, std::string>, SummaryRow> rows;
    for (const auto& r : reports) {
        if (r.episodes.empty()) {
            throw ReportError("report for " + r.task + "/" + r.mode + " has no episodes");
        }
        auto& row = rows[{r.task, r.mode, r.flows}];
        row.task = r.task;
        row.mode = r.mode;
        row.flows = r.flows;
        for (const auto& e : r.episodes) {
            ++row.episodes;
            row.successes += e.success ? 1 : 0;
            row.mean_makespan += e.makespan;
            row.collision_rate += e.collisions > 0 ? 1.0 : 0.0;
        }
    }
    std::vector<SummaryRow> out;
    for (auto& [key, row] : rows) {
        const double n = row.episodes;
        row.success_rate = row.successes / n;
        row.mean_makespan /= n;
        row.collision_rate /= n;
        out.push_back(row);
    }
    return out;
}

namespace report_detail {

inline std::string fixed(double v, int digits = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string escape_xml(const std::string& s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace report_detail

inline std::string summary_csv(const std::vector<SummaryRow>& rows)
{
    using report_detail::fixed;
    std::ostringstream os;
    os << "task,mode,flows,episodes,successes,success_rate,mean_makespan,collision_rate\n";
    for (const auto& r : rows) {
        os << r.task << ',' << r.mode << ',' << r.flows << ',' << r.episodes << ',' << r.successes << ','
           << fixed(r.success_rate) << ',' << fixed(r.mean_makespan) << ',' << fixed(r.collision_rate) << '\n';
    }
    return os.str();
}

// Success-rate bars, one per row, with the collision rate as a thin bar.
inline std::string summary_svg(const std::vector<SummaryRow>& rows)
{
    using report_detail::fixed;
    const int bar = 36;
    const int gap = 28;
    const int left = 50;
    const int top = 30;
    const int height = 200;
    const int width = left + static_cast<int>(rows.size()) * (bar + gap) + gap;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << top + height + 90
       << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << left << "\" y=\"16\" font-size=\"12\">success rate (blue), collision rate (red)</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double y = top + height * (1.0 - k / 4.0);
        os << "<line x1=\"" << left - 4 << "\" y1=\"" << fixed(y, 1) << "\" x2=\"" << width - gap / 2 << "\" y2=\""
           << fixed(y, 1) << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << left - 8 << "\" y=\"" << fixed(y + 3, 1) << "\" text-anchor=\"end\">"
           << fixed(k / 4.0, 2) << "</text>\n";
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const int x = left + gap + static_cast<int>(i) * (bar + gap);
        const double h = height * r.success_rate;
        const double hc = height * r.collision_rate;
        os << "<rect x=\"" << x << "\" y=\"" << fixed(top + height - h, 1) << "\" width=\"" << bar - 8
           << "\" height=\"" << fixed(h, 1) << "\" fill=\"#3b6fb6\"/>\n";
        os << "<rect x=\"" << x + bar - 8 << "\" y=\"" << fixed(top + height - hc, 1) << "\" width=\"6\" height=\""
           << fixed(hc, 1) << "\" fill=\"#c0392b\"/>\n";
        os << "<text x=\"" << x + bar / 2 << "\" y=\"" << fixed(top + height - h - 4, 1)
           << "\" text-anchor=\"middle\">" << fixed(100.0 * r.success_rate, 0) << "%</text>\n";
        const int ly = top + height + 14;
        os << "<text x=\"" << x + bar / 2 << "\" y=\"" << ly << "\" text-anchor=\"middle\">"
           << report_detail::escape_xml(r.task) << "</text>\n";
        os << "<text x=\"" << x + bar / 2 << "\" y=\"" << ly + 12 << "\" text-anchor=\"middle\">"
           << report_detail::escape_xml(r.mode) << "</text>\n";
        os << "<text x=\"" << x + bar / 2 << "\" y=\"" << ly + 24 << "\" text-anchor=\"middle\" fill=\"#666\">"
           << report_detail::escape_xml(r.flows) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace sfd::app
