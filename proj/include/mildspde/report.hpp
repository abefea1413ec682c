// report.hpp — run records and flat-file emission: results.csv is the
// authoritative output, run.meta carries provenance, plot.svg is a log-log
// line plot of the ladders.  results.csv bytes depend only on (config, seed),
// never on timing or worker count.

#pragma once

#include "mildspde/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace mildspde {

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

struct RunRecord {
    std::string kind;
    std::string config_text;
    std::uint64_t seed = 0;
    int workers = 1;
    std::uint64_t config_hash = 0;
    double duration_seconds = 0.0;
    RunResult result;
};

inline std::string format_field(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_results_csv(const RunRecord& rec, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "# columns: experiment, level_abscissa, error, stderr, slope, slope_stderr\n";
    f << "# experiment: <kind>/<row label>\n";
    f << "# level_abscissa: ladder abscissa (mode count, step size, time, offset) or empty\n";
    f << "# error: the row's reported value (an error, estimate, or statistic per label)\n";
    f << "# stderr: Monte Carlo standard error of the value when applicable\n";
    f << "# slope, slope_stderr: least-squares log-log fit over the row's ladder\n";
    f << "experiment,level_abscissa,error,stderr,slope,slope_stderr\n";
    for (const auto& r : rec.result.rows) {
        f << rec.kind << "/" << r.label << "," << format_field(r.abscissa) << ","
          << format_field(r.value) << "," << format_field(r.se) << ","
          << format_field(r.slope) << "," << format_field(r.slope_se) << "\n";
    }
}

inline void write_meta(const RunRecord& rec, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "experiment = " << rec.kind << "\n";
    f << "seed = " << rec.seed << "\n";
    f << "workers = " << rec.workers << "\n";
    f << "config_fnv1a = " << rec.config_hash << "\n";
    f << "duration_seconds = " << rec.duration_seconds << "\n";
    f << "pass = " << (rec.result.pass ? "yes" : "no") << "\n";
    f << "version = mildspde 1.0\n";
    for (const auto& n : rec.result.notes) f << "note = " << n << "\n";
}

// log-log polyline plot with error bars; one series per row label
inline void write_svg(const RunRecord& rec, const std::string& path) {
    std::map<std::string, std::vector<const ResultRow*>> series;
    for (const auto& r : rec.result.rows)
        if (!std::isnan(r.abscissa) && r.abscissa > 0.0 && !std::isnan(r.value) &&
            r.value > 0.0)
            series[r.label].push_back(&r);
    for (auto it = series.begin(); it != series.end();) {
        if (it->second.size() < 2)
            it = series.erase(it);
        else
            ++it;
    }
    if (series.empty()) return;

    double lx0 = 1e300, lx1 = -1e300, ly0 = 1e300, ly1 = -1e300;
    for (const auto& [name, rows] : series)
        for (const auto* r : rows) {
            lx0 = std::min(lx0, std::log10(r->abscissa));
            lx1 = std::max(lx1, std::log10(r->abscissa));
            ly0 = std::min(ly0, std::log10(r->value));
            ly1 = std::max(ly1, std::log10(r->value));
        }
    if (lx1 - lx0 < 1e-12) lx1 = lx0 + 1.0;
    if (ly1 - ly0 < 1e-12) ly1 = ly0 + 1.0;

    const double W = 640, H = 480, ml = 70, mr = 20, mt = 20, mb = 50;
    auto X = [&](double a) { return ml + (std::log10(a) - lx0) / (lx1 - lx0) * (W - ml - mr); };
    auto Y = [&](double v) {
        return H - mb - (std::log10(v) - ly0) / (ly1 - ly0) * (H - mt - mb);
    };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='" << H - mb
      << "' stroke='black'/>\n";
    f << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
      << "' stroke='black'/>\n";
    // decade ticks
    for (int d = static_cast<int>(std::floor(lx0)); d <= static_cast<int>(std::ceil(lx1)); ++d) {
        double x = ml + (d - lx0) / (lx1 - lx0) * (W - ml - mr);
        if (x < ml - 1 || x > W - mr + 1) continue;
        f << "<line x1='" << x << "' y1='" << H - mb << "' x2='" << x << "' y2='" << H - mb + 5
          << "' stroke='black'/>\n";
        f << "<text x='" << x << "' y='" << H - mb + 20
          << "' font-size='11' text-anchor='middle'>1e" << d << "</text>\n";
    }
    for (int d = static_cast<int>(std::floor(ly0)); d <= static_cast<int>(std::ceil(ly1)); ++d) {
        double y = H - mb - (d - ly0) / (ly1 - ly0) * (H - mt - mb);
        if (y < mt - 1 || y > H - mb + 1) continue;
        f << "<line x1='" << ml - 5 << "' y1='" << y << "' x2='" << ml << "' y2='" << y
          << "' stroke='black'/>\n";
        f << "<text x='" << ml - 8 << "' y='" << y + 4
          << "' font-size='11' text-anchor='end'>1e" << d << "</text>\n";
    }
    int ci = 0;
    double legend_y = mt + 10;
    for (const auto& [name, rows] : series) {
        const char* color = colors[ci % 5];
        f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (const auto* r : rows) f << X(r->abscissa) << "," << Y(r->value) << " ";
        f << "'/>\n";
        for (const auto* r : rows) {
            f << "<circle cx='" << X(r->abscissa) << "' cy='" << Y(r->value)
              << "' r='3' fill='" << color << "'/>\n";
            if (!std::isnan(r->se) && r->se > 0.0 && r->value - r->se > 0.0) {
                f << "<line x1='" << X(r->abscissa) << "' y1='" << Y(r->value - r->se)
                  << "' x2='" << X(r->abscissa) << "' y2='" << Y(r->value + r->se)
                  << "' stroke='" << color << "'/>\n";
            }
        }
        f << "<text x='" << W - mr - 5 << "' y='" << legend_y << "' font-size='12' fill='"
          << color << "' text-anchor='end'>" << name << "</text>\n";
        legend_y += 16;
        ++ci;
    }
    f << "</svg>\n";
}

inline RunRecord execute_run(const std::string& kind, const ExperimentConfig& cfg,
                             std::uint64_t seed, int workers) {
    RunRecord rec;
    rec.kind = kind;
    rec.config_text = cfg.raw();
    rec.seed = seed;
    rec.workers = workers;
    rec.config_hash = fnv1a(cfg.raw());
    auto start = std::chrono::steady_clock::now();
    rec.result = run_experiment(kind, cfg, seed, workers);
    rec.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

inline void emit(const RunRecord& rec, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_results_csv(rec, out_dir + "/results.csv");
    write_meta(rec, out_dir + "/run.meta");
    write_svg(rec, out_dir + "/plot.svg");
}

}  // namespace mildspde
