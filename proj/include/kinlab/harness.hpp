#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinlab/fields.hpp"
#include "kinlab/grid.hpp"

namespace kinlab {

// ---------------------------------------------------------------------------
// configuration files: [section] / key = value, # or ; comments
// ---------------------------------------------------------------------------

class Config {
public:
    Config() = default;

    static Config parse(std::istream& in) {
        Config cfg;
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(strip_comment(line));
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']')
                    throw std::runtime_error("config line " + std::to_string(lineno) +
                                             ": unterminated section header");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": expected key = value");
            std::string key = trim(t.substr(0, eq));
            std::string val = trim(t.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[section.empty() ? key : section + "." + key] = val;
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        return parse(in);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config: missing key " + key);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    int get_int(const std::string& key, int fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const double d = to_double(key, it->second);
        const int i = static_cast<int>(std::llround(d));
        if (std::abs(d - i) > 1e-12)
            throw std::runtime_error("config: key " + key + " is not an integer");
        return i;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::runtime_error("config: key " + key + " is not a boolean");
    }

    /// Comma- or space-separated list of numbers.
    std::vector<double> get_list(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) return {};
        std::vector<double> out;
        std::string item;
        std::istringstream ss(it->second);
        while (std::getline(ss, item, ',')) {
            std::istringstream ws(item);
            std::string tok;
            while (ws >> tok) out.push_back(to_double(key, tok));
        }
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string strip_comment(const std::string& s) {
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] == '#' || s[i] == ';') return s.substr(0, i);
        return s;
    }
    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }
    static double to_double(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw std::runtime_error("config: key " + key + " has non-numeric value '" + v + "'");
        }
    }

    std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// sweep tables
// ---------------------------------------------------------------------------

/// One measured quantity at one sweep point. status is "success" or
/// "failed:<reason>"; failed rows keep their place in the table so a sweep
/// with a blown-up run still documents the attempt.
struct SweepRow {
    double epsilon = 0.0;
    double delta = 0.0;
    double t = 0.0;
    std::string quantity;
    std::string norm;
    double value = 0.0;
    std::string status = "success";
};

class SweepTable {
public:
    void add(SweepRow row) { rows_.push_back(std::move(row)); }

    void add_success(double eps, double delta, double t, const std::string& quantity,
                     const std::string& norm, double value) {
        rows_.push_back({eps, delta, t, quantity, norm, value, "success"});
    }

    void add_failure(double eps, double delta, double t, const std::string& quantity,
                     const std::string& norm, const std::string& reason) {
        rows_.push_back({eps, delta, t, quantity, norm, 0.0, "failed:" + reason});
    }

    const std::vector<SweepRow>& rows() const { return rows_; }

    /// Values of one (quantity, norm) series, success rows only, keyed by the
    /// chosen abscissa field.
    std::vector<std::pair<double, double>> series(const std::string& quantity,
                                                  const std::string& norm,
                                                  char abscissa = 'd') const {
        std::vector<std::pair<double, double>> out;
        for (const auto& r : rows_) {
            if (r.quantity != quantity || r.norm != norm || r.status != "success") continue;
            double x = r.delta;
            if (abscissa == 'e') x = r.epsilon;
            else if (abscissa == 't') x = r.t;
            out.push_back({x, r.value});
        }
        return out;
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("sweep table: cannot open " + path);
        out << "epsilon,delta,t,quantity,norm,value,status\n";
        char buf[64];
        for (const auto& r : rows_) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.epsilon);
            out << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", r.delta);
            out << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", r.t);
            out << buf << ',' << r.quantity << ',' << r.norm << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", r.value);
            out << buf << ',' << r.status << '\n';
        }
    }

    static SweepTable read_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("sweep table: cannot open " + path);
        std::string line;
        if (!std::getline(in, line) || line != "epsilon,delta,t,quantity,norm,value,status")
            throw std::runtime_error("sweep table: bad header in " + path);
        SweepTable tab;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::istringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            // the status field may itself contain a colon but never a comma
            if (cells.size() != 7)
                throw std::runtime_error("sweep table: malformed row in " + path);
            SweepRow r;
            r.epsilon = std::stod(cells[0]);
            r.delta = std::stod(cells[1]);
            r.t = std::stod(cells[2]);
            r.quantity = cells[3];
            r.norm = cells[4];
            r.value = std::stod(cells[5]);
            r.status = cells[6];
            tab.add(std::move(r));
        }
        return tab;
    }

private:
    std::vector<SweepRow> rows_;
};

// ---------------------------------------------------------------------------
// rate fitting
// ---------------------------------------------------------------------------

/// Least-squares fit of log10(y) against log10(x). Nonpositive values cannot
/// enter the fit and are counted; at least three usable points are required.
struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;  // fitted constant: y ~ intercept * x^slope
    double r2 = 0.0;
    int n_used = 0;
    int n_excluded = 0;
};

inline RateFit fit_rate(const std::vector<std::pair<double, double>>& pts) {
    std::vector<std::pair<double, double>> lg;
    int excluded = 0;
    for (const auto& p : pts) {
        if (p.first > 0.0 && p.second > 0.0)
            lg.push_back({std::log10(p.first), std::log10(p.second)});
        else
            ++excluded;
    }
    if (lg.size() < 3)
        throw std::invalid_argument("fit_rate: need at least three positive points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const double n = static_cast<double>(lg.size());
    for (const auto& p : lg) {
        sx += p.first;
        sy += p.second;
        sxx += p.first * p.first;
        sxy += p.first * p.second;
        syy += p.second * p.second;
    }
    const double vxx = sxx - sx * sx / n;
    const double vxy = sxy - sx * sy / n;
    const double vyy = syy - sy * sy / n;
    if (!(vxx > 0.0)) throw std::invalid_argument("fit_rate: degenerate abscissae");
    RateFit fit;
    fit.slope = vxy / vxx;
    fit.intercept = std::pow(10.0, (sy - fit.slope * sx) / n);
    fit.r2 = vyy > 0.0 ? (vxy * vxy) / (vxx * vyy) : 1.0;
    fit.n_used = static_cast<int>(lg.size());
    fit.n_excluded = excluded;
    return fit;
}

inline RateFit fit_rate(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("fit_rate: mismatched series lengths");
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < xs.size(); ++i) pts.push_back({xs[i], ys[i]});
    return fit_rate(pts);
}

// ---------------------------------------------------------------------------
// snapshot files: short text header, raw doubles
// ---------------------------------------------------------------------------

namespace snapshot_detail {

inline void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_doubles(std::ifstream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw std::runtime_error("snapshot: truncated payload");
}

}  // namespace snapshot_detail

inline void save_distribution(const Distribution& F, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("snapshot: cannot open " + path);
    out << "kinlab-dist 1\n"
        << F.xg.dim << ' ' << F.xg.n << ' ' << F.vg.n << ' ' << F.vg.v_max << '\n';
    snapshot_detail::write_doubles(out, F.f);
    if (!out) throw std::runtime_error("snapshot: write failed for " + path);
}

inline Distribution load_distribution(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("snapshot: cannot open " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "kinlab-dist" || version != 1)
        throw std::runtime_error("snapshot: " + path + " is not a distribution file");
    int dim = 0, nx = 0, nv = 0;
    double vmax = 0.0;
    in >> dim >> nx >> nv >> vmax;
    in.ignore(2, '\n');
    Distribution F = Distribution::zeros(make_spatial_grid(dim, nx), make_velocity_grid(nv, vmax));
    snapshot_detail::read_doubles(in, F.f);
    return F;
}

inline void save_fluid(const FluidState& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("snapshot: cannot open " + path);
    out << "kinlab-fluid 1\n" << s.grid.dim << ' ' << s.grid.n << '\n';
    snapshot_detail::write_doubles(out, s.rho);
    for (int d = 0; d < 3; ++d) snapshot_detail::write_doubles(out, s.u[d]);
    snapshot_detail::write_doubles(out, s.T);
    if (!out) throw std::runtime_error("snapshot: write failed for " + path);
}

inline FluidState load_fluid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("snapshot: cannot open " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "kinlab-fluid" || version != 1)
        throw std::runtime_error("snapshot: " + path + " is not a fluid file");
    int dim = 0, nx = 0;
    in >> dim >> nx;
    in.ignore(2, '\n');
    FluidState s = FluidState::zeros(make_spatial_grid(dim, nx));
    snapshot_detail::read_doubles(in, s.rho);
    for (int d = 0; d < 3; ++d) snapshot_detail::read_doubles(in, s.u[d]);
    snapshot_detail::read_doubles(in, s.T);
    return s;
}

// ---------------------------------------------------------------------------
// verdict reports
// ---------------------------------------------------------------------------

struct Verdict {
    std::string name;
    bool pass = false;
    std::string detail;
    nlohmann::json data;  // fitted constants, measured values
};

class Report {
public:
    void add(Verdict v) { verdicts_.push_back(std::move(v)); }

    bool all_pass() const {
        for (const auto& v : verdicts_)
            if (!v.pass) return false;
        return true;
    }

    const std::vector<Verdict>& verdicts() const { return verdicts_; }

    nlohmann::json to_json() const {
        nlohmann::json out;
        out["pass"] = all_pass();
        out["checks"] = nlohmann::json::array();
        for (const auto& v : verdicts_) {
            nlohmann::json c;
            c["name"] = v.name;
            c["pass"] = v.pass;
            c["detail"] = v.detail;
            if (!v.data.is_null()) c["data"] = v.data;
            out["checks"].push_back(std::move(c));
        }
        return out;
    }

    void write_json(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("report: cannot open " + path);
        out << to_json().dump(2) << '\n';
    }

private:
    std::vector<Verdict> verdicts_;
};

}  // namespace kinlab
