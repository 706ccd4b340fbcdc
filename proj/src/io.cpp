#include "finestruct/io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

namespace finestruct {

namespace {

std::string trim(std::string_view sv) {
    std::size_t a = 0, b = sv.size();
    while (a < b && std::isspace(static_cast<unsigned char>(sv[a])))
        ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(sv[b - 1])))
        --b;
    return std::string(sv.substr(a, b - a));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(std::string_view(line).substr(start)));
            return out;
        }
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
}

double parse_double(const std::string& field, const std::string& source,
                    std::size_t line_no) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last) {
        std::ostringstream os;
        os << source << ":" << line_no << ": cannot parse number from \"" << field << "\"";
        throw ParseError(os.str(), line_no);
    }
    return value;
}

// Reads logical CSV lines, skipping blank ones, tracking 1-based numbers.
bool next_csv_line(std::istream& in, std::string& line, std::size_t& line_no) {
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (!trim(line).empty())
            return true;
    }
    return false;
}

const char* to_string(GConvention c) {
    return c == GConvention::SignedDifference ? "signed" : "magnitude";
}

void check_keys(const nlohmann::json& obj,
                std::initializer_list<const char*> allowed, const char* scope) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
                return key == a;
            }) == allowed.end()) {
            std::ostringstream os;
            os << "config: unknown key \"" << key << "\" in " << scope;
            throw ParseError(os.str());
        }
    }
}

double as_number(const nlohmann::json& v, const char* name) {
    if (!v.is_number()) {
        std::ostringstream os;
        os << "config: " << name << " must be a number";
        throw ParseError(os.str());
    }
    return v.get<double>();
}

bool as_bool(const nlohmann::json& v, const char* name) {
    if (!v.is_boolean()) {
        std::ostringstream os;
        os << "config: " << name << " must be a boolean";
        throw ParseError(os.str());
    }
    return v.get<bool>();
}

} // namespace

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

double rounded_number(double v) {
    return std::strtod(format_number(v).c_str(), nullptr);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out)
            throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                      ec.message());
}

SplittingSeries read_series_csv(std::istream& in, SeriesKind kind,
                                const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    if (!next_csv_line(in, line, line_no))
        throw ParseError(source + ": empty file", 0);

    const auto header = split_fields(line);
    bool with_sigma = false;
    if (header == std::vector<std::string>{"b_T", "value_ueV"}) {
        with_sigma = false;
    } else if (header == std::vector<std::string>{"b_T", "value_ueV", "sigma_ueV"}) {
        with_sigma = true;
    } else {
        std::ostringstream os;
        os << source << ":1: expected header \"b_T,value_ueV[,sigma_ueV]\", got \"" << line
           << "\"";
        throw ParseError(os.str(), 1);
    }

    std::vector<Sample> samples;
    while (next_csv_line(in, line, line_no)) {
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            std::ostringstream os;
            os << source << ":" << line_no << ": expected " << header.size()
               << " fields, got " << fields.size();
            throw ParseError(os.str(), line_no);
        }
        Sample s;
        s.b_x = parse_double(fields[0], source, line_no);
        s.value = parse_double(fields[1], source, line_no);
        if (with_sigma)
            s.sigma = parse_double(fields[2], source, line_no);
        samples.push_back(s);
    }
    if (samples.empty())
        throw ParseError(source + ": no data rows", line_no);
    return SplittingSeries(kind, std::move(samples));
}

SplittingSeries read_series_csv_file(const std::filesystem::path& path, SeriesKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    return read_series_csv(in, kind, path.filename().string());
}

std::string series_to_csv(const SplittingSeries& series) {
    std::string out = series.has_sigmas() ? "b_T,value_ueV,sigma_ueV\n" : "b_T,value_ueV\n";
    for (const auto& s : series.samples()) {
        out += format_number(s.b_x);
        out += ',';
        out += format_number(s.value);
        if (series.has_sigmas()) {
            out += ',';
            out += format_number(*s.sigma);
        }
        out += '\n';
    }
    return out;
}

PolarizedSpectrum read_spectrum_csv(std::istream& in, Polarization polarization,
                                    const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    if (!next_csv_line(in, line, line_no))
        throw ParseError(source + ": empty file", 0);
    if (split_fields(line) != std::vector<std::string>{"energy_ueV", "intensity"}) {
        std::ostringstream os;
        os << source << ":1: expected header \"energy_ueV,intensity\", got \"" << line
           << "\"";
        throw ParseError(os.str(), 1);
    }

    PolarizedSpectrum sp;
    sp.polarization = polarization;
    std::optional<double> step;
    while (next_csv_line(in, line, line_no)) {
        const auto fields = split_fields(line);
        if (fields.size() != 2) {
            std::ostringstream os;
            os << source << ":" << line_no << ": expected 2 fields, got " << fields.size();
            throw ParseError(os.str(), line_no);
        }
        const double e = parse_double(fields[0], source, line_no);
        const double y = parse_double(fields[1], source, line_no);
        if (!sp.grid.empty()) {
            const double d = e - sp.grid.back();
            if (!(d > 0.0))
                throw ParseError(source + ":" + std::to_string(line_no) +
                                     ": energy grid must be strictly increasing",
                                 line_no);
            if (!step)
                step = d;
            else if (std::abs(d - *step) > 1e-9 * std::max(1.0, std::abs(*step)))
                throw ParseError(source + ":" + std::to_string(line_no) +
                                     ": energy grid step is not constant",
                                 line_no);
        }
        sp.grid.push_back(e);
        sp.intensity.push_back(y);
    }
    if (sp.grid.size() < 2)
        throw ParseError(source + ": need at least 2 data rows", line_no);
    return sp;
}

std::string spectrum_to_csv(const PolarizedSpectrum& spectrum) {
    std::string out = "energy_ueV,intensity\n";
    for (std::size_t i = 0; i < spectrum.grid.size(); ++i) {
        out += format_number(spectrum.grid[i]);
        out += ',';
        out += format_number(spectrum.intensity[i]);
        out += '\n';
    }
    return out;
}

std::string sweep_to_csv(std::span<const SweepPoint> sweep) {
    std::string out = "b_x_T,e_Hbright_ueV,e_Vbright_ueV,e_Hdark_ueV,e_Vdark_ueV,"
                      "frac_Hbright,frac_Vbright,S_ueV,D_H_ueV,D_V_ueV\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& pt : sweep) {
        std::array<double, 10> cols{pt.b_x, nan, nan, nan, nan, nan, nan, nan, nan, nan};
        if (pt.fine) {
            const auto& f = *pt.fine;
            cols = {pt.b_x,
                    f.states[0].energy,
                    f.states[1].energy,
                    f.states[2].energy,
                    f.states[3].energy,
                    f.states[0].bright_fraction,
                    f.states[1].bright_fraction,
                    f.s,
                    f.d_h,
                    f.d_v};
        }
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (i)
                out += ',';
            out += format_number(cols[i]);
        }
        out += '\n';
    }
    return out;
}

nlohmann::ordered_json spectrum_to_json(const PolarizedSpectrum& spectrum) {
    nlohmann::ordered_json j;
    j["polarization"] = finestruct::to_string(spectrum.polarization);
    auto grid = nlohmann::ordered_json::array();
    for (double e : spectrum.grid)
        grid.push_back(rounded_number(e));
    j["grid_ueV"] = std::move(grid);
    auto intensity = nlohmann::ordered_json::array();
    for (double y : spectrum.intensity)
        intensity.push_back(rounded_number(y));
    j["intensity"] = std::move(intensity);
    auto lines = nlohmann::ordered_json::array();
    for (const auto& line : spectrum.lines) {
        nlohmann::ordered_json lj;
        lj["center_ueV"] = rounded_number(line.center);
        lj["height"] = rounded_number(line.height);
        lj["fwhm_ueV"] = rounded_number(line.fwhm);
        lj["polarization"] = finestruct::to_string(line.polarization);
        lj["origin"] = finestruct::to_string(line.origin);
        lines.push_back(std::move(lj));
    }
    j["lines"] = std::move(lines);
    if (spectrum.noise_seed)
        j["noise_seed"] = *spectrum.noise_seed;
    else
        j["noise_seed"] = nullptr;
    return j;
}

PolarizedSpectrum spectrum_from_json(const nlohmann::json& j) {
    try {
        PolarizedSpectrum sp;
        const auto pol = j.at("polarization").get<std::string>();
        if (pol == "H")
            sp.polarization = Polarization::H;
        else if (pol == "V")
            sp.polarization = Polarization::V;
        else
            throw ParseError("spectrum JSON: polarization must be \"H\" or \"V\"");
        sp.grid = j.at("grid_ueV").get<std::vector<double>>();
        sp.intensity = j.at("intensity").get<std::vector<double>>();
        if (sp.grid.size() != sp.intensity.size())
            throw ParseError("spectrum JSON: grid_ueV and intensity lengths differ");
        for (const auto& lj : j.at("lines")) {
            SpectralLine line;
            line.center = lj.at("center_ueV").get<double>();
            line.height = lj.at("height").get<double>();
            line.fwhm = lj.at("fwhm_ueV").get<double>();
            const auto lp = lj.at("polarization").get<std::string>();
            line.polarization = lp == "H" ? Polarization::H : Polarization::V;
            const auto origin = lj.at("origin").get<std::string>();
            if (origin == "X-brighter")
                line.origin = LineOrigin::XBrighter;
            else if (origin == "X-darker")
                line.origin = LineOrigin::XDarker;
            else if (origin == "XX-H")
                line.origin = LineOrigin::XxH;
            else if (origin == "XX-V")
                line.origin = LineOrigin::XxV;
            else
                throw ParseError("spectrum JSON: unknown line origin \"" + origin + "\"");
            sp.lines.push_back(line);
        }
        if (!j.at("noise_seed").is_null())
            sp.noise_seed = j.at("noise_seed").get<std::uint64_t>();
        return sp;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("spectrum JSON: ") + e.what());
    }
}

RunConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw ParseError("config: top level must be a JSON object");
    check_keys(j, {"dot", "field", "power", "grid", "noise", "fit", "thresholds", "g",
                   "out_dir"},
               "top level");

    RunConfig cfg;
    if (j.contains("dot")) {
        const auto& d = j.at("dot");
        check_keys(d, {"s0", "d0", "sigma0", "g_e", "g_h", "e0", "gamma", "xx_binding",
                       "e_c"},
                   "dot");
        if (d.contains("s0"))
            cfg.dot.s0 = as_number(d.at("s0"), "dot.s0");
        if (d.contains("d0"))
            cfg.dot.d0 = as_number(d.at("d0"), "dot.d0");
        if (d.contains("sigma0"))
            cfg.dot.sigma0 = as_number(d.at("sigma0"), "dot.sigma0");
        if (d.contains("g_e"))
            cfg.dot.g_e = as_number(d.at("g_e"), "dot.g_e");
        if (d.contains("g_h"))
            cfg.dot.g_h = as_number(d.at("g_h"), "dot.g_h");
        if (d.contains("e0"))
            cfg.dot.e0 = as_number(d.at("e0"), "dot.e0");
        if (d.contains("gamma"))
            cfg.dot.gamma = as_number(d.at("gamma"), "dot.gamma");
        if (d.contains("xx_binding"))
            cfg.dot.xx_binding = as_number(d.at("xx_binding"), "dot.xx_binding");
        if (d.contains("e_c"))
            cfg.dot.e_c = as_number(d.at("e_c"), "dot.e_c");
    }
    if (j.contains("field")) {
        const auto& f = j.at("field");
        check_keys(f, {"start", "end", "steps"}, "field");
        if (f.contains("start"))
            cfg.b_start = as_number(f.at("start"), "field.start");
        if (f.contains("end"))
            cfg.b_end = as_number(f.at("end"), "field.end");
        if (f.contains("steps")) {
            const double v = as_number(f.at("steps"), "field.steps");
            if (!(v >= 2.0) || v != std::floor(v))
                throw ParseError("config: field.steps must be an integer >= 2");
            cfg.steps = static_cast<std::size_t>(v);
        }
    }
    if (j.contains("power"))
        cfg.power = as_number(j.at("power"), "power");
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        check_keys(g, {"center", "span", "step"}, "grid");
        if (!g.contains("center") || !g.contains("span"))
            throw ParseError("config: grid requires center and span");
        GridSpec spec;
        spec.center = as_number(g.at("center"), "grid.center");
        spec.span = as_number(g.at("span"), "grid.span");
        if (g.contains("step"))
            spec.step = as_number(g.at("step"), "grid.step");
        cfg.grid = spec;
    }
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        check_keys(n, {"sigma_rel", "seed"}, "noise");
        if (n.contains("sigma_rel"))
            cfg.sigma_rel = as_number(n.at("sigma_rel"), "noise.sigma_rel");
        if (n.contains("seed")) {
            if (!n.at("seed").is_number_unsigned())
                throw ParseError("config: noise.seed must be a non-negative integer");
            cfg.seed = n.at("seed").get<std::uint64_t>();
            cfg.seed_set = true;
        }
    }
    if (j.contains("fit")) {
        const auto& f = j.at("fit");
        check_keys(f, {"include_quartic"}, "fit");
        if (f.contains("include_quartic"))
            cfg.include_quartic = as_bool(f.at("include_quartic"), "fit.include_quartic");
    }
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        check_keys(t, {"lower", "upper"}, "thresholds");
        if (t.contains("lower"))
            cfg.thresholds.lower = as_number(t.at("lower"), "thresholds.lower");
        if (t.contains("upper"))
            cfg.thresholds.upper = as_number(t.at("upper"), "thresholds.upper");
    }
    if (j.contains("g")) {
        const auto& g = j.at("g");
        check_keys(g, {"convention", "diff"}, "g");
        if (g.contains("convention")) {
            const auto c = g.at("convention").get<std::string>();
            if (c == to_string(GConvention::SignedDifference))
                cfg.g_convention = GConvention::SignedDifference;
            else if (c == to_string(GConvention::MagnitudeDifference))
                cfg.g_convention = GConvention::MagnitudeDifference;
            else
                throw ParseError("config: g.convention must be \"signed\" or \"magnitude\"");
        }
        if (g.contains("diff"))
            cfg.g_diff = as_number(g.at("diff"), "g.diff");
    }
    if (j.contains("out_dir")) {
        if (!j.at("out_dir").is_string())
            throw ParseError("config: out_dir must be a string");
        cfg.out_dir = j.at("out_dir").get<std::string>();
        if (cfg.out_dir.empty())
            throw ParseError("config: out_dir must be nonempty");
        cfg.out_set = true;
    }
    return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.filename().string() + ": " + e.what());
    }
    return config_from_json(j);
}

} // namespace finestruct
