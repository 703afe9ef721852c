#include "rabi/io.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "rabi/error.hpp"
#include "rabi/model.hpp"
#include "rabi/parallel.hpp"
#include "rabi/parity.hpp"
#include "rabi/sweeps.hpp"

#ifndef RABI_LAB_VERSION
#define RABI_LAB_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace rabi {

std::string tool_version() { return RABI_LAB_VERSION; }

std::string to_string(Subcommand c) {
    switch (c) {
        case Subcommand::spectrum: return "spectrum";
        case Subcommand::parity: return "parity";
        case Subcommand::wavefunction: return "wavefunction";
        case Subcommand::converge: return "converge";
        case Subcommand::phase_diagram: return "phase-diagram";
    }
    return "?";
}

Subcommand subcommand_from_string(std::string_view name) {
    for (auto c : {Subcommand::spectrum, Subcommand::parity, Subcommand::wavefunction, Subcommand::converge,
                   Subcommand::phase_diagram})
        if (to_string(c) == name) return c;
    throw ConfigError("unknown command '" + std::string(name) + "'");
}

std::vector<double> GridSpec::values() const { return make_grid(start, stop, step); }

double RunConfig::coupling() const {
    if (g) return *g;
    if (g_over_gc) return *g_over_gc * critical_coupling(delta);
    throw ConfigError("a coupling is required: give g or g_over_gc");
}

std::vector<double> RunConfig::coupling_grid() const {
    if (sweep_g) return sweep_g->values();
    if (sweep_g_over_gc) {
        auto r = sweep_g_over_gc->values();
        const double gc = critical_coupling(delta);
        for (double& x : r) x *= gc;
        return r;
    }
    return {coupling()};
}

// ---------------------------------------------------------------------------
// key table

namespace {

constexpr unsigned bit(Subcommand c) { return 1u << static_cast<unsigned>(c); }
constexpr unsigned kSpectrum = bit(Subcommand::spectrum);
constexpr unsigned kParity = bit(Subcommand::parity);
constexpr unsigned kWave = bit(Subcommand::wavefunction);
constexpr unsigned kConverge = bit(Subcommand::converge);
constexpr unsigned kPhase = bit(Subcommand::phase_diagram);
constexpr unsigned kAll = kSpectrum | kParity | kWave | kConverge | kPhase;

struct KeySpec {
    const char* key;
    unsigned commands;
    const char* help;
    bool is_switch = false;
};

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> keys = {
        {"delta", kSpectrum | kParity | kWave | kConverge, "two-level splitting (>= 0)"},
        {"g", kSpectrum | kParity | kWave, "coupling strength"},
        {"g_over_gc", kSpectrum | kParity | kWave, "coupling in units of g_c"},
        {"sweep_g", kParity | kConverge, "coupling grid start:stop:step"},
        {"sweep_g_over_gc", kParity | kConverge | kPhase, "g/g_c grid start:stop:step"},
        {"n_trunc", kAll, "Fock states kept"},
        {"levels", kSpectrum | kParity | kConverge, "number of lowest levels"},
        {"eps_par", kParity | kPhase, "irregular-parity threshold in (0,1)"},
        {"solver", kSpectrum | kParity | kWave, "dense | sector"},
        {"refine", kSpectrum | kParity, "Rayleigh-quotient refinement of eigenvalues", true},
        {"threads", kParity | kConverge | kPhase, "worker threads, 0 = auto"},
        {"out", kAll, "output directory"},
        {"format", kAll, "csv | json"},
        {"states", kWave, "comma list of level indices"},
        {"basis", kWave, "sigma_x | sigma_z"},
        {"xi_max", kWave, "half-width of the position grid"},
        {"xi_step", kWave, "position grid step"},
        {"truncs", kConverge, "comma list of truncations"},
        {"ref", kConverge, "reference truncation"},
        {"deltas", kPhase, "comma list of delta values"},
        {"pairs", kPhase, "comma list of pair indices"},
    };
    return keys;
}

const KeySpec* find_key(std::string_view key) {
    for (const auto& k : key_table())
        if (key == k.key) return &k;
    return nullptr;
}

std::string flag_name(std::string_view key) {
    std::string f = "--" + std::string(key);
    std::replace(f.begin(), f.end(), '_', '-');
    return f;
}

std::map<std::string, std::string> defaults_for(Subcommand c) {
    std::map<std::string, std::string> d = {
        {"n_trunc", "1000"}, {"out", "rabi_out"}, {"format", "csv"}, {"solver", "dense"},
        {"refine", "false"}, {"threads", "0"},    {"eps_par", "0.1"}, {"states", "0,1"},
        {"basis", "sigma_x"}, {"truncs", "200,400,1000"}, {"ref", "2000"},
        {"deltas", "1,2,5,10,25,50"}, {"pairs", "0,1"},
    };
    d["levels"] = c == Subcommand::converge ? "2" : "8";
    const unsigned b = bit(c);
    for (auto it = d.begin(); it != d.end();) {
        const KeySpec* k = find_key(it->first);
        if (!(k->commands & b))
            it = d.erase(it);
        else
            ++it;
    }
    return d;
}

std::optional<std::string> default_coupling_grid(Subcommand c) {
    switch (c) {
        case Subcommand::parity: return "0:2:0.005";
        case Subcommand::converge: return "0:6:0.05";
        case Subcommand::phase_diagram: return "0:2.5:0.005";
        default: return std::nullopt;
    }
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string describe(const std::string& key, const std::string& source) { return key + " (" + source + ")"; }

double parse_double(const std::string& text, const std::string& what) {
    double v = 0.0;
    const char* b = text.data();
    const char* e = b + text.size();
    if (!text.empty() && text.front() == '+') ++b;
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || b == e)
        throw ConfigError("malformed number '" + text + "' for " + what);
    if (!std::isfinite(v)) throw ConfigError("non-finite value '" + text + "' for " + what);
    return v;
}

std::size_t parse_count(const std::string& text, const std::string& what) {
    unsigned long long v = 0;
    const char* b = text.data();
    const char* e = b + text.size();
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || b == e)
        throw ConfigError("malformed non-negative integer '" + text + "' for " + what);
    return static_cast<std::size_t>(v);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        parts.push_back(trim(std::string_view(text).substr(start, pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    for (const auto& p : split(text, ',')) out.push_back(parse_double(p, what));
    return out;
}

std::vector<std::size_t> parse_count_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    for (const auto& p : split(text, ',')) out.push_back(parse_count(p, what));
    return out;
}

GridSpec parse_grid(const std::string& text, const std::string& what) {
    const auto p = split(text, ':');
    if (p.size() != 3) throw ConfigError("grid '" + text + "' for " + what + " must read start:stop:step");
    GridSpec g{parse_double(p[0], what), parse_double(p[1], what), parse_double(p[2], what)};
    if (!(g.step > 0.0)) throw ConfigError("grid step must be > 0 for " + what);
    if (g.stop < g.start) throw ConfigError("grid stop below start for " + what);
    return g;
}

bool parse_bool(const std::string& text, const std::string& what) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError("malformed boolean '" + text + "' for " + what);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Source {
    std::string value;
    std::string origin;
};

// A manifest stores the resolved values; a flat file stores key = value lines.
std::pair<std::optional<std::string>, std::map<std::string, Source>> load_config_source(const fs::path& path) {
    const std::string text = read_file(path);
    std::map<std::string, Source> out;
    std::optional<std::string> command;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
        }
        if (!j.contains("config") || !j["config"].is_object())
            throw ConfigError("manifest '" + path.string() + "' has no config object");
        if (j.contains("command") && j["command"].is_string()) command = j["command"].get<std::string>();
        for (const auto& [k, v] : j["config"].items()) {
            if (!v.is_string()) throw ConfigError("manifest value for '" + k + "' is not a string");
            out[k] = Source{v.get<std::string>(), "manifest " + path.string()};
        }
        return {command, out};
    }
    for (auto& kv : read_key_values(text, path.string())) {
        if (kv.key == "command") {
            if (command) throw ConfigError("key 'command' given twice in " + path.string());
            command = kv.value;
            continue;
        }
        if (auto it = out.find(kv.key); it != out.end())
            throw ConfigError("key '" + kv.key + "' given twice (file " + it->second.origin + " and file " + kv.origin +
                              ")");
        out[kv.key] = Source{kv.value, "file " + kv.origin};
    }
    return {command, out};
}

}  // namespace

std::vector<KeyValue> read_key_values(std::string_view text, const std::string& origin) {
    std::vector<KeyValue> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value at " + where);
        KeyValue kv{trim(std::string_view(stripped).substr(0, eq)), trim(std::string_view(stripped).substr(eq + 1)),
                    where};
        std::replace(kv.key.begin(), kv.key.end(), '-', '_');
        if (kv.key.empty()) throw ConfigError("empty key at " + where);
        if (kv.value.empty()) throw ConfigError("empty value for '" + kv.key + "' at " + where);
        out.push_back(std::move(kv));
    }
    return out;
}

// ---------------------------------------------------------------------------
// parse_config

namespace {

struct CommandFlags {
    CLI::App* app{nullptr};
    std::map<std::string, std::string> raw;
    std::map<std::string, CLI::Option*> options;
    std::string config_path;
};

RunConfig resolve(Subcommand cmd, const std::map<std::string, Source>& flags,
                  const std::map<std::string, Source>& file) {
    const unsigned b = bit(cmd);
    for (const auto& [key, src] : file) {
        const KeySpec* spec = find_key(key);
        if (!spec) throw ConfigError("unknown key '" + key + "' (" + src.origin + ")");
        if (!(spec->commands & b))
            throw ConfigError("key '" + key + "' (" + src.origin + ") does not apply to command " + to_string(cmd));
    }

    std::map<std::string, Source> merged;
    for (const auto& [key, value] : defaults_for(cmd)) merged[key] = Source{value, "default"};
    for (const auto& [key, src] : file) merged[key] = src;
    for (const auto& [key, src] : flags) {
        auto it = file.find(key);
        merged[key] = it == file.end()
                          ? src
                          : Source{src.value, src.origin + ", overrides " + it->second.origin + " = " + it->second.value};
    }

    // Coupling keys are mutually exclusive across all sources.
    std::vector<std::pair<std::string, std::string>> coupling;
    for (const char* key : {"g", "g_over_gc", "sweep_g", "sweep_g_over_gc"})
        if (auto it = merged.find(key); it != merged.end()) coupling.emplace_back(key, it->second.origin);
    if (coupling.size() > 1)
        throw ConfigError("conflicting coupling specifications: " + describe(coupling[0].first, coupling[0].second) +
                          " and " + describe(coupling[1].first, coupling[1].second) + "; give only one");
    if (coupling.empty()) {
        if (auto grid = default_coupling_grid(cmd))
            merged["sweep_g_over_gc"] = Source{*grid, "default"};
        else
            throw ConfigError("command " + to_string(cmd) + " needs --g or --g-over-gc");
    }
    if ((b & (kSpectrum | kParity | kWave | kConverge)) && !merged.count("delta"))
        throw ConfigError("command " + to_string(cmd) + " needs --delta");

    RunConfig c;
    c.command = cmd;
    for (const auto& [key, src] : merged) {
        c.values[key] = src.value;
        c.provenance[key] = src.origin;
        const std::string what = describe(key, src.origin);
        const std::string& v = src.value;
        if (key == "delta") c.delta = parse_double(v, what);
        else if (key == "g") c.g = parse_double(v, what);
        else if (key == "g_over_gc") c.g_over_gc = parse_double(v, what);
        else if (key == "sweep_g") c.sweep_g = parse_grid(v, what);
        else if (key == "sweep_g_over_gc") c.sweep_g_over_gc = parse_grid(v, what);
        else if (key == "n_trunc") c.n_trunc = parse_count(v, what);
        else if (key == "levels") c.levels = parse_count(v, what);
        else if (key == "eps_par") c.eps_par = parse_double(v, what);
        else if (key == "solver") {
            if (v == "dense") c.solver = SolverPath::dense;
            else if (v == "sector") c.solver = SolverPath::tridiagonal;
            else throw ConfigError("solver must be dense or sector, got '" + v + "' for " + what);
        } else if (key == "refine") c.refine = parse_bool(v, what);
        else if (key == "threads") c.threads = static_cast<unsigned>(parse_count(v, what));
        else if (key == "out") c.out = v;
        else if (key == "format") {
            if (v == "csv") c.format = OutputFormat::csv;
            else if (v == "json") c.format = OutputFormat::json;
            else throw ConfigError("format must be csv or json, got '" + v + "' for " + what);
        } else if (key == "states") c.states = parse_count_list(v, what);
        else if (key == "basis") {
            if (v == "sigma_x") c.basis = SpinBasis::sigma_x;
            else if (v == "sigma_z") c.basis = SpinBasis::sigma_z;
            else throw ConfigError("basis must be sigma_x or sigma_z, got '" + v + "' for " + what);
        } else if (key == "xi_max") c.xi_max = parse_double(v, what);
        else if (key == "xi_step") c.xi_step = parse_double(v, what);
        else if (key == "truncs") c.truncs = parse_count_list(v, what);
        else if (key == "ref") c.ref = parse_count(v, what);
        else if (key == "deltas") c.deltas = parse_double_list(v, what);
        else if (key == "pairs") c.pairs = parse_count_list(v, what);
    }

    auto origin = [&](const char* key) { return describe(key, c.provenance[key]); };
    if (c.delta < 0.0) throw ConfigError("delta must be >= 0: " + origin("delta"));
    if (c.g && *c.g < 0.0) throw ConfigError("g must be >= 0: " + origin("g"));
    if (c.g_over_gc && *c.g_over_gc < 0.0) throw ConfigError("g_over_gc must be >= 0: " + origin("g_over_gc"));
    if (c.n_trunc < 2) throw ConfigError("n_trunc must be >= 2: " + origin("n_trunc"));
    if (c.values.count("eps_par") && !(c.eps_par > 0.0 && c.eps_par < 1.0))
        throw ConfigError("eps_par must lie in (0,1): " + origin("eps_par"));
    if (c.values.count("levels")) {
        if (c.levels < 1 || c.levels > 2 * c.n_trunc)
            throw ConfigError("levels must lie in [1, 2*n_trunc]: " + origin("levels"));
        if (cmd == Subcommand::parity && c.levels % 2 != 0)
            throw ConfigError("parity needs an even number of levels: " + origin("levels"));
    }
    if (c.xi_max && !(*c.xi_max > 0.0)) throw ConfigError("xi_max must be > 0: " + origin("xi_max"));
    if (c.xi_step && !(*c.xi_step > 0.0)) throw ConfigError("xi_step must be > 0: " + origin("xi_step"));
    if (c.values.count("out") && c.out.empty()) throw ConfigError("out must not be empty");
    return c;
}

}  // namespace

RunConfig parse_config(const std::vector<std::string>& args) {
    CLI::App app{"Exact diagonalization of the quantum Rabi model", kToolName};
    app.set_version_flag("--version", std::string(kToolName) + " " + tool_version());
    app.require_subcommand(1);

    std::map<Subcommand, CommandFlags> commands;
    const std::pair<Subcommand, const char*> described[] = {
        {Subcommand::spectrum, "lowest eigenvalues at one coupling"},
        {Subcommand::parity, "parity expectations and pair sums over a coupling grid"},
        {Subcommand::wavefunction, "two-component position wavefunctions and Fock populations"},
        {Subcommand::converge, "energy differences against a reference truncation"},
        {Subcommand::phase_diagram, "irregular-parity onset per delta and pair"},
    };
    for (const auto& [cmd, text] : described) {
        CommandFlags& cf = commands[cmd];
        cf.app = app.add_subcommand(to_string(cmd), text);
        cf.app->add_option("--config", cf.config_path, "flat key = value file; flags override it");
        for (const auto& k : key_table()) {
            if (!(k.commands & bit(cmd))) continue;
            if (k.is_switch)
                cf.options[k.key] = cf.app->add_flag(flag_name(k.key), k.help);
            else
                cf.options[k.key] = cf.app->add_option(flag_name(k.key), cf.raw[k.key], k.help);
        }
    }
    std::string replay_manifest;
    std::string replay_out;
    std::string replay_threads;
    CLI::App* replay = app.add_subcommand("replay", "re-run the job recorded in a manifest");
    replay->add_option("manifest", replay_manifest, "manifest.json of an earlier run")->required();
    auto* replay_out_opt = replay->add_option("--out", replay_out, "output directory")->required();
    auto* replay_threads_opt = replay->add_option("--threads", replay_threads, "worker threads, 0 = auto");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp&) {
        for (CLI::App* sub : app.get_subcommands()) throw HelpRequested(sub->help());
        throw HelpRequested(app.help());
    } catch (const CLI::CallForAllHelp&) {
        throw HelpRequested(app.help("", CLI::AppFormatMode::All));
    } catch (const CLI::CallForVersion&) {
        throw HelpRequested(std::string(kToolName) + " " + tool_version() + "\n");
    } catch (const CLI::ParseError& e) {
        throw ConfigError(e.what());
    }

    if (replay->parsed()) {
        auto [command, values] = load_config_source(replay_manifest);
        if (!command) throw ConfigError("manifest '" + replay_manifest + "' records no command");
        std::map<std::string, Source> flags;
        if (replay_out_opt->count()) flags["out"] = Source{replay_out, "flag --out"};
        if (replay_threads_opt->count()) flags["threads"] = Source{replay_threads, "flag --threads"};
        const Subcommand cmd = subcommand_from_string(*command);
        if (!(bit(cmd) & (kParity | kConverge | kPhase))) flags.erase("threads");
        return resolve(cmd, flags, values);
    }

    for (auto& [cmd, cf] : commands) {
        if (!cf.app->parsed()) continue;
        std::map<std::string, Source> flags;
        for (const auto& [key, opt] : cf.options) {
            if (!opt->count()) continue;
            const KeySpec* spec = find_key(key);
            flags[key] = Source{spec->is_switch ? "true" : cf.raw[key], "flag " + flag_name(key)};
        }
        std::map<std::string, Source> file;
        if (!cf.config_path.empty()) {
            auto [command, values] = load_config_source(cf.config_path);
            if (command && *command != to_string(cmd))
                throw ConfigError("config file '" + cf.config_path + "' is for command " + *command +
                                  ", not " + to_string(cmd));
            file = std::move(values);
        }
        return resolve(cmd, flags, file);
    }
    throw ConfigError("no command given");
}

// ---------------------------------------------------------------------------
// tables

std::string format_number(double x) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    if (ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, ptr);
}

namespace {

std::string csv_field(const Cell& c) {
    if (const double* d = std::get_if<double>(&c)) return format_number(*d);
    if (const long long* i = std::get_if<long long>(&c)) return std::to_string(*i);
    if (const std::string* s = std::get_if<std::string>(&c)) {
        if (s->find_first_of(",\"\n") == std::string::npos) return *s;
        std::string q = "\"";
        for (char ch : *s) {
            if (ch == '"') q += '"';
            q += ch;
        }
        return q + "\"";
    }
    return {};
}

std::string json_field(const Cell& c) {
    if (const double* d = std::get_if<double>(&c)) return std::isfinite(*d) ? format_number(*d) : "null";
    if (const long long* i = std::get_if<long long>(&c)) return std::to_string(*i);
    if (const std::string* s = std::get_if<std::string>(&c)) return json(*s).dump();
    return "null";
}

void check_shape(const Table& t) {
    for (const auto& row : t.rows)
        if (row.size() != t.columns.size())
            throw std::logic_error("table " + t.name + " has a row of the wrong width");
}

}  // namespace

std::string render_csv(const Table& t) {
    check_shape(t);
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
    out += '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += csv_field(row[i]);
        }
        out += '\n';
    }
    return out;
}

std::string render_json(const Table& t) {
    check_shape(t);
    std::string out = "{\"name\":" + json(t.name).dump() + ",\"columns\":[";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + json(t.columns[i]).dump();
    out += "],\"rows\":[";
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        out += r ? ",\n[" : "\n[";
        for (std::size_t i = 0; i < t.rows[r].size(); ++i) out += (i ? "," : "") + json_field(t.rows[r][i]);
        out += ']';
    }
    out += "]}\n";
    return out;
}

std::vector<std::vector<std::string>> read_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        any = true;
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else if (ch != '\r') {
            field += ch;
        }
    }
    if (any) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

fs::path temp_sibling(const fs::path& path) {
    return path.parent_path() / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
}

void write_file(const fs::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing: " + std::strerror(errno));
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void rename_into_place(const fs::path& from, const fs::path& to) {
    std::error_code ec;
    fs::rename(from, to, ec);
    if (ec) {
        fs::remove(from, ec);
        throw IoError("cannot rename '" + from.string() + "' to '" + to.string() + "'");
    }
}

}  // namespace

void write_atomic(const fs::path& path, std::string_view contents) {
    const fs::path tmp = temp_sibling(path);
    try {
        write_file(tmp, contents);
    } catch (...) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw;
    }
    rename_into_place(tmp, path);
}

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

// ---------------------------------------------------------------------------
// jobs

std::size_t SentinelLog::failed() const { return static_cast<std::size_t>(std::count(pass.begin(), pass.end(), false)); }

namespace {

long long flag(bool b) { return b ? 1 : 0; }

double hamiltonian_scale(const ModelParams& p, const Truncation& t) {
    const double n = static_cast<double>(t.n_trunc);
    return std::max({1.0, n - 1.0 + 0.5 * p.delta, p.g * std::sqrt(n - 1.0)});
}

void check_residuals(const std::vector<double>& residuals, double scale, const std::string& where) {
    const double tol = tolerance::residual * scale;
    for (std::size_t j = 0; j < residuals.size(); ++j)
        if (!(residuals[j] <= tol))
            throw ConvergenceError("residual " + format_number(residuals[j]) + " above " + format_number(tol) +
                                       " at " + where,
                                   j);
}

std::string point_label(const char* name, double value) { return std::string(name) + "=" + format_number(value); }

Spectrum solve_point(const RunConfig& c, const ModelParams& params, const Truncation& trunc, std::size_t k) {
    const EigOptions opts{true, c.refine};
    return c.solver == SolverPath::dense ? solve_full(params, trunc, k, opts)
                                         : solve_by_sectors(params, trunc, k, nullptr, opts);
}

JobResult spectrum_job(const RunConfig& c) {
    const ModelParams params{c.delta, c.coupling()};
    const Truncation trunc{c.n_trunc};
    const Spectrum s = solve_point(c, params, trunc, c.levels);
    check_residuals(s.residual_norms, s.scale, point_label("g", params.g));

    JobResult r;
    Table t{"spectrum", {"level", "energy", "energy_shifted", "parity", "residual_norm", "degenerate_next"}, {}};
    for (std::size_t j = 0; j < s.count(); ++j)
        t.rows.push_back({static_cast<long long>(j), s.eigenvalues[j], shifted_energy(s.eigenvalues[j], params),
                          parity_expectation(s.vector(j), trunc), s.residual_norms[j], flag(s.degenerate_next[j])});
    r.tables.push_back(std::move(t));
    r.sentinel.labels.push_back(point_label("g", params.g));
    r.sentinel.pass.push_back(tail_populations_pass(s, trunc));
    r.notes.push_back("g_c = " + format_number(critical_coupling(c.delta)) + ", g = " + format_number(params.g));
    return r;
}

JobResult parity_job(const RunConfig& c) {
    const Truncation trunc{c.n_trunc};
    const std::vector<double> grid = c.coupling_grid();
    std::vector<double> ratios;
    if (c.sweep_g_over_gc)
        ratios = c.sweep_g_over_gc->values();
    else if (c.g_over_gc)
        ratios = {*c.g_over_gc};

    SweepOptions opts;
    opts.threads = c.threads;
    opts.eps_par = c.eps_par;
    opts.path = c.solver;
    opts.rayleigh_refine = c.refine;
    const CouplingSweep sweep = coupling_sweep(c.delta, grid, c.levels, trunc, opts);

    JobResult r;
    Table t{"parity",
            {"g", "g_over_gc", "level", "energy", "energy_shifted", "parity", "pair_index", "pair_gap_shifted",
             "pair_parity_sum", "p_even", "p_odd", "sentinel"},
            {}};
    for (std::size_t i = 0; i < sweep.points.size(); ++i) {
        const CouplingPoint& p = sweep.points[i];
        check_residuals(p.residuals, hamiltonian_scale({c.delta, p.g}, trunc), point_label("g", p.g));
        const double ratio = ratios.empty() ? p.g_over_gc : ratios[i];
        for (const StateParity& st : p.report.states) {
            const PairEntry& pair = p.report.pairs[st.level / 2];
            t.rows.push_back({p.g, ratio, static_cast<long long>(st.level), st.energy, st.energy_shifted, st.parity,
                              static_cast<long long>(pair.pair_index), pair.gap_shifted, pair.subspace_trace,
                              st.p_even, st.p_odd, flag(p.sentinel)});
        }
        r.sentinel.labels.push_back(point_label("g", p.g));
        r.sentinel.pass.push_back(p.sentinel);
    }
    r.tables.push_back(std::move(t));
    if (sweep.truncation_inadequate)
        r.notes.push_back("truncation inadequate: sentinel fails at the largest coupling");
    return r;
}

JobResult wavefunction_job(const RunConfig& c) {
    const ModelParams params{c.delta, c.coupling()};
    const Truncation trunc{c.n_trunc};
    if (c.states.empty()) throw ConfigError("states list is empty");
    const std::size_t k = *std::max_element(c.states.begin(), c.states.end()) + 1;
    if (k > trunc.dim()) throw ConfigError("requested state index exceeds the truncated dimension");
    const Spectrum s = solve_point(c, params, trunc, k);
    check_residuals(s.residual_norms, s.scale, point_label("g", params.g));

    const PositionGrid def = PositionGrid::for_coupling(params.g);
    const PositionGrid grid(c.xi_max.value_or(def.xi_max()), c.xi_step.value_or(def.step()));
    const HermiteBasis phi(grid, trunc.n_trunc - 1);

    JobResult r;
    Table summary{"states",
                  {"level", "energy", "energy_shifted", "parity", "p_even", "p_odd", "symmetry_defect",
                   "quadrature_norm"},
                  {}};
    Table photon{"photon", {"level", "n", "population"}, {}};
    const bool sx = c.basis == SpinBasis::sigma_x;
    for (std::size_t j : c.states) {
        const auto v = s.vector(j);
        const auto wf = position_wavefunction(v, grid, trunc, c.basis, &phi);
        Table w{"wavefunction_" + std::to_string(j), {"xi", sx ? "psi_plus" : "psi_up", sx ? "psi_minus" : "psi_down"},
                {}};
        for (std::size_t i = 0; i < wf.xi.size(); ++i) w.rows.push_back({wf.xi[i], wf.first[i], wf.second[i]});
        r.tables.push_back(std::move(w));

        const FockPopulations pop = fock_populations(v, trunc);
        summary.rows.push_back({static_cast<long long>(j), s.eigenvalues[j], shifted_energy(s.eigenvalues[j], params),
                                parity_expectation(v, trunc), pop.p_even, pop.p_odd, symmetry_defect(wf),
                                quadrature_norm(wf)});
        for (std::size_t n = 0; n < pop.photon.size(); ++n)
            photon.rows.push_back({static_cast<long long>(j), static_cast<long long>(n), pop.photon[n]});
    }
    r.tables.push_back(std::move(summary));
    r.tables.push_back(std::move(photon));
    r.sentinel.labels.push_back(point_label("g", params.g));
    r.sentinel.pass.push_back(tail_populations_pass(s, trunc));
    return r;
}

JobResult converge_job(const RunConfig& c) {
    const std::vector<double> grid = c.coupling_grid();
    const ConvergenceSweep sweep = convergence_sweep(c.delta, grid, c.truncs, c.ref, c.levels, c.threads);

    // sentinel per (point, truncation), reference included
    std::vector<std::size_t> all = c.truncs;
    all.push_back(c.ref);
    std::vector<char> ok(grid.size() * all.size(), 1);
    parallel_for(ok.size(), c.threads, [&](std::size_t idx) {
        const std::size_t i = idx / all.size();
        ok[idx] = convergence_sentinel({c.delta, grid[i]}, Truncation{all[idx % all.size()]}, c.levels).pass;
    });

    const std::vector<double> ratios = c.sweep_g_over_gc ? c.sweep_g_over_gc->values() : std::vector<double>{};
    JobResult r;
    Table t{"convergence", {"g", "g_over_gc", "level", "n_trunc", "energy", "reference", "difference", "sentinel"}, {}};
    for (std::size_t i = 0; i < sweep.points.size(); ++i) {
        const ConvergencePoint& p = sweep.points[i];
        const double ratio = ratios.empty() ? p.g_over_gc : ratios[i];
        for (std::size_t l = 0; l < sweep.n_levels; ++l)
            for (std::size_t n = 0; n < sweep.truncations.size(); ++n)
                t.rows.push_back({p.g, ratio, static_cast<long long>(l), static_cast<long long>(sweep.truncations[n]),
                                  p.energies[n][l], p.reference[l], p.differences[n][l],
                                  flag(ok[i * all.size() + n])});
        for (std::size_t n = 0; n < all.size(); ++n) {
            r.sentinel.labels.push_back(point_label("g", p.g) + ",n_trunc=" + std::to_string(all[n]));
            r.sentinel.pass.push_back(ok[i * all.size() + n] != 0);
        }
    }
    r.tables.push_back(std::move(t));
    for (std::size_t l = 0; l < sweep.n_levels; ++l)
        r.notes.push_back("level " + std::to_string(l) + ": differences " +
                          (differences_monotone(sweep, l, 1e-12) ? "" : "not ") +
                          "non-increasing in n_trunc (1e-12 floor)");
    return r;
}

JobResult phase_job(const RunConfig& c) {
    const std::vector<double> ratios = c.sweep_g_over_gc ? c.sweep_g_over_gc->values() : std::vector<double>{};
    if (ratios.empty()) throw ConfigError("phase-diagram needs sweep_g_over_gc");
    const PhaseBoundary pb = phase_boundary_scan(c.deltas, c.pairs, ratios, c.eps_par, Truncation{c.n_trunc}, c.threads);

    JobResult r;
    Table t{"phase_diagram",
            {"delta", "g_c", "pair", "onset_g_over_gc", "resolution", "excluded_points", "degenerate"},
            {}};
    for (const BoundaryRow& row : pb.rows) {
        t.rows.push_back({row.delta, row.g_c, static_cast<long long>(row.pair),
                          row.onset_g_over_gc ? Cell{*row.onset_g_over_gc} : Cell{Empty{}}, row.resolution,
                          static_cast<long long>(row.excluded_points), flag(row.degenerate)});
        r.sentinel.labels.push_back("delta=" + format_number(row.delta) + ",pair=" + std::to_string(row.pair));
        r.sentinel.pass.push_back(row.excluded_points == 0);
    }
    r.tables.push_back(std::move(t));
    r.notes.push_back("transition line at g/g_c = " + format_number(PhaseBoundary::transition_line));
    for (std::size_t k : c.pairs) {
        const auto mono = pb.onset_monotone_in_delta(k);
        r.notes.push_back("pair " + std::to_string(k) + " onset vs delta: " +
                          (!mono ? "fewer than two onsets" : (*mono ? "non-decreasing" : "not monotone")));
    }
    return r;
}

json tolerances_json(const RunConfig& c) {
    json t = {{"residual", tolerance::residual},
              {"orthogonality", tolerance::orthogonality},
              {"degeneracy", tolerance::degeneracy},
              {"path_agreement", tolerance::path_agreement},
              {"sentinel_tail", kSentinelTail}};
    if (c.command == Subcommand::wavefunction) t["boundary_amplitude"] = kBoundaryAmplitude;
    if (c.values.count("eps_par")) t["eps_par"] = c.eps_par;
    return t;
}

}  // namespace

JobResult compute_job(const RunConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    JobResult r;
    switch (config.command) {
        case Subcommand::spectrum: r = spectrum_job(config); break;
        case Subcommand::parity: r = parity_job(config); break;
        case Subcommand::wavefunction: r = wavefunction_job(config); break;
        case Subcommand::converge: r = converge_job(config); break;
        case Subcommand::phase_diagram: r = phase_job(config); break;
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

namespace {

// All data files land as temporaries first; only when every one is on disk
// are they renamed, and the manifest goes last.
void write_outputs(const RunConfig& c, const JobResult& r, int status) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec || !fs::is_directory(c.out))
        throw IoError("cannot create output directory '" + c.out.string() + "': " + ec.message());

    const std::string ext = c.format == OutputFormat::csv ? ".csv" : ".json";
    std::vector<std::pair<fs::path, fs::path>> staged;
    json files = json::array();
    try {
        for (const Table& t : r.tables) {
            const std::string body = c.format == OutputFormat::csv ? render_csv(t) : render_json(t);
            const fs::path final_path = c.out / (t.name + ext);
            const fs::path tmp = temp_sibling(final_path);
            staged.emplace_back(tmp, final_path);
            write_file(tmp, body);
            files.push_back({{"name", t.name + ext}, {"bytes", body.size()}, {"sha256", sha256_hex(body)}});
        }
    } catch (...) {
        for (const auto& [tmp, _] : staged) fs::remove(tmp, ec);
        throw;
    }
    for (const auto& [tmp, final_path] : staged) rename_into_place(tmp, final_path);

    json status_list = json::array();
    for (std::size_t i = 0; i < r.sentinel.pass.size(); ++i)
        status_list.push_back({{"point", r.sentinel.labels[i]}, {"pass", static_cast<bool>(r.sentinel.pass[i])}});
    json manifest = {
        {"tool", kToolName},
        {"version", tool_version()},
        {"command", to_string(c.command)},
        {"config", c.values},
        {"provenance", c.provenance},
        {"tolerances", tolerances_json(c)},
        {"threads", resolve_threads(c.threads)},
        {"wall_seconds", r.wall_seconds},
        {"sentinel", {{"points", r.sentinel.pass.size()}, {"failed", r.sentinel.failed()}, {"status", status_list}}},
        {"files", files},
        {"notes", r.notes},
        {"exit_code", status},
    };
    write_atomic(c.out / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

int run_job(const RunConfig& config, std::ostream& diag) {
    try {
        const JobResult r = compute_job(config);
        const std::size_t failed = r.sentinel.failed();
        const int status = failed ? exit_code::sentinel : exit_code::ok;
        write_outputs(config, r, status);
        for (const auto& n : r.notes) diag << "note: " << n << "\n";
        if (failed) {
            diag << "error: convergence sentinel failed at " << failed << " of " << r.sentinel.pass.size()
                 << " points (tail population >= " << format_number(kSentinelTail) << "); increase --n-trunc\n";
            for (std::size_t i = 0; i < r.sentinel.pass.size(); ++i)
                if (!r.sentinel.pass[i]) diag << "  failed: " << r.sentinel.labels[i] << "\n";
        }
        return status;
    } catch (const ConfigError& e) {
        diag << "config error: " << e.what() << "\n";
        return exit_code::config;
    } catch (const GridError& e) {
        diag << "config error: " << e.what() << "\n";
        return exit_code::config;
    } catch (const std::invalid_argument& e) {
        diag << "config error: " << e.what() << "\n";
        return exit_code::config;
    } catch (const IoError& e) {
        diag << "i/o error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const fs::filesystem_error& e) {
        diag << "i/o error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const ConvergenceError& e) {
        diag << "solver error: " << e.what() << "\n";
        return exit_code::solver;
    } catch (const std::exception& e) {
        diag << "solver error: " << e.what() << "\n";
        return exit_code::solver;
    }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& diag) {
    RunConfig config;
    try {
        config = parse_config(args);
    } catch (const HelpRequested& h) {
        out << h.what();
        return exit_code::ok;
    } catch (const ConfigError& e) {
        diag << "config error: " << e.what() << "\n";
        return exit_code::config;
    } catch (const IoError& e) {
        diag << "i/o error: " << e.what() << "\n";
        return exit_code::io;
    }
    const int status = run_job(config, diag);
    if (status == exit_code::ok || status == exit_code::sentinel)
        out << to_string(config.command) << ": wrote " << config.out.string() << "\n";
    return status;
}

}  // namespace rabi
