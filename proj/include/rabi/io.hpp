// io.hpp - configuration, job dispatch and on-disk formats for rabi-lab

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rabi/eigensolve.hpp"
#include "rabi/position.hpp"

namespace rabi {

enum class Subcommand { spectrum, parity, wavefunction, converge, phase_diagram };
enum class OutputFormat { csv, json };

std::string to_string(Subcommand c);
Subcommand subcommand_from_string(std::string_view name);  // throws ConfigError

/// start:stop:step, inclusive.
struct GridSpec {
    double start{0.0};
    double stop{0.0};
    double step{1.0};
    std::vector<double> values() const;
};

struct RunConfig {
    Subcommand command{Subcommand::spectrum};
    double delta{0.0};
    std::optional<double> g;
    std::optional<double> g_over_gc;
    std::optional<GridSpec> sweep_g;
    std::optional<GridSpec> sweep_g_over_gc;
    std::size_t n_trunc{1000};
    std::size_t levels{8};
    double eps_par{0.1};
    SolverPath solver{SolverPath::dense};
    bool refine{false};
    unsigned threads{0};
    std::filesystem::path out{"rabi_out"};
    OutputFormat format{OutputFormat::csv};
    // wavefunction
    std::vector<std::size_t> states{0, 1};
    SpinBasis basis{SpinBasis::sigma_x};
    std::optional<double> xi_max;
    std::optional<double> xi_step;
    // converge
    std::vector<std::size_t> truncs{200, 400, 1000};
    std::size_t ref{2000};
    // phase-diagram
    std::vector<double> deltas{1, 2, 5, 10, 25, 50};
    std::vector<std::size_t> pairs{0, 1};

    /// Resolved value of every key that applies to the command, as text,
    /// and where each came from ("flag --delta", "file cfg.txt:3", "default").
    std::map<std::string, std::string> values;
    std::map<std::string, std::string> provenance;

    /// Point coupling; requires g or g_over_gc.
    double coupling() const;
    /// Coupling grid from sweep_g or sweep_g_over_gc (or the single point).
    std::vector<double> coupling_grid() const;
};

/// Thrown for --help / --version; what() is the text to print.
class HelpRequested : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses argv-style arguments (without the program name). A config file
/// given with --config supplies defaults that flags override; `replay`
/// takes its values from a previous manifest. Throws ConfigError.
RunConfig parse_config(const std::vector<std::string>& args);

struct KeyValue {
    std::string key;
    std::string value;
    std::string origin;  // "file:line"
};

/// Flat key = value text, '#' starts a comment, '-' in keys reads as '_'.
/// Keys are checked against the command later.
std::vector<KeyValue> read_key_values(std::string_view text, const std::string& origin);

// ---- tables ----

struct Empty {};
using Cell = std::variant<double, long long, std::string, Empty>;

struct Table {
    std::string name;  // file stem
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

/// printf %.17g equivalent; parses back to the identical double.
std::string format_number(double x);

std::string render_csv(const Table& t);
std::string render_json(const Table& t);

/// Splits CSV text into rows of fields (no quoting support beyond what
/// render_csv produces).
std::vector<std::vector<std::string>> read_csv(std::string_view text);

/// Writes to a sibling temporary and renames over `path`. Throws IoError.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view data);

// ---- jobs ----

/// Per-point sentinel state of a job.
struct SentinelLog {
    std::vector<std::string> labels;
    std::vector<bool> pass;
    std::size_t failed() const;
};

struct JobResult {
    std::vector<Table> tables;
    SentinelLog sentinel;
    std::vector<std::string> notes;
    double wall_seconds{0.0};
};

/// Computes all tables of a job without touching the filesystem.
JobResult compute_job(const RunConfig& config);

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int io = 1;
inline constexpr int config = 2;
inline constexpr int solver = 3;
inline constexpr int sentinel = 4;
}  // namespace exit_code

/// Computes, writes data files and manifest.json into config.out, and maps
/// failures to exit codes. Diagnostics go to `diag`.
int run_job(const RunConfig& config, std::ostream& diag);

/// Full CLI entry point: parse, run, report.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& diag);

inline constexpr const char* kToolName = "rabi-lab";
std::string tool_version();

}  // namespace rabi
