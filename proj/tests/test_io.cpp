#include <doctest.h>

#include <json.hpp>

#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rabi/error.hpp"
#include "rabi/io.hpp"
#include "rabi/model.hpp"

using namespace rabi;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("rabi_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

double parse(const std::string& s) {
    double v = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
}

std::string config_error(const std::vector<std::string>& args) {
    try {
        parse_config(args);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("flags map onto the config") {
    const RunConfig c = parse_config({"spectrum", "--delta", "1", "--g-over-gc", "2", "--n-trunc", "1000", "--levels", "8"});
    CHECK(c.command == Subcommand::spectrum);
    CHECK(c.delta == 1.0);
    CHECK(c.n_trunc == 1000);
    CHECK(c.levels == 8);
    CHECK(c.coupling() == 2.0 * critical_coupling(1.0));
    CHECK(c.provenance.at("delta") == "flag --delta");
    CHECK(c.provenance.at("levels") == "flag --levels");
    CHECK(c.provenance.at("format") == "default");
}

TEST_CASE("flags override the config file and the override is recorded") {
    TempDir dir;
    const fs::path cfg = dir.path / "run.cfg";
    std::ofstream(cfg) << "# sample\ndelta = 50\ng-over-gc = 1.2\nlevels=4   # trailing\n";
    const RunConfig c = parse_config({"spectrum", "--config", cfg.string(), "--delta", "1"});
    CHECK(c.delta == 1.0);
    CHECK(c.levels == 4);
    CHECK(*c.g_over_gc == 1.2);
    CHECK(c.provenance.at("delta").find("flag --delta") == 0);
    CHECK(c.provenance.at("delta").find("overrides file " + cfg.string() + ":2 = 50") != std::string::npos);
    CHECK(c.provenance.at("levels") == "file " + cfg.string() + ":4");
}

TEST_CASE("conflicting coupling specifications name both sources") {
    std::string msg = config_error({"spectrum", "--delta", "1", "--g", "1", "--g-over-gc", "1"});
    CHECK(msg.find("g (flag --g)") != std::string::npos);
    CHECK(msg.find("g_over_gc (flag --g-over-gc)") != std::string::npos);

    TempDir dir;
    const fs::path cfg = dir.path / "c.cfg";
    std::ofstream(cfg) << "g = 0.5\n";
    msg = config_error({"spectrum", "--config", cfg.string(), "--delta", "1", "--g-over-gc", "1"});
    CHECK(msg.find("file " + cfg.string() + ":1") != std::string::npos);
    CHECK(msg.find("flag --g-over-gc") != std::string::npos);

    msg = config_error({"parity", "--delta", "1", "--g", "1", "--sweep-g-over-gc", "0:1:0.5"});
    CHECK(msg.find("conflicting") != std::string::npos);
}

TEST_CASE("bad keys and values are rejected") {
    TempDir dir;
    const fs::path unknown = dir.path / "u.cfg";
    std::ofstream(unknown) << "delta = 1\nfoo = 2\n";
    CHECK(config_error({"spectrum", "--config", unknown.string(), "--g", "1"}).find("unknown key 'foo'") !=
          std::string::npos);
    const fs::path misplaced = dir.path / "m.cfg";
    std::ofstream(misplaced) << "truncs = 100,200\n";
    CHECK(config_error({"spectrum", "--config", misplaced.string(), "--g", "1", "--delta", "1"})
              .find("does not apply") != std::string::npos);
    const fs::path twice = dir.path / "t.cfg";
    std::ofstream(twice) << "delta = 1\ndelta = 2\n";
    CHECK(config_error({"spectrum", "--config", twice.string(), "--g", "1"}).find("twice") != std::string::npos);
    const fs::path noeq = dir.path / "n.cfg";
    std::ofstream(noeq) << "delta 1\n";
    CHECK(config_error({"spectrum", "--config", noeq.string(), "--g", "1"}).find("key = value") != std::string::npos);

    CHECK(config_error({"spectrum", "--delta", "1x", "--g", "1"}).find("malformed number '1x'") != std::string::npos);
    CHECK(config_error({"spectrum", "--delta", "nan", "--g", "1"}).find("non-finite") != std::string::npos);
    CHECK(config_error({"spectrum", "--delta", "-1", "--g", "1"}).find("delta must be >= 0") != std::string::npos);
    CHECK(config_error({"spectrum", "--delta", "1", "--g", "1", "--n-trunc", "1"}).find("n_trunc") !=
          std::string::npos);
    CHECK(config_error({"spectrum", "--delta", "1", "--g", "1", "--n-trunc", "-5"}).find("malformed") !=
          std::string::npos);
    CHECK(config_error({"parity", "--delta", "1", "--levels", "3"}).find("even") != std::string::npos);
    CHECK(config_error({"parity", "--delta", "1", "--sweep-g", "0:1"}).find("start:stop:step") != std::string::npos);
    CHECK(config_error({"parity", "--delta", "1", "--sweep-g", "0:1:0"}).find("step") != std::string::npos);
    CHECK(config_error({"parity", "--delta", "1", "--eps-par", "1.5"}).find("eps_par") != std::string::npos);
    CHECK(config_error({"spectrum", "--delta", "1"}).find("--g") != std::string::npos);
    CHECK(config_error({"spectrum", "--g", "1"}).find("--delta") != std::string::npos);
    CHECK_FALSE(config_error({"spectrum", "--delta", "1", "--g", "1", "--bogus", "3"}).empty());
    CHECK_FALSE(config_error({"frobnicate"}).empty());
    CHECK_FALSE(config_error({}).empty());
}

TEST_CASE("help is not an error") {
    CHECK_THROWS_AS((parse_config({"--help"})), HelpRequested);
    CHECK_THROWS_AS((parse_config({"parity", "--help"})), HelpRequested);
    CHECK_THROWS_AS((parse_config({"--version"})), HelpRequested);
}

TEST_CASE("numbers round-trip bit-exactly through text") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::uint64_t> bits;
    int checked = 0;
    while (checked < 20000) {
        const std::uint64_t b = bits(rng);
        double x;
        std::memcpy(&x, &b, sizeof x);
        if (!std::isfinite(x)) continue;
        const std::string s = format_number(x);
        const double y = parse(s);
        std::uint64_t back;
        std::memcpy(&back, &y, sizeof y);
        REQUIRE(back == b);
        ++checked;
    }
    CHECK(format_number(0.1) == "0.10000000000000001");
    CHECK(format_number(-4.0) == "-4");
}

TEST_CASE("csv write then read gives identical values") {
    Table t{"demo", {"a", "b", "c", "d"}, {}};
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 1e3);
    for (int i = 0; i < 200; ++i)
        t.rows.push_back({nd(rng) * std::pow(10.0, i % 40 - 20), static_cast<long long>(i), std::string("x,\"y\""), Empty{}});
    const auto rows = read_csv(render_csv(t));
    REQUIRE(rows.size() == t.rows.size() + 1);
    CHECK(rows[0] == std::vector<std::string>{"a", "b", "c", "d"});
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        CHECK(parse(rows[i + 1][0]) == std::get<double>(t.rows[i][0]));
        CHECK(rows[i + 1][1] == std::to_string(i));
        CHECK(rows[i + 1][2] == "x,\"y\"");
        CHECK(rows[i + 1][3].empty());
    }
}

TEST_CASE("json tables parse back to the same doubles") {
    Table t{"demo", {"x", "n", "s", "none"}, {{1.0 / 3.0, 7LL, std::string("a\"b"), Empty{}}, {-2.5e-300, -1LL, std::string(""), NAN}}};
    const auto j = nlohmann::json::parse(render_json(t));
    CHECK(j["name"] == "demo");
    CHECK(j["columns"].size() == 4);
    CHECK(j["rows"][0][0].get<double>() == 1.0 / 3.0);
    CHECK(j["rows"][0][1].get<long long>() == 7);
    CHECK(j["rows"][0][2].get<std::string>() == "a\"b");
    CHECK(j["rows"][0][3].is_null());
    CHECK(j["rows"][1][0].get<double>() == -2.5e-300);
    CHECK(j["rows"][1][3].is_null());
}

TEST_CASE("key value reader") {
    const auto kv = read_key_values("a = 1\n\n  # c\nb-c=x y # z\n", "f");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0].key == "a");
    CHECK(kv[0].origin == "f:1");
    CHECK(kv[1].key == "b_c");
    CHECK(kv[1].value == "x y");
    CHECK(kv[1].origin == "f:4");
    CHECK_THROWS_AS(read_key_values("a =\n", "f"), ConfigError);
}

TEST_CASE("parity table schema") {
    RunConfig c = parse_config({"parity", "--delta", "2", "--sweep-g-over-gc", "0:1:0.5", "--levels", "4", "--n-trunc", "40"});
    const JobResult r = compute_job(c);
    REQUIRE(r.tables.size() == 1);
    const std::string csv = render_csv(r.tables[0]);
    CHECK(csv.substr(0, csv.find('\n')) ==
          "g,g_over_gc,level,energy,energy_shifted,parity,pair_index,pair_gap_shifted,pair_parity_sum,p_even,p_odd,"
          "sentinel");
    CHECK(r.tables[0].rows.size() == 3 * 4);
    CHECK(std::get<double>(r.tables[0].rows[4][1]) == 0.5);
    CHECK(r.sentinel.pass.size() == 3);
}

TEST_CASE("wavefunction table schema") {
    RunConfig c = parse_config({"wavefunction", "--delta", "1", "--g", "0.3", "--n-trunc", "30", "--states", "0"});
    const JobResult r = compute_job(c);
    REQUIRE(r.tables.size() == 3);
    CHECK(r.tables[0].name == "wavefunction_0");
    const std::string csv = render_csv(r.tables[0]);
    CHECK(csv.substr(0, csv.find('\n')) == "xi,psi_plus,psi_minus");
    c = parse_config({"wavefunction", "--delta", "1", "--g", "0.3", "--n-trunc", "30", "--states", "0", "--basis", "sigma_z"});
    CHECK(compute_job(c).tables[0].columns == std::vector<std::string>{"xi", "psi_up", "psi_down"});
}

TEST_CASE("run writes data, manifest and digests; replay reproduces bytes") {
    TempDir dir;
    const fs::path out = dir.path / "run";
    std::ostringstream diag;
    const RunConfig c = parse_config({"parity", "--delta", "5", "--sweep-g-over-gc", "0:1.5:0.25", "--levels", "4",
                                      "--n-trunc", "60", "--out", out.string(), "--threads", "2"});
    REQUIRE(run_job(c, diag) == exit_code::ok);
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["command"] == "parity");
    CHECK(manifest["exit_code"] == 0);
    CHECK(manifest["sentinel"]["failed"] == 0);
    CHECK(manifest["sentinel"]["points"] == 7);
    REQUIRE(manifest["files"].size() == 1);
    const std::string body = slurp(out / "parity.csv");
    CHECK(manifest["files"][0]["name"] == "parity.csv");
    CHECK(manifest["files"][0]["sha256"] == sha256_hex(body));
    CHECK(manifest["tolerances"]["residual"] == 1e-11);
    std::size_t entries = 0;
    for (const auto& e : fs::directory_iterator(out)) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 2);

    const fs::path again = dir.path / "again";
    const RunConfig r = parse_config({"replay", (out / "manifest.json").string(), "--out", again.string()});
    CHECK(r.provenance.at("delta").find("manifest") == 0);
    REQUIRE(run_job(r, diag) == exit_code::ok);
    CHECK(slurp(again / "parity.csv") == body);
}

TEST_CASE("sha256 of a known string") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("unwritable output path fails without partial files") {
    TempDir dir;
    const fs::path blocker = dir.path / "file";
    std::ofstream(blocker) << "x";
    std::ostringstream diag;
    const RunConfig c =
        parse_config({"spectrum", "--delta", "1", "--g", "0.5", "--n-trunc", "20", "--out", (blocker / "sub").string()});
    CHECK(run_job(c, diag) == exit_code::io);
    CHECK(diag.str().find("i/o error") != std::string::npos);
    std::size_t entries = 0;
    for (const auto& e : fs::directory_iterator(dir.path)) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 1);
}

TEST_CASE("atomic write leaves no temporary behind") {
    TempDir dir;
    write_atomic(dir.path / "a.txt", "hello");
    write_atomic(dir.path / "a.txt", "world");
    CHECK(slurp(dir.path / "a.txt") == "world");
    std::size_t entries = 0;
    for (const auto& e : fs::directory_iterator(dir.path)) {
        (void)e;
        ++entries;
    }
    CHECK(entries == 1);
    CHECK_THROWS_AS(write_atomic(dir.path / "missing" / "b.txt", "x"), IoError);
}

TEST_CASE("sentinel failure writes outputs and exits with its own code") {
    TempDir dir;
    std::ostringstream diag;
    const RunConfig c = parse_config({"spectrum", "--delta", "1", "--g-over-gc", "6", "--n-trunc", "50", "--levels", "2",
                                      "--out", dir.path.string()});
    CHECK(run_job(c, diag) == exit_code::sentinel);
    CHECK(fs::exists(dir.path / "spectrum.csv"));
    const auto manifest = nlohmann::json::parse(slurp(dir.path / "manifest.json"));
    CHECK(manifest["exit_code"] == exit_code::sentinel);
    CHECK(manifest["sentinel"]["failed"] == 1);
    CHECK(diag.str().find("sentinel") != std::string::npos);
}

TEST_CASE("config errors map to exit code 2") {
    std::ostringstream out, diag;
    CHECK(run_cli({"spectrum", "--g", "1", "--g-over-gc", "1", "--delta", "1"}, out, diag) == exit_code::config);
    CHECK(run_cli({"--help"}, out, diag) == exit_code::ok);
    TempDir dir;
    // grid too small for the state
    CHECK(run_cli({"wavefunction", "--delta", "1", "--g", "3", "--n-trunc", "120", "--xi-max", "3", "--out",
                   dir.path.string()},
                  out, diag) == exit_code::config);
}

TEST_CASE("json output format") {
    TempDir dir;
    std::ostringstream diag;
    const RunConfig c = parse_config({"converge", "--delta", "1", "--sweep-g-over-gc", "0:1:0.5", "--truncs", "40,60",
                                      "--ref", "100", "--format", "json", "--out", dir.path.string()});
    REQUIRE(run_job(c, diag) == exit_code::ok);
    const auto j = nlohmann::json::parse(slurp(dir.path / "convergence.json"));
    CHECK(j["columns"][6] == "difference");
    CHECK(j["rows"].size() == 3 * 2 * 2);
}

TEST_CASE("phase diagram job") {
    const RunConfig c = parse_config({"phase-diagram", "--deltas", "0,1", "--pairs", "0", "--sweep-g-over-gc",
                                      "0:1:0.5", "--n-trunc", "40"});
    const JobResult r = compute_job(c);
    REQUIRE(r.tables.size() == 1);
    CHECK(r.tables[0].columns[3] == "onset_g_over_gc");
    CHECK(r.tables[0].rows.size() == 2);
    CHECK(std::holds_alternative<Empty>(r.tables[0].rows[1][3]));
}

}
