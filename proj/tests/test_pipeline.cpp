#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "ecgi/config.hpp"
#include "ecgi/errors.hpp"
#include "ecgi/io.hpp"
#include "ecgi/pipeline.hpp"

using namespace ecgi;
namespace fs = std::filesystem;
namespace {

/// Scratch directory, fresh for this process.
fs::path scratch_root() {
    const fs::path root =
        fs::temp_directory_path() / ("ecgi_pipeline_" + std::to_string(getpid()));
    return root;
}

RunConfig tiny_config(const std::string& name) {
    RunConfig rc;
    rc.scenario.name = name;
    rc.scenario.geometry.forward_angular_nodes = 96;
    rc.scenario.geometry.myocardium_radial_layers = 3;
    rc.scenario.geometry.forward_torso_radial_layers = 8;
    rc.scenario.geometry.inverse_angular_nodes = 64;
    rc.scenario.geometry.inverse_torso_radial_layers = 6;
    rc.scenario.stimuli.push_back({});
    rc.scenario.t_end_ms = 90.0;
    rc.scenario.dt_sim_ms = 0.1;
    rc.validate();
    return rc;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string(std::istreambuf_iterator<char>(is), {});
}

/// Relative paths of all artifact files under a scenario directory.
std::vector<fs::path> artifact_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension();
        if (ext == ".csv" || ext == ".json") files.push_back(fs::relative(entry.path(), dir));
    }
    std::sort(files.begin(), files.end());
    return files;
}
} // namespace

TEST_CASE("two runs with one seed leave byte-identical artifacts") {
    const RunConfig rc = tiny_config("det");
    RunOptions a, b;
    a.out_dir = (scratch_root() / "det_a").string();
    b.out_dir = (scratch_root() / "det_b").string();
    fs::remove_all(a.out_dir);
    fs::remove_all(b.out_dir);

    Pipeline pa(rc, a);
    pa.run_all();
    Pipeline pb(rc, b);
    pb.run_all();

    const fs::path da = fs::path(a.out_dir) / "det";
    const fs::path db = fs::path(b.out_dir) / "det";
    const std::vector<fs::path> files = artifact_files(da);
    CHECK(files == artifact_files(db));
    REQUIRE(!files.empty());

    int compared = 0;
    for (const fs::path& rel : files) {
        if (rel.filename() == "manifest.json") continue; // carries wall-clock timings
        CAPTURE(rel.string());
        CHECK(slurp(da / rel) == slurp(db / rel));
        ++compared;
    }
    CHECK(compared >= 10); // forward series, reconstruction, maps, metrics

    CHECK(pa.manifest()["config_hash"] == pb.manifest()["config_hash"]);
    CHECK(pa.metrics() == pb.metrics());

    fs::remove_all(a.out_dir);
    fs::remove_all(b.out_dir);
}

TEST_CASE("later stages resume from artifacts written by earlier stages") {
    const RunConfig rc = tiny_config("resume");
    RunOptions opt;
    opt.out_dir = (scratch_root() / "resume").string();
    fs::remove_all(opt.out_dir);

    Pipeline first(rc, opt);
    first.run_all();

    // a fresh process would reload the forward artifacts from disk
    RunOptions again = opt;
    again.skip_simulate = true;
    Pipeline second(rc, again);
    second.reconstruct();
    second.postprocess();
    second.evaluate();
    CHECK(second.metrics() == first.metrics());

    // reconstructing without the forward artifacts is a deliberate error
    RunOptions empty = opt;
    empty.out_dir = (scratch_root() / "missing").string();
    empty.skip_simulate = true;
    fs::remove_all(empty.out_dir);
    Pipeline third(rc, empty);
    CHECK_THROWS_AS(third.reconstruct(), ValidationError);

    fs::remove_all(opt.out_dir);
    fs::remove_all(empty.out_dir);
}

TEST_CASE("seed and regularization overrides reach the artifacts") {
    const RunConfig rc = tiny_config("ovr");
    RunOptions base;
    base.out_dir = (scratch_root() / "ovr_base").string();
    fs::remove_all(base.out_dir);
    Pipeline p0(rc, base);
    p0.run_all();

    RunOptions reseeded = base;
    reseeded.out_dir = (scratch_root() / "ovr_seed").string();
    reseeded.seed = 5;
    fs::remove_all(reseeded.out_dir);
    Pipeline p1(rc, reseeded);
    p1.run_all();
    CHECK(p1.manifest()["seed"] == 5);
    CHECK(p0.manifest()["seed"] == 1);
    // different noise draw, different data, different reconstruction
    CHECK(slurp(fs::path(base.out_dir) / "ovr" / "reconstruction" / "z_data.csv") !=
          slurp(fs::path(reseeded.out_dir) / "ovr" / "reconstruction" / "z_data.csv"));
    // but the clean forward simulation is seed-independent
    CHECK(slurp(fs::path(base.out_dir) / "ovr" / "forward" / "z_body.csv") ==
          slurp(fs::path(reseeded.out_dir) / "ovr" / "forward" / "z_body.csv"));

    RunOptions softer = base;
    softer.out_dir = (scratch_root() / "ovr_eps").string();
    softer.epsilon = 1e-5; // default is 1e-2: much weaker smoothing penalty
    fs::remove_all(softer.out_dir);
    Pipeline p2(rc, softer);
    p2.run_all();
    CHECK(p2.manifest()["config_hash"] != p0.manifest()["config_hash"]);

    const TimeSeriesField v0 =
        read_series_csv((fs::path(base.out_dir) / "ovr" / "reconstruction" / "v_rec.csv").string());
    const TimeSeriesField v2 =
        read_series_csv((fs::path(softer.out_dir) / "ovr" / "reconstruction" / "v_rec.csv").string());
    const double amp0 = v0.values.cwiseAbs().maxCoeff();
    const double amp2 = v2.values.cwiseAbs().maxCoeff();
    CHECK(amp2 > 10.0 * amp0); // weaker penalty admits far larger amplitudes

    fs::remove_all(base.out_dir);
    fs::remove_all(reseeded.out_dir);
    fs::remove_all(softer.out_dir);
}

TEST_CASE("config hash tracks every semantic field") {
    const RunConfig rc = tiny_config("hash");
    CHECK(config_hash(rc) == config_hash(tiny_config("hash")));

    RunConfig other = rc;
    other.scenario.noise_fraction = 0.05;
    CHECK(config_hash(other) != config_hash(rc));

    other = rc;
    other.inverse.epsilon *= 2.0;
    CHECK(config_hash(other) != config_hash(rc));

    other = rc;
    other.postprocess.n_thresholds = 7;
    CHECK(config_hash(other) != config_hash(rc));
}

TEST_CASE("the TOML subset loads sections, arrays of tables, and scalars") {
    const fs::path dir = scratch_root() / "toml";
    fs::create_directories(dir);
    const fs::path file = dir / "run.toml";
    {
        std::ofstream os(file);
        os << "# comment line\n"
              "[scenario]\n"
              "name = \"toml_case\" # trailing comment\n"
              "t_end_ms = 80.0\n"
              "rng_seed = 3\n"
              "noise_fraction = 0.02\n"
              "\n"
              "[scenario.geometry]\n"
              "forward_angular_nodes = 96\n"
              "myocardium_radial_layers = 3\n"
              "forward_torso_radial_layers = 8\n"
              "inverse_angular_nodes = 64\n"
              "inverse_torso_radial_layers = 6\n"
              "\n"
              "[[scenario.stimuli]]\n"
              "angle_rad = 0.0\n"
              "\n"
              "[[scenario.stimuli]]\n"
              "angle_rad = 2.0\n"
              "start_ms = 8.0\n"
              "\n"
              "[inverse]\n"
              "epsilon = 0.003\n"
              "\n"
              "[postprocess]\n"
              "smoothing_std_ms = 6.0\n";
    }

    const RunConfig rc = load_run_config(file.string());
    CHECK(rc.scenario.name == "toml_case");
    CHECK(rc.scenario.t_end_ms == 80.0);
    CHECK(rc.scenario.rng_seed == 3);
    CHECK(rc.scenario.noise_fraction == 0.02);
    CHECK(rc.scenario.geometry.inverse_angular_nodes == 64);
    REQUIRE(rc.scenario.stimuli.size() == 2);
    CHECK(rc.scenario.stimuli[1].angle_rad == 2.0);
    CHECK(rc.scenario.stimuli[1].start_ms == 8.0);
    CHECK(rc.scenario.stimuli[0].start_ms == 1.0); // untouched default
    CHECK(rc.inverse.epsilon == 0.003);
    CHECK(rc.postprocess.smoothing_std_ms == 6.0);

    // the loader round-trips through the same JSON schema as the .json path
    const nlohmann::json j = run_config_to_json(rc);
    const RunConfig rc2 = run_config_from_json(j);
    CHECK(config_hash(rc2) == config_hash(rc));

    fs::remove_all(dir);
}

TEST_CASE("config mistakes are reported by field name") {
    const fs::path dir = scratch_root() / "badcfg";
    fs::create_directories(dir);

    auto write_and_load = [&](const char* text) {
        const fs::path file = dir / "bad.toml";
        std::ofstream(file) << text;
        return load_run_config(file.string());
    };

    // unknown keys are rejected, not silently dropped
    try {
        write_and_load("[scenario]\nname = \"x\"\nt_end_mss = 1.0\n");
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("t_end_mss") != std::string::npos);
    }

    // structural errors carry the line number
    try {
        write_and_load("[scenario\nname = \"x\"\n");
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }

    // semantic validation names the offending field
    RunConfig rc = tiny_config("bad");
    rc.scenario.dt_sim_ms = -0.1;
    try {
        rc.validate();
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("dt_sim_ms") != std::string::npos);
    }

    rc = tiny_config("bad");
    rc.inverse.epsilon = 0.0;
    try {
        rc.validate();
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
    }

    // missing files fail loudly
    CHECK_THROWS_AS(load_run_config((dir / "absent.toml").string()), ValidationError);
    // as do unsupported extensions
    std::ofstream(dir / "bad.yaml") << "scenario: {}\n";
    CHECK_THROWS_AS(load_run_config((dir / "bad.yaml").string()), ValidationError);

    fs::remove_all(dir);
}
