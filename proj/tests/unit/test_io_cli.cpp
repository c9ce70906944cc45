#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "msq/errors.hpp"
#include "msq/io.hpp"

using namespace msq;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

// Scratch directory that lives for the duration of one test case.
struct Workdir {
    fs::path root;
    Workdir() {
        root = fs::temp_directory_path() / ("msq_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(root);
    }
    ~Workdir() {
        std::error_code ec;
        fs::remove_all(root, ec);
    }
    fs::path operator/(const std::string& name) const { return root / name; }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

// Runs the command-line tool with `args`, stdout and stderr sent to files
// inside the work directory. Returns the process exit status.
int run_cli(const Workdir& w, const std::string& args, const std::string& tag = "run") {
    const std::string cmd = std::string("\"") + MSQ_CLI_PATH + "\" " + args + " > \"" + (w / (tag + ".out")).string() +
                            "\" 2> \"" + (w / (tag + ".err")).string() + "\"";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_SUITE("io") {
    TEST_CASE("headerless numeric table") {
        std::istringstream in("1,2.5\n-3e-2,4\n");
        const Panel p = parse_csv(in, "t");
        CHECK(p.labels.empty());
        REQUIRE(p.data.rows() == 2);
        REQUIRE(p.data.cols() == 2);
        CHECK(p.data(1, 0) == -0.03);
        CHECK(p.data(0, 1) == 2.5);
    }

    TEST_CASE("header row is detected") {
        std::istringstream in("bankA,bankB,bankC\n1,2,3\n4,5,6\n");
        const Panel p = parse_csv(in, "t");
        CHECK(p.labels == std::vector<std::string>{"bankA", "bankB", "bankC"});
        CHECK(p.data.rows() == 2);
        CHECK(p.data(1, 2) == 6.0);
    }

    TEST_CASE("malformed tables are rejected") {
        std::istringstream ragged("1,2\n3\n");
        CHECK_THROWS_AS(parse_csv(ragged, "t"), DomainError);
        std::istringstream text("1,2\n3,x\n");
        CHECK_THROWS_AS(parse_csv(text, "t"), DomainError);
        CHECK_THROWS_AS(read_csv("/nonexistent/dir/file.csv"), IoError);
    }

    TEST_CASE("matrix output round trips exactly") {
        Matrix m(2, 3);
        m << 0.1, -1.0 / 3.0, 1e-300, 12345.678, std::nextafter(1.0, 2.0), -0.0;
        std::ostringstream out;
        write_matrix_csv(out, m);
        std::istringstream in(out.str());
        const Panel p = parse_csv(in, "t");
        CHECK(p.data == m);
        CHECK(format_double(0.1) == "0.1");
    }

    TEST_CASE("model JSON round trip and field naming") {
        EsdParams p{1.7, Vector(2), Matrix(2, 2)};
        p.xi << 0.25, -1.0;
        p.omega << 0.5, 0.9, 0.9, 2.0;
        const EsdParams back = esd_params_from_json(to_json(p));
        CHECK(back.alpha == p.alpha);
        CHECK(back.xi == p.xi);
        CHECK(back.omega == p.omega);

        Json j = to_json(p);
        j.erase("omega");
        try {
            esd_params_from_json(j, "model");
            FAIL("missing omega accepted");
        } catch (const DomainError& e) {
            CHECK(std::string(e.what()).find("model.omega") != std::string::npos);
        }
        Json bad = to_json(p);
        bad["omega"] = Json::array({Json::array({1.0, 2.0}), Json::array({2.0, 1.0})});
        CHECK_THROWS_AS(esd_params_from_json(bad), NotPositiveDefinite);
    }

    TEST_CASE("file helpers") {
        Workdir w;
        write_text_file((w / "a.txt").string(), "hello");
        CHECK(slurp(w / "a.txt") == "hello");
        CHECK_THROWS_AS(write_text_file((w / "missing" / "a.txt").string(), "x"), IoError);
        spit(w / "bad.json", "{ not json");
        CHECK_THROWS_AS(read_json_file((w / "bad.json").string()), DomainError);
    }
}

TEST_SUITE("cli") {
    TEST_CASE("simulate is deterministic and validates its input") {
        Workdir w;
        const std::string base = "simulate --design dim2 --alpha 1.7 --n 500 --seed 1 --output ";
        REQUIRE(run_cli(w, base + q(w / "a.csv")) == 0);
        REQUIRE(run_cli(w, base + q(w / "b.csv")) == 0);
        const std::string a = slurp(w / "a.csv");
        CHECK(a == slurp(w / "b.csv"));
        std::istringstream in(a);
        const Panel p = parse_csv(in, "a");
        CHECK(p.data.rows() == 500);
        CHECK(p.data.cols() == 2);
        REQUIRE(run_cli(w, "simulate --design dim2 --alpha 1.7 --n 500 --seed 2 --output " + q(w / "c.csv")) == 0);
        CHECK(a != slurp(w / "c.csv"));

        spit(w / "cfg.json", R"({"model": {"alpha": 1.7, "xi": [0, 0]}, "n": 10})");
        CHECK(run_cli(w, "simulate --config " + q(w / "cfg.json") + " --output " + q(w / "d.csv"), "missing") == 2);
        CHECK(slurp(w / "missing.err").find("omega") != std::string::npos);
        CHECK(run_cli(w, "simulate --design dim2 --alpha 1.7 --n 0 --output " + q(w / "e.csv")) == 2);
        CHECK(run_cli(w, "simulate --design dim2 --alpha 1.7 --n 10 --output " + q(w / "no" / "e.csv")) == 4);
        CHECK(run_cli(w, "frobnicate") == 2);
        CHECK(run_cli(w, "estimate --input " + q(w / "absent.csv") + " --output " + q(w / "x.json")) == 4);
    }

    TEST_CASE("estimate, sparse and tune") {
        Workdir w;
        REQUIRE(run_cli(w, "simulate --design dim2 --alpha 1.7 --n 500 --seed 3 --output " + q(w / "y.csv")) == 0);
        const std::string in = " --input " + q(w / "y.csv") + " --seed 4";

        REQUIRE(run_cli(w, "estimate" + in + " --output " + q(w / "e1.json")) == 0);
        REQUIRE(run_cli(w, "estimate" + in + " --output " + q(w / "e2.json")) == 0);
        CHECK(slurp(w / "e1.json") == slurp(w / "e2.json"));
        const Json e = read_json_file((w / "e1.json").string());
        CHECK(e["parameter_names"].size() == 6);
        CHECK(e["std_errors"].size() == 6);
        for (const auto& se : e["std_errors"]) CHECK(se.get<double>() > 0.0);

        REQUIRE(run_cli(w, "sparse" + in + " --lambda 0 --output " + q(w / "s1.json")) == 0);
        REQUIRE(run_cli(w, "sparse" + in + " --lambda 0 --output " + q(w / "s2.json")) == 0);
        CHECK(slurp(w / "s1.json") == slurp(w / "s2.json"));
        const Json s = read_json_file((w / "s1.json").string());
        for (std::size_t i = 0; i < 6; ++i)
            CHECK(std::abs(s["estimates"][i].get<double>() - e["estimates"][i].get<double>()) < 1e-3);
        CHECK(run_cli(w, "sparse" + in + " --output " + q(w / "s3.json")) == 2);
        CHECK(run_cli(w, "sparse" + in + " --lambda -1 --output " + q(w / "s3.json")) == 2);

        REQUIRE(run_cli(w, "tune" + in + " --grid 0.05 --output " + q(w / "t1.json")) == 0);
        REQUIRE(run_cli(w, "tune" + in + " --grid 0.05 --output " + q(w / "t2.json")) == 0);
        CHECK(slurp(w / "t1.json") == slurp(w / "t2.json"));
        const Json t = read_json_file((w / "t1.json").string());
        CHECK(t["selected_lambda"].get<double>() == 0.05);
        CHECK(t["path"].size() == 1);
    }

    TEST_CASE("benchmark writes tables deterministically") {
        Workdir w;
        const std::string args = "benchmark --design dim2 --alpha 1.7 --n 300 --replications 2 --R 5 --seed 7 --output ";
        REQUIRE(run_cli(w, args + q(w / "b1.csv")) == 0);
        REQUIRE(run_cli(w, args + q(w / "b2.csv")) == 0);
        const std::string a = slurp(w / "b1.csv");
        CHECK(a == slurp(w / "b2.csv"));
        CHECK(slurp(w / "b1.csv.records.csv") == slurp(w / "b2.csv.records.csv"));
        CHECK(a.rfind("Par.,True,BIAS,SSD,ECP\n", 0) == 0);
        CHECK(std::count(a.begin(), a.end(), '\n') == 7);
        CHECK(run_cli(w, "benchmark --design dim2 --replications 2 --estimator ridge --output " + q(w / "b3.csv")) == 2);
    }

    TEST_CASE("network export") {
        Workdir w;
        REQUIRE(run_cli(w, "simulate --design dim2 --alpha 1.7 --n 500 --seed 5 --output " + q(w / "y.csv")) == 0);
        spit(w / "panel.csv", "bankA,bankB\n" + slurp(w / "y.csv"));
        const std::string args = "network --input " + q(w / "panel.csv") + " --mc-size 400000 --seed 6 --output ";
        REQUIRE(run_cli(w, args + q(w / "n1"), "n1") == 0);
        REQUIRE(run_cli(w, args + q(w / "n2"), "n2") == 0);
        CHECK(slurp(w / "n1.dot") == slurp(w / "n2.dot"));
        CHECK(slurp(w / "n1.json") == slurp(w / "n2.json"));
        CHECK(slurp(w / "n1.out") == slurp(w / "n2.out"));
        const Json j = read_json_file((w / "n1.json").string());
        CHECK(j["nodes"] == Json::array({"bankA", "bankB"}));
        CHECK(j["pairs"].size() == 1);
        CHECK(j["pairs_tested"].get<int>() == 1);
        CHECK(slurp(w / "n1.out").find("Total number of edges,") != std::string::npos);
        CHECK(run_cli(w, "network --input " + q(w / "y.csv") + " --output " + q(w / "n3")) == 2);
    }

    TEST_CASE("simulated panel is recovered by the estimator") {
        Workdir w;
        REQUIRE(run_cli(w, "simulate --design dim2 --alpha 1.7 --n 2000 --seed 8 --output " + q(w / "y.csv")) == 0);
        REQUIRE(run_cli(w, "estimate --input " + q(w / "y.csv") + " --seed 9 --output " + q(w / "e.json")) == 0);
        const Json e = read_json_file((w / "e.json").string());
        const std::vector<double> truth{1.7, 0.0, 0.0, 0.5, 0.9, 2.0};
        for (std::size_t i = 0; i < truth.size(); ++i) {
            INFO(e["parameter_names"][i].get<std::string>());
            CHECK(std::abs(e["estimates"][i].get<double>() - truth[i]) <= 3.0 * e["std_errors"][i].get<double>());
        }
    }
}
