#include "doctest.h"

#include "maniforge/config.hpp"

#include <string>

using namespace maniforge;

TEST_CASE("minimal config fills every default") {
    RunConfig c = config_parse("[model]\nname = Saddle2\ntau = 0.6931471805599453\n");
    CHECK(c.model_name == "Saddle2");
    CHECK(c.tau == doctest::Approx(std::log(2.0)));
    CHECK(c.scheme_kind == "ExactDuhamel");
    CHECK(c.rho == 1.0);
    CHECK(c.delta == 0.5);
    CHECK(c.epsilon == doctest::Approx(1.0));  // 2 rho delta
    CHECK(c.grid == 33);
    CHECK(c.interpolation == "multilinear");
    CHECK(c.out_dir == "out");
}

TEST_CASE("qualified keys and section keys are interchangeable") {
    RunConfig a = config_parse("model.name = Saddle2\nmodel.tau = 0.5\nmanifold.rho = 2\n");
    RunConfig b = config_parse("[model]\nname = Saddle2\ntau = 0.5\n[manifold]\nrho = 2\n");
    CHECK(a == b);
    CHECK(a.hash() == b.hash());
}

TEST_CASE("duplicate keys are rejected naming both lines") {
    std::string text = "[model]\nname = Saddle2\ntau = 1\ntau = 2\n";
    try {
        config_parse(text);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("line 4") != std::string::npos);
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("model.tau") != std::string::npos);
    }
}

TEST_CASE("unknown keys, bad types and ranges are named") {
    CHECK_THROWS_AS(config_parse("[model]\nname = Saddle2\ntau = 1\nbogus = 3\n"), ConfigError);
    CHECK_THROWS_AS(config_parse("[model]\nname = Saddle2\ntau = abc\n"), ConfigError);
    CHECK_THROWS_AS(config_parse("[model]\nname = Saddle2\ntau = 1\n[manifold]\nrho = -1\n"),
                    ConfigError);
    // delta <= 1 is part of the config contract.
    CHECK_THROWS_AS(config_parse("[model]\nname = Saddle2\ntau = 1\n[manifold]\ndelta = 1.5\n"),
                    ConfigError);
    CHECK_THROWS_AS(config_parse("[model]\nname = NSETorus\ntau = 1\n"), ConfigError);
}

TEST_CASE("round trip: parse(render(c)) == c") {
    std::string text =
        "[model]\nname = KuramotoSivashinsky\ntau = 0.25\nmodes = 32\nL = 8.885765876316732\n"
        "[manifold]\nrho = 1.5\ngrid = 17\ninterpolation = cubic\n"
        "[experiment]\nh_values = 0.1, 0.01\nseed = 99\n";
    RunConfig c = config_parse(text);
    RunConfig rt = config_parse(c.render());
    CHECK(c == rt);
    CHECK(c.hash() == rt.hash());
}

TEST_CASE("hash is insensitive to key order and comments") {
    std::string a = "[model]\nname = Saddle2\ntau = 0.5\n[manifold]\nrho = 2\ngrid = 9\n";
    std::string b = "# comment\nmanifold.grid = 9\n[model]\ntau = 0.5\nname = Saddle2\n"
                    "manifold.rho = 2\n";
    CHECK(config_parse(a).hash() == config_parse(b).hash());
    std::string c = "[model]\nname = Saddle2\ntau = 0.5\n[manifold]\nrho = 2.5\ngrid = 9\n";
    CHECK(config_parse(a).hash() != config_parse(c).hash());
}
