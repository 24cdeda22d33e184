#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(EPAR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    return p;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
    CHECK(run("--bogus") == 2);
    CHECK(run("evaluate --checkpoint /nonexistent/model") == 2);
    CHECK(run("synth --n notanumber") == 2);
    auto data = scratch("epar_cli_usage");
    REQUIRE(run("synth --n 10 --dev 4 --out " + data.string()) == 0);
    CHECK(run("train --data " + data.string() + " --out " + (data / "m").string() + " --set no_such_key=1") == 2);
    CHECK(run("train --data /nonexistent/data --out " + (data / "m").string()) == 2);
}

TEST_CASE("synth, train, evaluate, analyze, ablate and trace") {
    auto data = scratch("epar_cli_data");
    REQUIRE(run("synth --hops 2 --n 12 --dev 6 --seed 7 --out " + data.string()) == 0);
    for (const char* f : {"train.json", "dev.json", "gold_chains.json", "annotations.json"}) CHECK(fs::exists(data / f));

    auto model = data / "model";
    REQUIRE(run("train --data " + data.string() + " --out " + model.string() +
                " --set word_dim=6 --set lstm_units=3 --set proposer_hidden=4 --set assembler_hidden=4 --set epochs=1") == 0);
    CHECK(fs::exists(model / "best.ckpt"));
    CHECK(fs::exists(model / "train_log.jsonl"));

    const std::string common = " --data " + data.string() + " --checkpoint " + model.string();
    REQUIRE(run("evaluate" + common + " --subset follows_multiple --out " + (data / "eval.json").string()) == 0);
    auto ev = read_json(data / "eval.json");
    REQUIRE(ev.contains("overall"));
    CHECK(ev["overall"].contains("accuracy"));
    CHECK(ev["overall"]["total"].get<std::size_t>() <= 6);

    REQUIRE(run("analyze-chains" + common + " --selector random --selector tfidf_de --k 3 --seed 1 --out " +
                (data / "a1.json").string()) == 0);
    REQUIRE(run("analyze-chains" + common + " --selector random --selector tfidf_de --k 3 --seed 1 --out " +
                (data / "a2.json").string()) == 0);
    std::ifstream a1(data / "a1.json"), a2(data / "a2.json");
    std::string s1((std::istreambuf_iterator<char>(a1)), {}), s2((std::istreambuf_iterator<char>(a2)), {});
    CHECK(s1 == s2);

    REQUIRE(run("ablate" + common + " --out " + (data / "ablate.json").string()) == 0);
    auto dev = read_json(data / "dev.json");
    const std::string id = dev[0]["id"];
    REQUIRE(run("trace" + common + " --id " + id + " --out " + (data / "trace.json").string()) == 0);
    auto tr = read_json(data / "trace.json");
    CHECK(tr["id"] == id);
    CHECK(!tr["chains"].empty());
    CHECK(run("trace" + common + " --id no-such-id") != 0);
}

TEST_CASE("data root comes from the environment") {
    auto data = scratch("epar_cli_env");
    REQUIRE(run("synth --n 10 --dev 4 --out " + data.string()) == 0);
    auto model = data / "model";
    const std::string env = "EPAR_DATA_DIR=" + data.string() + " ";
    const std::string cmd = env + EPAR_CLI_PATH + " train --out " + model.string() +
                            " --set word_dim=6 --set lstm_units=3 --set proposer_hidden=4 --set assembler_hidden=4 "
                            "--set epochs=1 > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(fs::exists(model / "best.ckpt"));
}
