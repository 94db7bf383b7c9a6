#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() / ("sfd_cli_" + std::to_string(::getpid()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(const std::string& args) const
    {
        const std::string cmd = "\"" SFD_CLI_PATH "\" " + args + " > \"" + (dir_ / "out.txt").string() + "\" 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::string output() const
    {
        std::ifstream is(dir_ / "out.txt");
        return {std::istreambuf_iterator<char>(is), {}};
    }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, HelpSucceeds) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Cli, UsageErrorsExitWithOne)
{
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("pipeline --mode sideways"), 1);
    EXPECT_EQ(run("--task juggling synth"), 1);
    EXPECT_EQ(run("-c " + path("absent.toml") + " synth"), 1);
    std::ofstream(path("bad.toml")) << "[model]\nlr = -1\n";
    EXPECT_EQ(run("-c " + path("bad.toml") + " synth"), 1);
    EXPECT_NE(output().find("model.lr"), std::string::npos);
}

TEST_F(Cli, MissingCheckpointIsAConfigError)
{
    EXPECT_EQ(run("--out-dir " + path("empty") + " pipeline"), 1);
    EXPECT_NE(output().find("--train"), std::string::npos);
    EXPECT_EQ(run("sample --episode 1 --checkpoint " + path("nope.sfdc") + " -o " + path("f.sfdf")), 1);
}

TEST_F(Cli, CorruptCheckpointIsAPipelineFailure)
{
    std::ofstream(path("junk.sfdc")) << "not a checkpoint";
    EXPECT_EQ(run("sample --episode 1 --checkpoint " + path("junk.sfdc") + " -o " + path("f.sfdf")), 2);
}

TEST_F(Cli, OraclePipelineWritesAReport)
{
    const auto report = path("r.json");
    EXPECT_EQ(run("--task drawer_place pipeline --oracle-flows --seeds 0:2 -o " + report), 0);
    ASSERT_TRUE(fs::exists(report));
    EXPECT_NE(output().find("drawer_place,full,oracle,2,2,1.0000"), std::string::npos);
    EXPECT_EQ(run("report " + report + " --csv " + path("s.csv") + " --svg " + path("s.svg")), 0);
    EXPECT_TRUE(fs::exists(path("s.csv")));
    EXPECT_TRUE(fs::exists(path("s.svg")));
}

TEST_F(Cli, ReportRejectsEmptyAndMismatchedInputs)
{
    std::ofstream(path("empty.json")) << R"({"schema":"sfd-run-report","version":1,"task":"packing","mode":"full",
        "flows":"oracle","seed":1,"episodes":[]})";
    EXPECT_EQ(run("report " + path("empty.json")), 1);
    std::ofstream(path("v9.json")) << R"({"schema":"sfd-run-report","version":9,"task":"packing","mode":"full",
        "flows":"oracle","seed":1,"episodes":[]})";
    EXPECT_EQ(run("report " + path("v9.json")), 1);
    EXPECT_NE(output().find("version 9"), std::string::npos);
}

TEST_F(Cli, SingleEpisodeCommandsChain)
{
    const std::string ep = "--task pouring ";
    ASSERT_EQ(run(ep + "sample --episode 3 --oracle -o " + path("f.sfdf")), 0);
    ASSERT_EQ(run(ep + "lift --episode 3 --oracle-depth --flows " + path("f.sfdf") + " -o " + path("t.json")), 0);
    ASSERT_EQ(run(ep + "allocate --episode 3 --trajectories " + path("t.json") + " -o " + path("p.json")), 0);
    ASSERT_EQ(run(ep + "execute --episode 3 --trajectories " + path("t.json") + " --plan " + path("p.json") +
                  " --events " + path("e.jsonl")),
              0);
    EXPECT_EQ(output().rfind("success", 0), 0u);
    EXPECT_GT(fs::file_size(path("e.jsonl")), 0u);
}
