#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvseg/image_io.hpp"
#include "mvseg/tensor.hpp"

#ifndef MVSEG_CLI_PATH
#error "MVSEG_CLI_PATH must be defined"
#endif

using namespace mvseg;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(MVSEG_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::ostringstream out;
    char buf[512];
    while (fgets(buf, sizeof buf, pipe)) out << buf;
    int status = pclose(pipe);
    return {WEXITSTATUS(status), out.str()};
}

void write_disk_sample(const std::string& img, const std::string& mask, int64_t size,
                       int64_t y0, int64_t x0, int64_t ext) {
    Tensor gray({size, size}, 0.1);
    Tensor m({size, size}, 0.0);
    for (int64_t y = y0; y < std::min(size, y0 + ext); ++y)
        for (int64_t x = x0; x < std::min(size, x0 + ext); ++x) {
            gray.at({y, x}) = 0.9;
            m.at({y, x}) = 1.0;
        }
    io::save_grayscale(img, gray);
    io::save_grayscale(mask, m);
}

} // namespace

TEST_CASE("cli end to end: train, predict, eval, export-curves") {
    fs::path tmp = "mvseg_cli_tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp / "images");
    fs::create_directories(tmp / "masks");
    write_disk_sample((tmp / "images" / "a.png").string(), (tmp / "masks" / "a.png").string(),
                      64, 10, 12, 30);
    write_disk_sample((tmp / "images" / "b.png").string(), (tmp / "masks" / "b.png").string(),
                      64, 28, 6, 20);
    {
        std::ofstream cfg(tmp / "run.cfg");
        cfg << "view_h = 32\nview_w = 32\nstage_depths = 1,1,1,1\nstage_dims = 4,4,8,8\n"
            << "heads = 1,1,2,2\nreduction_factor = 2\nneck_dim = 8\nmlp_ratio = 2\n"
            << "twoway_depth = 1\nmask_feature_dim = 4\ndrm_aux_depth = 2\n"
            << "epochs = 2\nbatch_size = 2\nmax_steps = 2\nlog_every = 1\n";
    }

    RunResult train = run_cli("train --images " + (tmp / "images").string() + " --masks " +
                              (tmp / "masks").string() + " --config " + (tmp / "run.cfg").string() +
                              " --checkpoint-dir " + (tmp / "ckpt").string());
    CHECK(train.exit_code == 0);
    CHECK(train.output.find("final checkpoint:") != std::string::npos);
    CHECK(fs::exists(tmp / "ckpt" / "model_final.ckpt"));

    RunResult pred = run_cli("predict --checkpoint " + (tmp / "ckpt" / "model_final.ckpt").string() +
                             " --images " + (tmp / "images").string() + " --out " +
                             (tmp / "preds").string());
    CHECK(pred.exit_code == 0);
    CHECK(fs::exists(tmp / "preds" / "a.png"));
    CHECK(fs::exists(tmp / "preds" / "b.png"));

    // Predictions are at the working resolution (64), masks already match.
    RunResult eval = run_cli("eval --pred " + (tmp / "preds").string() + " --gt " +
                             (tmp / "masks").string() + " --out " + (tmp / "report.json").string() +
                             " --curves " + (tmp / "curves.csv").string());
    CHECK(eval.exit_code == 0);
    CHECK(eval.output.find("mae:") != std::string::npos);
    CHECK(fs::exists(tmp / "report.json"));
    CHECK(fs::exists(tmp / "curves.csv"));
    {
        std::ifstream csv(tmp / "curves.csv");
        std::string header;
        std::getline(csv, header);
        CHECK(header == "threshold,precision,recall,f");
        int lines = 1;
        std::string line;
        while (std::getline(csv, line))
            if (!line.empty()) ++lines;
        CHECK(lines == 257);
    }

    RunResult exported = run_cli("export-curves --report " + (tmp / "report.json").string() +
                                 " --out " + (tmp / "curves2.csv").string());
    CHECK(exported.exit_code == 0);
    {
        std::ifstream a(tmp / "curves.csv"), b(tmp / "curves2.csv");
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        CHECK(sa.str() == sb.str());
    }

    fs::remove_all(tmp);
}

TEST_CASE("cli exit codes") {
    CHECK(run_cli("").exit_code == 1);                       // usage
    CHECK(run_cli("bogus-subcommand").exit_code == 1);       // usage
    CHECK(run_cli("predict --checkpoint nope.ckpt --images nodir --out nodir2").exit_code == 2);
    CHECK(run_cli("eval --pred nodir --gt nodir --out r.json").exit_code == 2);
    fs::path tmp = "mvseg_cli_tmp2";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    {
        std::ofstream cfg(tmp / "bad.cfg");
        cfg << "view_h = 33\n"; // not divisible by 32
    }
    CHECK(run_cli("audit-params --config " + (tmp / "bad.cfg").string()).exit_code == 1);
    {
        std::ofstream cfg(tmp / "unknown.cfg");
        cfg << "no_such_key = 1\n";
    }
    CHECK(run_cli("audit-params --config " + (tmp / "unknown.cfg").string()).exit_code == 1);
    fs::remove_all(tmp);
}
