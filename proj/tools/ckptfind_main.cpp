// SPDX-License-Identifier: Apache-2.0
//
// ckptfind <trace-file> [--format text|tsv] [-o report]
//
// Reads an execution trace and reports the minimal set of program locations
// that must be checkpointed to restart the main loop.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ftmatch/ckptfind.hpp"

int main(int argc, char** argv) {
    CLI::App app{"checkpoint-set finder for execution traces"};
    std::string trace_file;
    std::string format = "text";
    std::string output;
    app.add_option("trace-file", trace_file, "input trace")->required();
    app.add_option("--format", format, "report format")
        ->check(CLI::IsMember({"text", "tsv"}));
    app.add_option("-o,--output", output, "write report to a file instead of stdout");
    CLI11_PARSE(app, argc, argv);

    std::ifstream in(trace_file);
    if (!in) {
        std::cerr << "ckptfind: cannot open " << trace_file << "\n";
        return 1;
    }
    try {
        auto report = ftmatch::cf::format_report(ftmatch::cf::analyze(in), format);
        if (output.empty()) {
            std::cout << report;
        } else {
            std::ofstream out(output, std::ios::trunc);
            if (!out) {
                std::cerr << "ckptfind: cannot write " << output << "\n";
                return 1;
            }
            out << report;
        }
    } catch (const ftmatch::cf::ParseError& e) {
        std::cerr << "ckptfind: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "ckptfind: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
