#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fmprog/config.hpp"
#include "fmprog/program_ir.hpp"
#include "fmprog/report.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

int cmd_parse(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << path << ": cannot read file\n";
        return kRuntime;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    const auto registry = fmp::FunctionRegistry::standard();
    fmp::ProgramIR ir;
    try {
        ir = fmp::parse_program(ss.str(), registry);
    } catch (const fmp::ParseError& e) {
        std::cerr << path << ":" << e.what() << '\n';
        return kRuntime;
    }
    const auto diagnostics = fmp::validate_program(ir, registry);
    for (const auto& d : diagnostics) std::cerr << path << ":" << fmp::to_string(d.pos) << ": " << d.message << '\n';
    if (!diagnostics.empty()) return kRuntime;

    std::cout << "N=" << ir.num_sites() << ":";
    for (std::size_t i = 0; i < ir.call_sites.size(); ++i)
        std::cout << (i ? ", " : " ") << ir.call_sites[i].function;
    std::cout << '\n';
    return 0;
}

int cmd_run(const std::string& config_path, unsigned jobs, const std::string& output) {
    try {
        fmp::RunConfig config = fmp::load_config(config_path);
        if (!output.empty()) config.output = output;
        const auto root = fmp::run_config(config, fmp::default_output_root(), jobs, &std::cerr);
        std::cout << root.string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}

int cmd_report(const std::vector<std::string>& dirs, bool svg, const std::string& out) {
    try {
        std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
        const std::filesystem::path out_dir = out.empty() ? paths.front() : std::filesystem::path(out);
        const auto report = fmp::write_report(paths, out_dir, svg);
        for (const auto& p : report.problems) std::cerr << "warning: " << p << '\n';
        std::cout << (out_dir / "pareto.csv").string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cost-aware structured routing for foundation-model programs"};
    app.require_subcommand(1);

    std::string parse_file;
    auto* parse = app.add_subcommand("parse", "Parse a program and list its call sites");
    parse->add_option("file", parse_file, "Program file (.fmp)")->required();

    std::string config_path, run_output;
    unsigned jobs = 1;
    auto* run = app.add_subcommand("run", "Run a configuration grid");
    run->add_option("--config", config_path, "Run configuration (JSON)")->required();
    run->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    run->add_option("--output", run_output, "Output root (overrides the config and FMPROG_OUTPUT_ROOT)");

    std::vector<std::string> report_dirs;
    bool svg = false;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Aggregate run summaries into pareto.csv");
    report->add_option("dirs", report_dirs, "Run directories")->required();
    report->add_flag("--svg", svg, "Also write pareto.svg");
    report->add_option("--out", report_out, "Where to write (default: first directory)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    if (*parse) return cmd_parse(parse_file);
    if (*run) return cmd_run(config_path, jobs, run_output);
    if (*report) return cmd_report(report_dirs, svg, report_out);
    return kUsage;
}
