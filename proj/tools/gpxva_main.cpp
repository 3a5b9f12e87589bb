#include "gpxva/scenario.hpp"

#include "gpxva/common.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"GP surrogate engine for derivative exposure and CVA simulation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    int threads = 1;
    bool dump_paths = false;

    CLI::App* run = app.add_subcommand("run", "execute the pipeline named in a scenario config");
    run->add_option("config", config_path, "scenario config file (json)")->required();
    run->add_option("--out", out_dir, "output directory (default: out)");
    run->add_option("--threads", threads, "worker threads for independent fits");
    run->add_flag("--dump-paths", dump_paths, "also write the simulated path set");

    CLI::App* schema = app.add_subcommand("schema", "print the scenario config schema");

    CLI11_PARSE(app, argc, argv);

    if (schema->parsed()) {
        std::cout << gpxva::scenario_schema();
        return 0;
    }

    try {
        gpxva::run_scenario(config_path, out_dir, threads, dump_paths);
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    } catch (const gpxva::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 3;
    } catch (const gpxva::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
