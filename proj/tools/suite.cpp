#include <cstdio>
#include <filesystem>

#include <CLI11.hpp>

#include "hnav/hnav.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Run a scenario x method x seed suite and write CSV summaries."};
    std::string suite_path;
    std::string out;
    std::size_t jobs = 1;
    app.add_option("--suite", suite_path, "Suite JSON file")->required();
    app.add_option("--out", out, "Output directory (overrides the suite's out_dir)");
    app.add_option("--jobs", jobs, "Parallel workers")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    try {
        auto doc = hnav::load_suite_file(suite_path);
        if (!out.empty()) doc.out_dir = out;
        if (doc.out_dir.empty()) doc.out_dir = "suite_out";
        const auto result = hnav::run_suite(doc, jobs);

        std::size_t failed = 0;
        for (const auto& r : result.rows) failed += r.status == "ok" ? 0 : 1;
        std::printf("%zu runs, %zu failed -> %s\n", result.rows.size(), failed,
                    (std::filesystem::path(doc.out_dir) / "summary.csv").c_str());
        if (result.oracle)
            for (const auto& m : result.oracle->methods)
                std::printf("oracle %s: %zu/%zu agree (%zu skipped)\n", m.method.c_str(), m.matched, m.total,
                            m.skipped.size());
        return 0;
    } catch (const hnav::Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
