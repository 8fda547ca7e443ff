#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace stress::test_support {

// Fresh scratch directory under the build tree (or /tmp outside ctest).
inline std::filesystem::path scratch_dir(const std::string& name) {
    const char* base = std::getenv("STRESS_TEST_TMP");
    std::filesystem::path dir = std::filesystem::path(base ? base : "/tmp/stress_tests") / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace stress::test_support
