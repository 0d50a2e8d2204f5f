#include <string>
#include <vector>

#include "cdtl/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cdtl::cli::run(args);
}
