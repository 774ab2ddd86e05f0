#include <vector>

#include "mmrec/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return mmrec::cli::run_cli(std::move(args));
}
