#include <vector>

#include "chl/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return chl::run_cli(args);
}
