#include <iostream>
#include <string>
#include <vector>

#include "radgs/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    return radgs::run_cli(args, std::cout, std::cerr);
}
