#include <iostream>
#include <string>
#include <vector>

#include "rfat/cli.hpp"

int main(int argc, char** argv) {
    return rfat::run_command(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
