#include <iostream>

#include "statesoup_cli/cli.hpp"

int main(int argc, char** argv) { return statesoup::cli::run(argc, argv, std::cout, std::cerr); }
