#include <iostream>

#include "gph/cli.hpp"

int main(int argc, char** argv) { return gph::cli::run(argc, argv, std::cout, std::cerr); }
