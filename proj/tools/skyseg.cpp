#include <iostream>

#include "skyseg/cli/cli.hpp"

int main(int argc, char** argv) { return skyseg::cli::run(argc, argv, std::cout, std::cerr); }
