#include <iostream>

#include "slicesim/cli.hpp"

int main(int argc, char** argv) { return slicesim::cli::run(argc, argv, std::cout, std::cerr); }
