#include <iostream>

#include "dftc/cli.hpp"

int main(int argc, char** argv) { return dftc::cli::run(argc, argv, std::cout, std::cerr); }
