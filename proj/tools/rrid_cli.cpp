#include <iostream>

#include "rrid/cli.hpp"

int main(int argc, char** argv) { return rrid::cli::run(argc, argv, std::cout, std::cerr); }
