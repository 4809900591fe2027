#include <iostream>

#include "vmp/cli.hpp"

int main(int argc, char** argv) { return vmp::cli::run(argc, argv, std::cout, std::cerr); }
