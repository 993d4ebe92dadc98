#include <iostream>

#include "normsphere/cli.hpp"

int main(int argc, char** argv) { return normsphere::cli::run(argc, argv, std::cout, std::cerr); }
