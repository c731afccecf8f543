#include <iostream>

#include "vqdm/cli.hpp"

int main(int argc, char** argv) { return vqdm::run_cli(argc, argv, std::cout, std::cerr); }
